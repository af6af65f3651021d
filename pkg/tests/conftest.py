import itertools

import numpy as np
import pytest

from dynggm.graphs import Graph


def random_graph(p: int, rng: np.random.Generator, density: float = 0.4) -> Graph:
    n_pairs = p * (p - 1) // 2
    bits = rng.random(n_pairs) < density
    mask = 0
    for i, b in enumerate(bits):
        if b:
            mask |= 1 << i
    return Graph(p, mask)


def all_subsets(nodes):
    for r in range(len(nodes) + 1):
        yield from itertools.combinations(nodes, r)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
