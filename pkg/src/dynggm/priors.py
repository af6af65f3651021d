"""Priors over change-point configurations and graph sequences.

The number of change points is truncated-geometric on {0, ..., K}, where K
is the largest count compatible with the minimum span; given the count, the
configuration is uniform over the feasible ordered tuples, whose cardinality
has a stars-and-bars closed form.  Graphs start from independent Bernoulli
edges and evolve by independent edge flips at each change point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, flip_mask

__all__ = [
    "ChangePointConfig",
    "ModelHyperparams",
    "max_changepoints",
    "count_configs",
    "log_prior_config",
    "expected_kappa",
    "log_graph_initial_prior",
    "log_graph_transition_prior",
    "sample_prior",
    "sample_config",
]

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ChangePointConfig:
    """Ordered change points in {2..T} under the minimum-span constraint.

    Conventions c_0 = 1 and c_{kappa+1} = T + 1; every segment
    [c_j, c_{j+1}) must contain at least ``ell`` time points.
    """

    T: int
    ell: int
    points: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(int(t) for t in self.points))
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.T < 1:
            raise ValueError("T must be >= 1")

    @property
    def kappa(self) -> int:
        return len(self.points)

    def is_feasible(self) -> bool:
        cuts = (1,) + self.points + (self.T + 1,)
        if any(not 2 <= t <= self.T for t in self.points):
            return False
        return all(b - a >= self.ell for a, b in zip(cuts, cuts[1:]))

    def segments(self) -> list[tuple[int, int]]:
        """Half-open segments [start, end), 1-based times."""
        cuts = (1,) + self.points + (self.T + 1,)
        return list(zip(cuts, cuts[1:]))

    def with_points(self, points) -> "ChangePointConfig":
        return ChangePointConfig(self.T, self.ell, tuple(sorted(points)))


@dataclass(frozen=True)
class ModelHyperparams:
    """Graph sparsity omega, change impact z, geometric p0, span ell, and
    the G-Wishart (d, D)."""

    p: int
    omega: float
    z: float
    p0: float
    ell: int
    d: float = 3.0
    D: np.ndarray | None = None

    def __post_init__(self):
        hi = (self.p - 1) / 2 if self.p > 1 else 0.0
        if self.p > 1 and not 0.0 <= self.omega <= hi:
            raise ValueError(f"omega must lie in [0, {hi}]")
        if self.p > 1 and not 0.0 <= self.z <= hi:
            raise ValueError(f"z must lie in [0, {hi}]")
        if not 0.0 < self.p0 < 1.0:
            raise ValueError("p0 must lie in (0, 1)")
        if self.ell < 1:
            raise ValueError("ell must be >= 1")
        if self.D is None:
            object.__setattr__(self, "D", np.eye(self.p))
        else:
            object.__setattr__(self, "D", np.asarray(self.D, dtype=float))

    @property
    def edge_prob(self) -> float:
        return 2.0 * self.omega / (self.p - 1) if self.p > 1 else 0.0

    @property
    def flip_prob(self) -> float:
        return 2.0 * self.z / (self.p - 1) if self.p > 1 else 0.0


def max_changepoints(T: int, ell: int) -> int:
    """Largest kappa with (kappa + 1) * ell <= T."""
    if T < ell:
        raise ValueError("T must be at least ell")
    return T // ell - 1


def count_configs(T: int, ell: int, kappa: int) -> int:
    """|T_{kappa, ell}|: ordered kappa-tuples under the span constraint.

    Equals the number of compositions of T into kappa + 1 parts each >= ell,
    i.e. C(T - (kappa+1) ell + kappa, kappa).
    """
    if kappa < 0:
        return 0
    slack = T - (kappa + 1) * ell
    if slack < 0:
        return 0
    return math.comb(slack + kappa, kappa)


def _log_trunc_geom(kappa: int, p0: float, K: int) -> float:
    if kappa < 0 or kappa > K:
        return NEG_INF
    return (
        math.log(p0)
        + kappa * math.log1p(-p0)
        - math.log1p(-((1.0 - p0) ** (K + 1)))
    )


def log_prior_config(c: ChangePointConfig, hp: ModelHyperparams) -> float:
    """log P(kappa) + log P(c | kappa); -inf for infeasible configurations."""
    if not c.is_feasible():
        return NEG_INF
    K = max_changepoints(c.T, c.ell)
    n_configs = count_configs(c.T, c.ell, c.kappa)
    if n_configs == 0:
        return NEG_INF
    return _log_trunc_geom(c.kappa, hp.p0, K) - math.log(n_configs)


def expected_kappa(p0: float, T: int, ell: int) -> float:
    """Closed-form prior mean of the number of change points."""
    K = max_changepoints(T, ell)
    q = 1.0 - p0
    return (q / p0) * (1.0 - q**K * (p0 * K + 1.0)) / (1.0 - q ** (K + 1))


def log_graph_initial_prior(g: Graph, hp: ModelHyperparams) -> float:
    """Independent Bernoulli(2 omega / (p-1)) edges."""
    if g.p == 1:
        return 0.0
    q = hp.edge_prob
    ones = g.n_edges
    zeros = g.p * (g.p - 1) // 2 - ones
    if ones and q == 0.0:
        return NEG_INF
    if zeros and q == 1.0:
        return NEG_INF
    term_one = ones * math.log(q) if ones else 0.0
    term_zero = zeros * math.log1p(-q) if zeros else 0.0
    return term_one + term_zero


def log_graph_transition_prior(
    g_new: Graph, g_old: Graph, hp: ModelHyperparams
) -> float:
    """Each edge indicator flips independently with probability 2z/(p-1)."""
    if g_new.p != g_old.p:
        raise ValueError("graphs must share the node set")
    if g_new.p == 1:
        return 0.0
    q = hp.flip_prob
    flips = (g_new.edge_mask ^ g_old.edge_mask).bit_count()
    stays = g_new.p * (g_new.p - 1) // 2 - flips
    if flips and q == 0.0:
        return NEG_INF
    if stays and q == 1.0:
        return NEG_INF
    term_flip = flips * math.log(q) if flips else 0.0
    term_stay = stays * math.log1p(-q) if stays else 0.0
    return term_flip + term_stay



# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _unrank_combination(n: int, k: int, rank: int) -> list[int]:
    """The rank-th (0-based) strictly increasing k-subset of {0..n-1} in
    lexicographic order."""
    out = []
    x = 0
    for slot in range(k, 0, -1):
        while True:
            c = math.comb(n - x - 1, slot - 1)
            if rank < c:
                out.append(x)
                x += 1
                break
            rank -= c
            x += 1
    return out


def sample_config(
    T: int, ell: int, hp: ModelHyperparams, rng: np.random.Generator
) -> ChangePointConfig:
    """Draw kappa from the truncated geometric, then a uniform feasible
    configuration by combinatorial unranking (no rejection)."""
    K = max_changepoints(T, ell)
    q = 1.0 - hp.p0
    pmf = hp.p0 * q ** np.arange(K + 1)
    pmf /= pmf.sum()
    kappa = int(rng.choice(K + 1, p=pmf))
    if kappa == 0:
        return ChangePointConfig(T, ell)
    # non-decreasing b_1 <= ... <= b_kappa in {1..M}  ->  c_j = b_j + j*ell
    m = T + 1 - (kappa + 1) * ell  # b range size
    total = math.comb(m + kappa - 1, kappa)
    rank = int(rng.integers(total))
    strict = _unrank_combination(m + kappa - 1, kappa, rank)
    points = tuple(
        (s - j) + 1 + (j + 1) * ell for j, s in enumerate(sorted(strict))
    )
    return ChangePointConfig(T, ell, points)


def sample_prior(
    hp: ModelHyperparams,
    T: int,
    rng: np.random.Generator,
) -> tuple[ChangePointConfig, list[Graph]]:
    """Draw (configuration, per-segment graph sequence) from the prior."""
    config = sample_config(T, hp.ell, hp, rng)
    p = hp.p
    n_pairs = p * (p - 1) // 2
    graphs = []
    if n_pairs:
        bits = rng.random(n_pairs) < hp.edge_prob
        mask = 0
        for i, b in enumerate(bits):
            if b:
                mask |= 1 << i
        g = Graph(p, mask)
    else:
        g = Graph.empty(p)
    graphs.append(g)
    for _ in range(config.kappa):
        if n_pairs:
            flips = rng.random(n_pairs) < hp.flip_prob
            fmask = 0
            for i, b in enumerate(flips):
                if b:
                    fmask |= 1 << i
            g = flip_mask(g, fmask)
        graphs.append(g)
    return config, graphs
