"""Named, counter-based random streams derived from a single 64-bit seed.

Every stochastic routine in the package receives an explicit
``numpy.random.Generator``.  Streams are derived from a root seed plus a
tuple of integer keys (e.g. chain iteration, segment, temperature step,
particle index), so that two evaluations with the same key always see the
same randomness regardless of execution order or thread scheduling.  The
bit generator is Philox, a counter-based generator, so derived streams are
statistically independent by construction.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["StreamFactory", "stream"]

_U64 = np.uint64


def _mix(label: str) -> int:
    # Stable 64-bit hash of a text label (not Python's salted hash()).
    digest = hashlib.blake2b(label.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class StreamFactory:
    """Derives independent Philox generators from one root seed.

    Keys are tuples of non-negative integers, optionally prefixed by a text
    label.  The same (seed, label, key) always yields a generator with the
    same state.
    """

    def __init__(self, seed: int, label: str = ""):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        self._seed = int(seed)
        self._label = label

    def stream(self, *key: int) -> np.random.Generator:
        material = repr((self._seed, self._label) + tuple(int(k) for k in key))
        digest = hashlib.blake2b(material.encode(), digest_size=16).digest()
        philox_key = np.frombuffer(digest, dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=philox_key))

    def labelled(self, label: str) -> "StreamFactory":
        """A sub-factory whose streams never collide with other labels."""
        sub = StreamFactory(self._seed, label=f"{self._label}/{label}" if self._label else label)
        return sub

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def label(self) -> str:
        return self._label


def stream(seed: int, *key: int) -> np.random.Generator:
    """One-off derived stream; shorthand for ``StreamFactory(seed).stream(*key)``."""
    return StreamFactory(seed).stream(*key)
