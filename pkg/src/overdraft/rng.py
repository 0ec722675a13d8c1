"""Counter-based 64-bit random streams (SplitMix64) and hashing helpers.

Every walk of the confidence estimator owns an independent stream keyed by
``(seed, walk_index)``, so sequential, chunked and parallel runs replay the
same draws.
"""

from __future__ import annotations

import hashlib

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """SplitMix64 finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_base(seed: int) -> int:
    # scrambled first so that the key sets of nearby seeds do not overlap
    return mix64(seed & MASK64)


def walk_key(seed: int, index: int) -> int:
    """Key of the substream used by walk ``index``."""
    return mix64(stream_base(seed) ^ index)


class SplitMix64:
    """Sequential view of a counter-based stream: draw n is mix64(key + n*gamma)."""

    __slots__ = ("state",)

    def __init__(self, key: int) -> None:
        self.state = key & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Double in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def bernoulli(self, p: float) -> bool:
        return self.uniform() < p


def hash64(*parts: object) -> int:
    """Stable 64-bit hash of the string forms of ``parts``."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")
