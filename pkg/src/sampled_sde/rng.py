"""Deterministic per-path random number substreams.

Reproducibility contract: path j of an ensemble with master seed s draws
its standard normals from a counter-based Philox generator keyed with

    key = splitmix64(s XOR (j * 0x9E3779B97F4A7C15))

where splitmix64 is the public 64-bit finalizer (constants below) and the
odd multiplier is the 64-bit golden ratio.  Normals are produced by the
inverse-CDF method: the high 53 bits of each Philox word, offset by 1/2,
give a uniform strictly inside (0, 1), which is mapped through ndtri.
Streams for different keys are disjoint by construction, so results do not
depend on how paths are distributed over workers, only on (s, j).
Bit-level reproducibility is promised within this implementation only.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Philox
from scipy.special import ndtri

__all__ = ["mix", "NormalStream", "substream"]

_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U53_SCALE = 2.0 ** -53


def mix(master_seed: int, index: int) -> int:
    """splitmix64 finalizer applied to (master_seed XOR index * golden)."""
    z = (master_seed ^ (index * _GOLDEN)) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


class NormalStream:
    """Stateful standard-normal stream for one substream key."""

    def __init__(self, key: int):
        self.key = key
        self._bits = Philox(key=key)

    def take(self, count: int) -> np.ndarray:
        """Next ``count`` standard normals of this stream."""
        raw = self._bits.random_raw(count)
        u = ((raw >> 11) + 0.5) * _U53_SCALE
        return ndtri(u)


def substream(master_seed: int, index: int) -> NormalStream:
    """Normal stream for path ``index`` under ``master_seed``."""
    return NormalStream(mix(master_seed, index))
