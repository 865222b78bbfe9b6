"""Portable counter-based random stream.

The generator is SplitMix64 evaluated in counter mode: output ``i`` (0-based)
of the stream for ``seed`` is

    z = (seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    out = z ^ (z >> 31)

which is exactly the sequence produced by the classic stateful SplitMix64
seeded with ``seed``. Uniform doubles on the open interval (0, 1) are
``((out >> 11) + 0.5) * 2**-53``. Any language with wrapping 64-bit integer
arithmetic reproduces the stream bit for bit.
"""

from __future__ import annotations

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def splitmix64(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Return outputs ``offset .. offset+n-1`` of the stream as uint64."""
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    counter = np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
    # uint64 array arithmetic wraps modulo 2**64
    z = np.uint64(seed) + counter * np.uint64(GOLDEN_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


def uniform_open(seed: int, n: int, offset: int = 0) -> np.ndarray:
    """Float64 samples strictly inside (0, 1)."""
    bits = splitmix64(seed, n, offset) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53
