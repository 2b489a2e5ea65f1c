"""Counter-based random stream derivation.

Every (replica, layer) pair gets its own Philox generator whose 128-bit
key is a SplitMix64 hash of (master_seed, replica, layer).  Streams are
therefore independent of scheduling order and of the number of workers:
the same triple always yields the same stream, and distinct triples get
distinct keys.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF


def _splitmix64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def stream_key(master_seed: int, replica: int, layer: int) -> np.ndarray:
    """128-bit Philox key for one (replica, layer) slot."""
    h = _splitmix64(master_seed & _MASK)
    h = _splitmix64(h ^ _splitmix64((replica & _MASK) * 0xC2B2AE3D27D4EB4F & _MASK))
    k0 = _splitmix64(h ^ _splitmix64((layer & _MASK) * 0x165667B19E3779F9 & _MASK))
    k1 = _splitmix64(k0)
    return np.array([k0, k1], dtype=np.uint64)


def seed_stream(master_seed: int, replica: int, layer: int = 0) -> np.random.Generator:
    """Independent generator for a (replica, layer) slot of one run."""
    return np.random.Generator(np.random.Philox(key=stream_key(master_seed, replica, layer)))
