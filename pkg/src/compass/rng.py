"""Deterministic seed derivation.

Every stochastic stage derives its generator from (root seed, string tags)
so results replay bit-identically across processes and platforms.
"""

import hashlib

import numpy as np


def subseed(seed: int, *tags) -> int:
    """Stable 64-bit child seed for (seed, tags)."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode())
    for tag in tags:
        h.update(b"\x1f")
        h.update(str(tag).encode())
    return int.from_bytes(h.digest()[:8], "little")


def make_rng(seed: int, *tags) -> np.random.Generator:
    if tags:
        seed = subseed(seed, *tags)
    return np.random.Generator(np.random.PCG64(seed))
