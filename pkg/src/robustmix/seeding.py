"""Deterministic seed derivation.

Every stochastic component draws from its own stream, derived by stable
hashing of (global seed, component name). Streams never interleave, so
e.g. forcing the mixup coefficient to 1 leaves the data-order and
weight-init streams untouched and trainer reductions hold bitwise.
"""

import hashlib

import numpy as np


def derive_seed(seed: int, *parts) -> int:
    """Stable 63-bit seed for a named component under a global seed."""
    key = str(int(seed)) + "/" + "/".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & 0x7FFF_FFFF_FFFF_FFFF


def derive_rng(seed: int, *parts) -> np.random.Generator:
    """numpy Generator on the stream named by `parts`."""
    return np.random.default_rng(derive_seed(seed, *parts))


def as_rng(rng_or_seed) -> np.random.Generator:
    """Accept either an int seed or an existing Generator."""
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return np.random.default_rng(int(rng_or_seed))
