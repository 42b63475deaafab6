"""Deterministic random streams derived from a single root seed.

Every stage and worker gets its own stream by splitting the root seed
with labeled spawn keys, so adding a consumer never shifts the draws
of another.
"""
import zlib

import numpy as np


def child_sequence(root_seed: int, *labels) -> np.random.SeedSequence:
    """Seed sequence for a labeled child stream of ``root_seed``."""
    key = tuple(zlib.crc32(str(label).encode("utf-8")) for label in labels)
    return np.random.SeedSequence(entropy=root_seed, spawn_key=key)


def rng_for(root_seed: int, *labels) -> np.random.Generator:
    """NumPy generator for a labeled child stream."""
    return np.random.default_rng(child_sequence(root_seed, *labels))


def torch_seed_for(root_seed: int, *labels) -> int:
    """32-bit seed for torch derived from the same split tree."""
    return int(rng_for(root_seed, *labels).integers(0, 2**31 - 1))
