"""Deterministic sub-seed derivation.

Every randomized stage gets its own 64-bit seed computed from
``(global_seed, scene_id, stage)``.  Strings are hashed with BLAKE2b (stable
across processes, unlike ``hash()``) and mixed with the SplitMix64 finalizer::

    x = global_seed
    for token in (scene_id, stage):
        x = splitmix64(x ^ blake2b_64(token))
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def token_hash(token) -> int:
    digest = hashlib.blake2b(str(token).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(global_seed: int, scene_id, stage: str) -> int:
    """64-bit seed for one (scene, stage) pair; usable directly with ``numpy.random.default_rng``."""
    x = int(global_seed) & MASK64
    for token in (scene_id, stage):
        x = splitmix64(x ^ token_hash(token))
    return x
