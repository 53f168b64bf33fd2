"""Deterministic RNG substreams keyed by (master seed, string key).

Every randomized routine derives its generator from a master seed and a
stable string key (account id, market id, stage name).  Results are then
independent of processing order and worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def key_digest(key: str) -> int:
    """Stable 128-bit integer digest of a stream key."""
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:16], "big")


def substream(master_seed: int, key: str) -> np.random.Generator:
    """Generator for the named substream of a master seed."""
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(key_digest(key),))
    return np.random.default_rng(seq)
