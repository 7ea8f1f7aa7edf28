"""Deterministic random stream derivation.

Every consumer of randomness gets its own stream keyed by (seed, tag, round),
so adding or removing one consumer never shifts the draws seen by another.
Tags are hashed with SHA-256 rather than Python's salted ``hash`` so streams
are stable across interpreter invocations and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_entropy(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:8], "little")


def stream(seed: int, tag: str, round_index: int = 0) -> np.random.Generator:
    """Return an independent generator for (seed, tag, round_index)."""
    ss = np.random.SeedSequence(
        entropy=[int(seed) & (2**64 - 1), _tag_entropy(tag), int(round_index) & (2**64 - 1)]
    )
    return np.random.default_rng(ss)


def derive_seed(base_seed: int, token: str) -> int:
    """Derive a child seed from a base seed and an arbitrary string token."""
    digest = hashlib.sha256(f"{base_seed}:{token}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)
