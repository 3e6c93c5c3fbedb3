"""Deterministic, splittable random streams.

Streams are Philox counter-based generators identified by a two-word key.
The draw consumed by an array entry depends only on the stream key and the
entry's flat index, never on scheduling or chunking, so any consumer that
requests one block of draws per tensor is reproducible bit-for-bit.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_MASK32 = (1 << 32) - 1


def derive_member_seed(base_seed: int, index: int) -> int:
    """Per-member seed derived from a run seed; injective in index < 2**32."""
    return ((int(base_seed) << 32) ^ (int(index) & _MASK32)) & _MASK64


def stream(key: int, subkey: int = 0) -> np.random.Generator:
    """Generator positioned at the start of the (key, subkey) stream."""
    words = np.array([int(key) & _MASK64, int(subkey) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=words))
