"""Deterministic random streams.

Every stream is a Philox-4x64 counter-based generator (Salmon et al. 2011,
as shipped by numpy). Its 128-bit key is the first 16 bytes of
``blake2b(seed_le_u64 || tag_utf8, digest_size=16)``, interpreted as two
little-endian u64 words, and the counter starts at zero. Any language with a
Philox-4x64-10 implementation and BLAKE2b can reproduce the streams.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

U64_MASK = (1 << 64) - 1


def derive_key(seed: int, tag: str) -> np.ndarray:
    digest = hashlib.blake2b(
        struct.pack("<Q", seed & U64_MASK) + tag.encode("utf-8"), digest_size=16
    ).digest()
    return np.frombuffer(digest, dtype="<u8").astype(np.uint64)


def derive_seed(seed: int, tag: str) -> int:
    """Child u64 seed for a named purpose, e.g. one pipeline stage."""
    digest = hashlib.blake2b(
        struct.pack("<Q", seed & U64_MASK) + tag.encode("utf-8"), digest_size=8
    ).digest()
    return struct.unpack("<Q", digest)[0]


def stream(seed: int, tag: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(seed, tag)))
