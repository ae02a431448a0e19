"""
Seeded random streams

All randomness flows through numpy Generators on the PCG64 bit generator.
Sub-streams are keyed through SeedSequence so a stream for
("stage2",) or ("utt", 17) never depends on how much of another stream was
consumed before it.
"""

import hashlib
from typing import Union

import numpy as np

Key = Union[int, str]

SEED_MASK = (1 << 64) - 1


def _key_to_int(key: Key) -> int:
    if isinstance(key, int):
        return key & 0xFFFFFFFF
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def make_rng(seed: int) -> np.random.Generator:
    """Create a Generator for a 64-bit seed"""
    return np.random.Generator(np.random.PCG64(seed & SEED_MASK))


def derive_seed(seed: int, *keys: Key) -> int:
    """Derive a 64-bit child seed from a parent seed and a key path"""
    sequence = np.random.SeedSequence(
        entropy=seed & SEED_MASK, spawn_key=tuple(_key_to_int(k) for k in keys)
    )
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def derive_rng(seed: int, *keys: Key) -> np.random.Generator:
    """Generator for the sub-stream named by keys"""
    return make_rng(derive_seed(seed, *keys))
