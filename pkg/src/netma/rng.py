"""Named random streams derived from one 64-bit seed.

Every randomized step asks for ``stream(seed, purpose, replication)``; the
stream is keyed by a CRC32 of the purpose string, so results do not depend
on the order in which streams are created or on how work is scheduled.
"""

import zlib

import numpy as np


def purpose_key(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, replication: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(
        int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=(purpose_key(purpose), int(replication)),
    )
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
