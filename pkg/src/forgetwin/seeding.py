"""Named random sub-streams derived from one root seed.

``substream(7, "reset", 3)`` always yields the same generator, no matter
which other streams were drawn from before it.
"""
import zlib

import numpy as np


def substream(root_seed: int, name: str, *index: int) -> np.random.Generator:
    key = [int(root_seed) & 0xFFFFFFFF, zlib.crc32(name.encode())] + [int(i) for i in index]
    return np.random.default_rng(np.random.SeedSequence(key))
