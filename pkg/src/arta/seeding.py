"""Master-seed expansion.

Every consumer of randomness asks for a named stream; the stream is a
Philox generator keyed by (master seed, crc32(name), index), so streams are
independent of each other and of the order in which they are requested.
"""

from __future__ import annotations

import zlib

import numpy as np


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    key = (zlib.crc32(name.encode("utf-8")),) + tuple(int(i) for i in index)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
