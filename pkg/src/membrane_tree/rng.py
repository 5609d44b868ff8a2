"""Counter-based random streams.

Replicate r of a run seeded with ``seed`` always draws from the same Philox
stream, whatever order or process the replicates are generated in.
"""

import numpy as np

REPLICATE_SIZE = 1024


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate),))
    return np.random.Generator(np.random.Philox(ss))


def replicate_slices(count: int, size: int = REPLICATE_SIZE):
    """(replicate index, start, stop) covering range(count)."""
    for r, start in enumerate(range(0, count, size)):
        yield r, start, min(start + size, count)
