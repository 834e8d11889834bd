"""Counter-based random streams.

Every stream is a Philox generator keyed by a tuple of integers (master
seed, block index, ...).  Work is split into fixed-size blocks, so the
numbers a trajectory sees never depend on how blocks map to workers.
"""

from __future__ import annotations

import numpy as np

__all__ = ["substream", "BLOCK_SIZE", "block_slices"]

BLOCK_SIZE = 4096


def substream(seed, *keys):
    if seed is None:
        raise ValueError("an explicit seed is required")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def block_slices(n, block=BLOCK_SIZE):
    return [slice(i, min(i + block, n)) for i in range(0, n, block)]
