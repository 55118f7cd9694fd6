"""Seeded random streams.

Every random draw in the package goes through a Philox (counter-based)
bit generator.  A stream is identified by a master seed plus a tuple of
non-negative integer keys, e.g. ``stream(seed, grid_index, rep)``.  The keys
are folded into a :class:`numpy.random.SeedSequence` entropy pool, so two
streams with different key tuples are statistically independent and a
given key tuple always yields the same draws, regardless of which other
streams were created before it or in which process.
"""
from __future__ import annotations

import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return the generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def substream_seed(seed: int, *keys: int) -> int:
    """Derive a 63-bit integer seed for the substream ``(seed, *keys)``.

    Used where an API takes a plain integer seed (estimators, kmeans) and the
    caller needs one per repetition / per k.
    """
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
