"""Reproducible randomness built on the counter-based Philox generator.

Every random quantity in the package is drawn from a substream addressed by
``(seed, domain tag, index...)``.  Substreams with distinct addresses are
independent, and the k-th draw within a substream is a fixed function of the
address, so coupled chains can replay the identical uniform at a given
revelation position by simply sharing the drawn array.  Results are
bit-reproducible across runs and platforms.
"""

from __future__ import annotations

import numpy as np

# Domain tags.  Keep these stable: they are part of the reproducibility
# contract (same (seed, tag, index...) -> same stream forever).
FIELD = 1
CHAIN = 2
COUPLING = 3
TRACE = 4
PERCOLATION = 5
SL = 6
SAMPLER = 7
ORDERING = 8
GENERATOR = 9
PROBE = 10


def substream(seed: int, *path: int) -> np.random.Generator:
    """Philox generator at the fixed address ``(seed, *path)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))
