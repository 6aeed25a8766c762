"""Named random streams derived from a single master seed.

Every stochastic component (model generation, data generation, weight init,
batch shuffling) pulls from its own named stream so that commands are
reproducible independently of each other.
"""

import zlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the given master seed and stream name."""
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence((int(seed), tag)))
