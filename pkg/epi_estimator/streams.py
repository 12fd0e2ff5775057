"""
Seeded random streams.

Every random draw in the package comes from a numpy PCG64 generator built from a
``SeedSequence``. Replicates get their own stream by spawn key, so results do
not depend on which worker runs them or in which order.

Stream keys used across the package:

* simulation study: ``(cell, replicate, purpose)``, purpose one of SIMULATE,
  MASK, ORACLE, MCMC, LAYOUT, OUTER
* bootstrap: ``(OUTER, b)``, ``(INNER, b, b_inner)``, ``(SE, b)``
* MCMC: ``(chain,)``
"""

from typing import Union

import numpy as np

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]

# purpose tags for spawn keys
OUTER = 0
INNER = 1
SE = 2
SIMULATE = 3
MASK = 4
MCMC = 5
ORACLE = 6
LAYOUT = 7


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Returns a Generator; an existing Generator is passed through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream identified by ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


def child_seed(rng: np.random.Generator) -> int:
    """Draws a 63-bit integer seed for a nested computation."""
    return int(rng.integers(0, 2**63 - 1))
