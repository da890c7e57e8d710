"""Seeded random number generation.

All stochastic code in the package draws from numpy's PCG64 generator and
takes either an integer seed or an already-constructed ``numpy.random.Generator``.
Derived streams (one per dataset sample, per GA run, ...) are built from a
``SeedSequence`` keyed on (seed, *stream keys), which is stable across
platforms and numpy versions.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Return a PCG64 generator; pass Generators through unchanged."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def derived_rng(seed: int, *keys: int) -> np.random.Generator:
    """Deterministic child stream for (seed, keys), independent across keys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))
