"""Gradation-profile optimization for two-phase thermoelastic plates."""

__version__ = "0.1.0"

from . import errors, profiles, rng  # noqa: F401
from . import fem, ga, neural, pipeline, problems, verification  # noqa: F401
