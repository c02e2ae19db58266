"""Goldstein-Kac velocity-switching process: Monte Carlo, PDE solvers, moments, boosts."""

__version__ = "0.1.0"

from .core import FieldPair, Grid1D, ModelParams, SpacetimeEvent, path_rng, validate_params  # noqa: E402

__all__ = ["FieldPair", "Grid1D", "ModelParams", "SpacetimeEvent", "path_rng", "validate_params", "__version__"]
