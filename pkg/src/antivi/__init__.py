"""Antithetic Gaussian sampling with exact moment matching, and its use in variational inference."""

from __future__ import annotations

from . import antithetic, autodiff, constrained, randkit, stats, transforms, vi
from .errors import (
    AntiviError,
    ConfigError,
    ConstraintError,
    DegenerateInputError,
    DivergenceError,
    DomainError,
    NonFiniteError,
    ShapeError,
    TapeError,
)

__version__ = "0.1.0"

__all__ = [
    "antithetic",
    "autodiff",
    "constrained",
    "randkit",
    "stats",
    "transforms",
    "vi",
    "AntiviError",
    "ConfigError",
    "ConstraintError",
    "DegenerateInputError",
    "DivergenceError",
    "DomainError",
    "NonFiniteError",
    "ShapeError",
    "TapeError",
]
