"""Exception hierarchy shared by every module."""

from __future__ import annotations


class AntiviError(Exception):
    """Base class for all library errors."""


class DomainError(AntiviError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ShapeError(AntiviError, ValueError):
    """Vector lengths or array shapes do not agree."""


class DegenerateInputError(AntiviError, ArithmeticError):
    """Input would require dividing by (numerically) zero."""


class ConstraintError(AntiviError, ValueError):
    """Parameters violate a structural constraint (e.g. flow invertibility)."""


class ConfigError(AntiviError, ValueError):
    """Invalid run or training configuration."""


class NonFiniteError(AntiviError, ArithmeticError):
    """A tape node produced a non-finite value that reached the backward pass."""

    def __init__(self, message: str, op: str | None = None):
        super().__init__(message)
        self.op = op


class TapeError(AntiviError, RuntimeError):
    """Misuse of a gradient tape (foreign variables, wrong output)."""


class DivergenceError(AntiviError, RuntimeError):
    """Training produced a non-finite objective."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []
