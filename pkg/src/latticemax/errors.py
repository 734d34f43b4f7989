"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so each class carries the payload a
caller needs to recover (for example the exact count when enumeration is
refused).
"""

from __future__ import annotations


class LatticeMaxError(Exception):
    """Base class for all package errors."""


class BudgetExceededError(LatticeMaxError):
    """A computation would exceed its configured work or memory budget."""

    def __init__(self, message: str, required: int | None = None, budget: int | None = None):
        super().__init__(message)
        self.required = required
        self.budget = budget


class EnumerationCapError(BudgetExceededError):
    """Enumeration refused; ``count`` holds the exact number of points."""

    def __init__(self, message: str, count: int):
        super().__init__(message)
        self.count = count


class EmbeddingError(LatticeMaxError):
    """A ball of radius N does not embed in the torus (2*floor(N)+1 > M)."""


class RegimeError(LatticeMaxError):
    """A hypothesis on (d, N) required by a multiplier estimate fails."""


class CoverageGapError(LatticeMaxError):
    """The three dyadic regimes do not cover the requested radii."""


class ShapeMismatchError(LatticeMaxError):
    """Fields or systems with incompatible (M, d, n)."""


class NotHermitianError(LatticeMaxError):
    """An input that must be selfadjoint is not."""


class ConfigError(LatticeMaxError):
    """Invalid experiment configuration."""


class InequalityViolation(LatticeMaxError):
    """A verified inequality failed beyond tolerance; ``rows`` are the offenders."""

    def __init__(self, message: str, rows: list | None = None):
        super().__init__(message)
        self.rows = rows or []
