"""Exception types shared across the package."""

from __future__ import annotations


class QYSError(Exception):
    """Base class for all package errors."""


class TipSingularity(QYSError):
    """Raised when a right-hand side is evaluated at psi <= PSI_MIN."""


class NonFiniteResult(QYSError):
    """Raised when a formula overflows or produces NaN."""


class NonPositiveRbar(QYSError):
    """Raised when tip mode is requested with rbar <= 0."""


class NoSignChange(QYSError):
    """Raised when an event bracket does not straddle a root."""


class DegenerateInterval(QYSError):
    """Raised when an exact family has no valid domain around the base point."""


class ConfigError(QYSError):
    """Raised for malformed or schema-violating run configuration."""
