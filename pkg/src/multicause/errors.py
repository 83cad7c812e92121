"""Exception taxonomy for the multicause package.

Every error raised by the package derives from :class:`MulticauseError`,
so callers can catch the whole family with a single clause. Subclasses
also inherit from the closest built-in (``ValueError`` for bad inputs,
``RuntimeError`` for conditions detected during computation) to stay
idiomatic for callers that do not import this module.
"""
from __future__ import annotations


class MulticauseError(Exception):
    """Base class for all errors raised by this package."""


class SpecificationError(MulticauseError, ValueError):
    """A data-generating-process specification violates its invariants."""


class DimensionError(MulticauseError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class DomainError(MulticauseError, ValueError):
    """A scalar parameter lies outside its admissible domain."""


class DataError(MulticauseError, ValueError):
    """Input data contain non-finite or otherwise unusable values."""


class DegenerateFactorError(MulticauseError, RuntimeError):
    """Factor recovery failed: the eigenvalue structure leaves no room
    for a noise floor (for example the trailing eigenvalue block is empty
    or the leading eigenvalues do not exceed the noise estimate)."""


class DegenerateFocalError(MulticauseError, RuntimeError):
    """The focal-block bracket in a closed-form bias evaluation is
    singular, so the displacement is undefined."""


class RankDeficiencyError(MulticauseError, RuntimeError):
    """The regression design is rank deficient (condition number of the
    Gram matrix above 1e12); coefficients are not estimable."""


class CollinearityRiskError(MulticauseError, ValueError):
    """A requested fit is structurally collinear (for example the focal
    block plus the substitute confounder spans the full treatment set)."""


class ConvergenceError(MulticauseError, RuntimeError):
    """An iterative solver exhausted its iteration budget."""


class SeparationError(MulticauseError, RuntimeError):
    """A logistic fit reached perfect or quasi-perfect separation
    (unbounded linear predictor at convergence)."""


class InstabilityError(MulticauseError, RuntimeError):
    """Too many replications failed for an estimator, making the
    aggregate statistics unreliable."""


class OracleComparisonError(MulticauseError, ValueError):
    """An oracle comparison was requested for an estimator or design
    that has no registered closed-form bias."""


class ConfigError(MulticauseError, ValueError):
    """A configuration file or mapping is malformed."""
