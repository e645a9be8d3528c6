"""Exception hierarchy shared across the package.

Each class maps to one CLI exit code (see `matchiv.cli.EXIT_CODES`).
"""


class MatchIVError(Exception):
    """Base class for all package errors."""


class SchemaError(MatchIVError):
    """Input file is missing required columns or has an unknown layout."""


class ValidationError(MatchIVError):
    """Rows or matches violate panel invariants."""


class ConfigError(MatchIVError):
    """A run/simulation configuration is inconsistent or infeasible."""


class DataError(MatchIVError):
    """Data is schema-valid but logically impossible (e.g. overlapping
    matches for one player)."""


class EstimationError(MatchIVError):
    """Numerical failure in an estimator (rank deficiency, bad df)."""


class EmptySampleError(MatchIVError):
    """Sample restrictions removed every observation."""
