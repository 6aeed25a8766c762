"""Exception types shared across the package.

The CLI maps these onto exit codes: usage errors -> 1, data errors -> 2,
numeric failures -> 3.
"""


class DamdnetError(Exception):
    """Base class for all package errors."""


class DimensionError(DamdnetError):
    """Shapes of tensor operands are incompatible (message names the axis)."""


class ConfigError(DamdnetError):
    """An operation was configured inconsistently (groups, variants, ...)."""


class InvalidPoseError(DamdnetError):
    """A 12-dim pose block does not decode to a valid similarity transform."""


class DataError(DamdnetError):
    """A file could not be read, parsed or validated."""


class NumericError(DamdnetError):
    """A numeric failure (NaN/Inf) was detected during optimization."""
