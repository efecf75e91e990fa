"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ValidationError/ParseError/ConfigError -> 1,
IO problems -> 2, NumericError -> 3.
"""


class SteelSegError(Exception):
    """Base class for all package errors."""


class ValidationError(SteelSegError):
    """Input violates a documented precondition or invariant."""


class ParseError(ValidationError):
    """Malformed annotation or config text; message names the line."""


class DecodeError(ValidationError):
    """RLE string cannot be materialized into a mask of the given shape."""


class ConfigError(ValidationError):
    """Experiment or model configuration is inconsistent."""


class DegenerateDataError(ValidationError):
    """Data has no usable signal (e.g. zero-variance channel)."""


class ArchiveError(SteelSegError):
    """Weight archive is missing tensors or has mismatched shapes."""


class NumericError(SteelSegError):
    """Non-finite value encountered during training or loss evaluation."""
