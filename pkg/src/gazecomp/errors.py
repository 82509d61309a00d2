"""Exception types shared across the package.

The CLI maps these onto exit codes: usage/config problems -> 1,
malformed data -> 2, numeric failures -> 3.
"""


class GazecompError(Exception):
    """Base class for all package errors."""


class ShapeError(GazecompError, ValueError):
    """Operands do not conform (matrix dims, sequence lengths, ...)."""


class TapeError(GazecompError, RuntimeError):
    """Misuse of an autodiff tape, e.g. backward called twice."""


class DataFormatError(GazecompError):
    """Malformed input file; message carries path and line number."""


class ConfigError(GazecompError):
    """Invalid configuration key, value, or architecture wiring."""


class NumericError(GazecompError):
    """Non-finite loss or gradient, or a failed numeric check."""
