"""Exception types shared across the package.

Everything derives from DgtrError so the command-line layer can catch one
type, print a single-line diagnostic, and exit nonzero.
"""


class DgtrError(ValueError):
    """Base class for all errors raised by this package."""


class ShapeError(DgtrError):
    """An operand has the wrong shape or dimensionality."""


class ConfigError(DgtrError):
    """A configuration value is missing, unknown, or inconsistent."""


class NumericError(DgtrError):
    """A numeric contract was violated (NaN input, NaN gradient, ...)."""


class ContractError(DgtrError):
    """A call violated an API precondition (mismatched lengths, non-scalar loss, ...)."""


class CameraError(DgtrError):
    """Camera parameters are invalid (non-positive scale)."""


class AlignmentError(DgtrError):
    """Point clouds cannot be aligned (degenerate, zero variance)."""


class FormatError(DgtrError):
    """A binary file is malformed (bad magic, truncated payload, ...)."""
