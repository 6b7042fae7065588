"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: validation/format
problems exit 2, numerical failures exit 3.
"""


class KcalError(Exception):
    """Base class for all package errors."""


class FormatError(KcalError):
    """A binary file does not match its declared container format."""


class SizeMismatchError(FormatError):
    """A file header declares more payload than the file contains."""


class ValidationError(KcalError, ValueError):
    """Invalid argument values or data that violates a contract."""


class NumericalError(KcalError):
    """A computation produced a non-finite result."""
