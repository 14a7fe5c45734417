"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so the grouping matters:
``InputError`` and ``DataFormatError`` are data-validation failures,
``ModelFileError`` subclasses are load failures, ``NumericError`` covers
non-finite arithmetic.
"""


class ExposeError(Exception):
    """Base class for all library errors."""


class InputError(ExposeError, ValueError):
    """Invalid argument: wrong dimension, empty dataset, bad parameter."""


class DataFormatError(ExposeError, ValueError):
    """A data file could not be parsed.

    ``location`` is a human readable position such as ``"line 4, column 2"``.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} ({location})"
        super().__init__(message)


class SamplerExhaustedError(InputError):
    pass


class NumericError(ExposeError, ArithmeticError):
    pass


class ModelFileError(ExposeError):
    """Base class for model file load failures."""


class VersionMismatchError(ModelFileError):
    pass


class TruncatedModelError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


class ModelConsistencyError(ModelFileError):
    """Header fields disagree with each other or with the payload."""

    def __init__(self, message, declared=None, found=None):
        self.declared = declared
        self.found = found
        super().__init__(message)
