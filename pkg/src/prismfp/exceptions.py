"""Exception hierarchy shared by every stage of the pipeline.

Anything deriving from :class:`PrismError` is a *data* problem (bad input
file, degenerate training set, ...). The CLI maps those to exit status 2.
"""


class PrismError(Exception):
    """Base class for all data-related failures."""


class UnsupportedFormat(PrismError):
    pass


class CorruptImage(PrismError):
    pass


class ParseError(PrismError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyManifest(PrismError):
    pass


class DimensionMismatch(PrismError, ValueError):
    pass


class DegenerateClass(PrismError, ValueError):
    pass


class SingularScatter(PrismError, ValueError):
    pass


class MissingPromptId(PrismError, ValueError):
    pass


class InvalidRatio(PrismError, ValueError):
    pass


class UnknownLabel(PrismError, ValueError):
    pass


class LengthMismatch(PrismError, ValueError):
    pass


class EmptyClass(PrismError, ValueError):
    pass


class SplitError(PrismError):
    """A fit or predict failure inside one resampled split."""

    def __init__(self, split_index, cause):
        self.split_index = split_index
        self.cause = cause
        super().__init__(f"split {split_index}: {type(cause).__name__}: {cause}")
