"""Exception hierarchy shared across the toolkit."""


class HarError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(HarError, ValueError):
    """Array shapes are incompatible with an operation."""


class ParameterError(HarError, ValueError):
    """A hyperparameter or argument is out of its valid range."""


class DataError(HarError):
    """Dataset content is missing, malformed, or too small."""


class FormatError(HarError):
    """A file does not follow its binary format."""


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class ShapeMismatchError(FormatError):
    pass


class UsageError(HarError):
    """An API or CLI call was made with incompatible inputs."""
