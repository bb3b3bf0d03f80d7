"""Exception hierarchy shared across the package."""


class AclNetError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(AclNetError, ValueError):
    pass


class SizeError(AclNetError, ValueError):
    pass


class StateError(AclNetError, RuntimeError):
    """A backward pass was requested without its forward context."""


class ConfigError(AclNetError, ValueError):
    pass


class DecodeError(AclNetError, ValueError):
    """Malformed or unsupported WAV data."""


class EmptyClipError(AclNetError, ValueError):
    pass


class DegenerateInputError(AclNetError, ValueError):
    pass


class IndexFormatError(AclNetError, ValueError):
    """Bad dataset index CSV; the message names the offending row."""


class NumericError(AclNetError, ArithmeticError):
    """Training produced a non-finite loss."""


class ModelFormatError(AclNetError, ValueError):
    """Base class for model file load failures."""


class BadMagicError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class TruncatedPayloadError(ModelFormatError):
    pass


class ShapeMismatchError(ModelFormatError):
    pass
