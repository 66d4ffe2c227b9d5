"""Exception types shared across the package."""


class FastHandError(Exception):
    """Base class for all errors raised by fasthand."""


class ContractError(FastHandError, ValueError):
    """An operation was called with arguments that violate its preconditions."""


class ConfigError(FastHandError, ValueError):
    """A model configuration cannot produce the required network geometry."""


class WeightFormatError(FastHandError):
    """A weight file is malformed (bad magic, version, or truncated tensor)."""


class HandLostError(FastHandError):
    """The tracked hand has no usable region in the current frame."""


class AnnotationFormatError(FastHandError, ValueError):
    """An annotation or detection file line could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
