"""Exception hierarchy shared by every subpackage."""


class SanasError(Exception):
    pass


class ConfigurationError(SanasError, ValueError):
    """Shapes, graph descriptions or settings that cannot work together."""


class InputError(SanasError, ValueError):
    """Bad data handed to an operation (wrong length, out-of-range label...)."""


class NonFiniteError(SanasError, ArithmeticError):
    """A NaN or Inf appeared where only finite values are allowed."""


class UsageError(SanasError, RuntimeError):
    """An API called in a mode it does not support."""


class FormatError(SanasError, ValueError):
    """A persisted artifact (checkpoint, prepared dataset) failed validation."""
