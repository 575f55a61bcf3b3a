"""Exception hierarchy shared by every module."""


class FuzzyCSGError(Exception):
    """Base class for all package errors."""


class ParameterError(FuzzyCSGError, ValueError):
    """An argument is outside its valid domain."""


class ShapeError(FuzzyCSGError, ValueError):
    """Array dimensions do not line up."""


class NumericalError(FuzzyCSGError, ArithmeticError):
    """A non-finite value appeared during evaluation or optimization."""

    def __init__(self, message, node_id=None):
        super().__init__(message)
        self.node_id = node_id


class SamplingError(FuzzyCSGError, RuntimeError):
    """Rejection sampling exhausted its candidate budget."""


class ResourceError(FuzzyCSGError, MemoryError):
    """A request would exceed the configured memory budget."""


class ParseError(FuzzyCSGError, ValueError):
    """A document could not be parsed; ``path`` locates the problem."""

    def __init__(self, message, path=None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class SchemaError(ParseError):
    """A document is well formed but violates the schema."""


class UnsupportedVersionError(ParseError):
    """A document declares a format version this build cannot read."""
