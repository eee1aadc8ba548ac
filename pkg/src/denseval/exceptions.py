"""Exception hierarchy. Everything raised on bad input derives from ``InputError``."""


class DensevalError(Exception):
    """Base class for toolkit errors."""


class InputError(DensevalError, ValueError):
    """Input data is malformed, inconsistent or unsupported."""


class FormatError(InputError):
    """A file does not follow the expected encoding (bit depth, channels, schema)."""


class ParseError(FormatError):
    """A text label file could not be parsed."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class GeometryError(InputError):
    """Geometry violates a precondition (empty mask, out of bounds, lattice mismatch)."""
