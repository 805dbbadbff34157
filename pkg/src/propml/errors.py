"""Exception hierarchy shared by all propml modules."""


class PropmlError(Exception):
    """Base class for every error raised by this package."""


class FormatError(PropmlError):
    """A file does not follow its declared format."""


class TruncationError(FormatError):
    def __init__(self, expected: int, actual: int, what: str = "values"):
        super().__init__(f"expected {expected} {what}, found {actual}")
        self.expected = expected
        self.actual = actual


class SchemaError(PropmlError):
    """Missing/unknown columns or mismatched widths."""


class ParseError(PropmlError):
    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class BoundsError(PropmlError, ValueError):
    def __init__(self, x: float, y: float):
        super().__init__(f"point ({x!r}, {y!r}) lies outside the raster extent")
        self.x = x
        self.y = y


class NodataError(PropmlError):
    """The queried raster cell holds the nodata sentinel."""


class DegenerateGeometryError(PropmlError, ValueError):
    """BS and UE coincide in the horizontal plane."""


class ConfigError(PropmlError, ValueError):
    pass


class DomainError(PropmlError, ValueError):
    """A formula was evaluated outside its domain."""


class DataError(PropmlError, ValueError):
    pass


class UnknownReferenceError(PropmlError, KeyError):
    """An identifier (cell id, feature name) could not be resolved."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class ModelError(PropmlError):
    pass
