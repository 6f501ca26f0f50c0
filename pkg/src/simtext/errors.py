"""Exception types shared across the toolkit."""


class SimTextError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(SimTextError, ValueError):
    """An argument is outside its documented range."""


class DegeneratePolygonError(SimTextError, ValueError):
    """Polygon has zero area (collinear or repeated vertices)."""


class DimensionError(SimTextError, ValueError):
    """Array shapes are inconsistent."""


class ParseError(SimTextError, ValueError):
    """A text record could not be parsed.

    ``lineno`` is 1-based when known, ``None`` otherwise.
    """

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class FormatError(SimTextError, ValueError):
    """Binary container is malformed."""


class MagicError(FormatError):
    pass


class VersionError(FormatError):
    pass


class PayloadLengthError(FormatError):
    pass


class UnsupportedFormatError(FormatError):
    pass
