"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class GpsFlowError(Exception):
    """Base class for all library errors."""


class ParseError(GpsFlowError, ValueError):
    """Malformed input file (tensor or CSV)."""


class BadMagicError(ParseError):
    pass


class BadRankError(ParseError):
    pass


class DimOverflowError(ParseError):
    pass


class TruncatedPayloadError(ParseError):
    pass


class NonFiniteError(ParseError):
    pass


class GpsCsvError(ParseError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ShapeError(GpsFlowError, ValueError):
    """Array shapes or channel counts do not agree."""


class GeometryError(GpsFlowError, ValueError):
    """Degenerate GPS configuration (coincident points, zero-length vectors)."""


class ProbeError(GpsFlowError, ValueError):
    """Gradient-check probe outside its valid domain."""
