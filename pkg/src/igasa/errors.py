"""Exception hierarchy shared by all modules."""


class IgasaError(Exception):
    """Base class for every error raised by this package."""


class EmptyInput(IgasaError, ValueError):
    pass


class DimensionMismatch(IgasaError, ValueError):
    pass


class DegeneratePyramid(IgasaError):
    def __init__(self, level: str, message: str = ""):
        self.level = level
        super().__init__(message or f"pyramid level '{level}' is empty")


class EmptyAttentionContext(IgasaError):
    pass


class DegenerateWeights(IgasaError):
    pass


class DegenerateGeometry(IgasaError):
    pass


class InsufficientCorrespondences(IgasaError, ValueError):
    pass


class InvalidRotation(IgasaError, ValueError):
    pass


class InvalidProbability(IgasaError, ValueError):
    pass


class ParseError(IgasaError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidData(IgasaError, ValueError):
    pass


class NoConsensus(IgasaError):
    pass
