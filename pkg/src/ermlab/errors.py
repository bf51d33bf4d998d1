"""Exception hierarchy shared by all ermlab modules."""


class ErmLabError(Exception):
    """Base class for every error raised by ermlab."""


class DimMismatch(ErmLabError, ValueError):
    pass


class NonSymmetric(ErmLabError, ValueError):
    pass


class IndefiniteMatrix(ErmLabError, ValueError):
    pass


class NonPositiveRadius(ErmLabError, ValueError):
    pass


class InvalidDatum(ErmLabError, ValueError):
    pass


class ScaleOutOfRange(ErmLabError, ValueError):
    pass


class TooManySigns(ErmLabError, ValueError):
    pass


class TooFewAtoms(ErmLabError, ValueError):
    pass


class BadDelta(ErmLabError, ValueError):
    pass


class InsufficientTrials(ErmLabError, ValueError):
    pass


class NotConverged(ErmLabError, RuntimeError):
    """Raised when the solver exhausts its iteration budget.

    The partial :class:`~ermlab.solver.ErmResult` is kept on ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(ErmLabError, ValueError):
    """Base for configuration problems (CLI exit code 2)."""


class ParseError(ConfigError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnknownKey(ParseError):
    pass


class RangeError(ParseError):
    pass
