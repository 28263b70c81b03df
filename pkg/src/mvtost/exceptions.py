"""Exception classes raised by mvtost."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class UnsupportedConfigurationError(ValueError):
    """The inputs describe a problem the engine deliberately does not handle."""


class ParseError(ValueError):
    """Input data could not be parsed; the message names the offending cell."""


class DegenerateScaleError(ValueError):
    """A robust scale estimate is zero so standardized scores are undefined."""


class ExistenceError(RuntimeError):
    """No adjusted level can be reached inside [alpha, 0.5).

    Raised when a fixed-point iterate leaves the admissible interval or the
    local slope of the power function in the level falls outside (0, 2).
    """

    def __init__(self, message, trace=None, slope=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.slope = slope


class NonConvergenceError(RuntimeError):
    """An iterative solver exhausted its iteration budget."""

    def __init__(self, message, trace=None, partial=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
        self.partial = partial
