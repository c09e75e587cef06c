"""Exception types raised across the package."""


class NehariError(Exception):
    """Base class for all package errors."""


class DomainMismatch(NehariError, ValueError):
    """Two fields live on different grids."""


class ZeroDirection(NehariError, ValueError):
    """A ray direction (or a field that must be nontrivial) is identically zero."""


class BracketFailureLow(NehariError):
    """The ray derivative never became positive near t = 0."""


class BracketFailureHigh(NehariError):
    """The ray derivative never became negative for large t."""


class AllRestartsFailed(NehariError):
    """Every restart of the ground-state solver hit a bracketing failure."""


class AuditFailed(NehariError):
    """The nonlinearity failed one of its structural hypotheses."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MissingDerivative(NehariError):
    """An operation needs f' but the nonlinearity does not provide it."""


class ConfigError(NehariError, ValueError):
    """Invalid run configuration.

    ``field`` names the offending key, ``line``/``column`` locate a syntax
    error when one is known.
    """

    def __init__(self, message, field=None, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.field = field
        self.line = line
        self.column = column
