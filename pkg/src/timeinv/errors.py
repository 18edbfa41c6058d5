"""Exception hierarchy shared by every module (and mapped to CLI exit codes)."""


class TimeInvError(Exception):
    pass


class DomainError(TimeInvError, ValueError):
    """An argument lies outside the documented domain."""


class ConfigError(TimeInvError, ValueError):
    """A model or run configuration is malformed or out of range."""


class PreconditionError(TimeInvError):
    """A check was requested on a model that cannot support it."""


class CapacityError(TimeInvError):
    """A cached table was asked for more than it can hold."""


class NumericFailure(TimeInvError, ArithmeticError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
