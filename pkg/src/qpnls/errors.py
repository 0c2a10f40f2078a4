"""Exception hierarchy shared by every module."""


class QPNLSError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class StructureError(QPNLSError, ValueError):
    """A branch (or other recursive object) is malformed."""


class DomainError(QPNLSError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class PreconditionError(QPNLSError, ValueError):
    """Inputs violate a stated hypothesis; the check is not applicable."""


class CapacityError(QPNLSError):
    """A computation would exceed the configured size budget."""

    exit_code = 4


class DivergenceError(QPNLSError, ArithmeticError):
    """A time integrator produced non-finite values."""

    exit_code = 4

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(QPNLSError, ValueError):
    """Configuration text could not be parsed or validated."""

    exit_code = 2

    def __init__(self, message, key=None):
        if key:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key
