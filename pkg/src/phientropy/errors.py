"""Exception hierarchy shared by every module."""


class PhiEntropyError(Exception):
    """Base class for all errors raised by the package."""


class ArgumentError(PhiEntropyError, ValueError):
    pass


class DomainError(PhiEntropyError, ValueError):
    """A value fell outside the domain of a function or operator."""


class UnsupportedError(PhiEntropyError, NotImplementedError):
    pass


class IntegrationError(PhiEntropyError, ArithmeticError):
    pass


class TruncationError(PhiEntropyError):
    """Mass escapes the truncation box; the box should be enlarged."""


class SolverError(PhiEntropyError, RuntimeError):
    pass


class StabilityError(SolverError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class WindowError(PhiEntropyError):
    def __init__(self, message, t_f=None):
        super().__init__(message)
        self.t_f = t_f


class AdmissibilityError(ArgumentError):
    def __init__(self, message, margin=None):
        super().__init__(message)
        self.margin = margin
