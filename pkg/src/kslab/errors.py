"""Exception hierarchy shared by every kslab module."""


class KSLabError(Exception):
    """Base class for all errors raised by kslab."""


class InvalidConfigError(KSLabError, ValueError):
    """A parameter, config key or search budget is malformed or out of range."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class UnsupportedRegimeError(KSLabError, ValueError):
    """The competition coefficients fall outside every case with a known limit."""


class DomainError(KSLabError, ValueError):
    """A functional was evaluated outside its domain (e.g. log of a nonpositive density)."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class StepRejectedError(KSLabError):
    """A time step exceeds the stability bound of the scheme."""

    def __init__(self, message, dt_max):
        super().__init__(message)
        self.dt_max = dt_max


class BlowUpError(KSLabError, FloatingPointError):
    """Non-finite values appeared in the solution."""

    def __init__(self, message, t, norms):
        super().__init__(message)
        self.t = t
        self.norms = norms
