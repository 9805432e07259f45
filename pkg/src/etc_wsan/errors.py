"""Exception hierarchy shared by the simulation modules."""


class SimulationError(Exception):
    """Base class for errors raised by this package."""


class DomainError(SimulationError, ValueError):
    """A state left the domain on which the plant model is defined."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class PreconditionError(SimulationError, ValueError):
    pass


class NumericError(SimulationError, ArithmeticError):
    """Non-finite values appeared during integration or estimation."""


class DivergenceError(NumericError):
    """Closed-loop run blew up; ``last_good_time`` is the last finite sample."""

    def __init__(self, message, last_good_time=None):
        super().__init__(message)
        self.last_good_time = last_good_time


class CapabilityError(SimulationError):
    """The model lacks a capability the caller asked for."""


class SingularValveError(SimulationError, ValueError):
    """gamma_1 + gamma_2 == 1 makes the valve matrix non-invertible."""


class ConfigError(SimulationError, ValueError):
    """Configuration failed validation; ``violations`` lists every problem found."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class SimulationWarning(UserWarning):
    """Recoverable numerical event (e.g. a tank level clamped at zero)."""
