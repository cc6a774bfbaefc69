"""Exception hierarchy shared by the whole package.

Input errors map to CLI exit code 2, numerical failures to exit code 3.
"""


class InputError(ValueError):
    """Invalid user input: bad dimensions, modes, configuration values."""


class BudgetError(InputError):
    """A dense materialization would exceed the configured element budget."""


class NumericalError(RuntimeError):
    """A computation failed numerically (NaN, divergence, timeout)."""


class DegenerateSpectrumError(NumericalError):
    """Singular values too close for the first-order SVD update to be defined."""


class ConditioningError(NumericalError):
    """A matrix that must be inverted is numerically singular."""

    def __init__(self, message, sigma_min=None):
        super().__init__(message)
        self.sigma_min = sigma_min


class SteadyStateTimeout(NumericalError):
    """Steady-state iteration hit its step cap before reaching the residual tolerance."""

    def __init__(self, message, last_residual=None, steps=None):
        super().__init__(message)
        self.last_residual = last_residual
        self.steps = steps
