"""Exception types raised across the package."""


class EmffError(Exception):
    """Base class for all package errors."""


class IntegrationError(EmffError):
    """Integrator produced or received a non-finite value."""


class FarFieldViolation(EmffError):
    """Two dipoles are closer than the far-field validity floor."""

    def __init__(self, message, pair=None, distance=None):
        super().__init__(message)
        self.pair = pair
        self.distance = distance


class ModelValidityError(EmffError):
    """A modelling assumption (e.g. small formation vs orbit radius) is broken."""


class IllConditioned(EmffError):
    """A matrix that must be inverted is numerically singular."""


class NoFeasibleSolution(EmffError):
    """Dipole allocation failed to meet the constraint tolerance."""

    def __init__(self, message, best_residual=None, best=None):
        super().__init__(message)
        self.best_residual = best_residual
        self.best = best


class ConfigError(EmffError):
    """Scenario configuration could not be parsed or validated."""


class ScenarioError(EmffError):
    """A closed-loop run failed at a specific control step."""

    def __init__(self, message, step=None, cause=None):
        super().__init__(message)
        self.step = step
        self.cause = cause
