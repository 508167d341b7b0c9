"""Exception types shared across the package."""


class PlannerError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(PlannerError, ValueError):
    """A numeric argument is outside its documented domain (dt <= 0, negative spread, ...)."""


class InvalidStateError(PlannerError, ValueError):
    """A state or control vector contains non-finite entries."""


class SingularSteeringError(PlannerError):
    """Steering angle at or beyond pi/2; tan(phi) is undefined there."""


class InfeasibleSeedError(PlannerError):
    """No collision-free corridor exists around the current vehicle position."""


class SolverFailureError(PlannerError):
    """The trajectory optimizer could not produce a usable iterate."""


class DivergenceError(PlannerError):
    """A rollout produced non-finite states; the caller should shrink its step."""


class ConfigError(PlannerError):
    """A config document failed parsing or validation; message carries the location."""


class SchemaError(PlannerError):
    """An output file is missing the expected schema header or is malformed."""
