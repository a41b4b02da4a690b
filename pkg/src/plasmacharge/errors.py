"""Exception types.

Every error that corresponds to a violated modelling condition carries a
short descriptive ``condition`` slug so logs and tests can match on it.
"""

from __future__ import annotations


class PlasmaChargeError(Exception):
    """Base class for all package errors."""

    condition: str = "unspecified"

    def __init__(self, message: str, condition: str | None = None):
        if condition is not None:
            self.condition = condition
        super().__init__(f"[{self.condition}] {message}")


class ConfigError(PlasmaChargeError, ValueError):
    """Invalid input data or configuration."""


class DomainError(PlasmaChargeError, ValueError):
    """Point or shape incompatible with the domain."""

    condition = "domain"


class NotFittedError(PlasmaChargeError, RuntimeError):
    """A numerical backend was used before it was assembled."""

    condition = "backend-not-fitted"


class NearBoundaryError(PlasmaChargeError, ValueError):
    """Layer-potential evaluation too close to the boundary to be accurate."""

    condition = "near-boundary-evaluation"


class SingularSystemError(PlasmaChargeError, RuntimeError):
    """Boundary integral system could not be solved."""

    condition = "fredholm-solvability"


class SimulationEvent(PlasmaChargeError, RuntimeError):
    """A run has to stop for a physical or numerical reason."""


class ChargeCollision(SimulationEvent):
    """Two point charges met or a charge reached the wall."""

    condition = "continuation-criterion"


class PlasmaChargeCollision(SimulationEvent):
    """A plasma particle came within the collision radius of a charge."""

    condition = "plasma-charge-separation"


class GrazingTrap(SimulationEvent):
    """A particle needed more reflections in one step than allowed."""

    condition = "grazing-trap"


class TimeStepError(SimulationEvent):
    """The fixed step exceeds the stability bound near a charge."""

    condition = "timestep-stability"
