"""Exception hierarchy shared across the package."""


class SwarmNavError(Exception):
    """Base class for every error raised by swarmnav."""


class ConfigError(SwarmNavError):
    pass


class MalformedConfig(ConfigError):
    """A scenario or database file is missing a field or cannot be parsed."""


class InvalidScene(ConfigError):
    """The scene violates a geometric invariant (endpoint in obstacle, obstacle outside arena)."""


class UnknownClass(ConfigError):
    pass


class GridTooLarge(SwarmNavError):
    pass


class PlanningError(SwarmNavError):
    pass


class NoPath(PlanningError):
    pass


class OccupiedEndpoint(PlanningError):
    pass


class OutOfBounds(PlanningError):
    pass


class InvalidStepCount(SwarmNavError):
    pass


class DimMismatch(SwarmNavError):
    pass


class InvalidThresholds(SwarmNavError):
    pass


class SimulationError(SwarmNavError):
    pass


class NonFiniteState(SimulationError):
    pass


class StallError(SimulationError):
    pass


class ArenaExit(SimulationError):
    """A drone left the arena rectangle during a run."""
