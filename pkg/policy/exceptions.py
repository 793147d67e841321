from ehcrsim.exceptions import SimulationError


class InconsistentObservation(SimulationError):
    """The observation has zero probability under the current belief."""


class PlanningInfeasible(SimulationError):
    """The finite-horizon problem is too large; use the myopic policy."""
