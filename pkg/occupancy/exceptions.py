from ehcrsim.exceptions import SimulationError


class JointModelInfeasible(SimulationError):
    """Too many channels for the 2^N joint chain; use the factored model."""


class DegenerateChain(SimulationError):
    """The chain has no unique stationary distribution."""
