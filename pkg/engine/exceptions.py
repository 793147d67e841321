from ehcrsim.exceptions import SimulationError


class EnergyInvariantViolation(SimulationError):
    """A slot spent more energy than the battery held, or the battery left [0, e_max]."""


class SlotInvariantViolation(SimulationError):
    """A slot outcome broke the access / acknowledgement rules."""
