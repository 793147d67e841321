"""
Battery bookkeeping: Bernoulli harvesting, the per-slot energy transition
and the energy consumed by each kind of slot.
"""
import numpy as np

from .exceptions import EnergyInvariantViolation

# What the SU did in a slot, for energy accounting
FULLY_IDLE = 'idle'
ESTIMATED = 'estimated'
SENSED_BUSY = 'sensed'
TRANSMITTED = 'transmitted'

# Relative slack for rounding when comparing spend against the battery
ROUNDING_SLACK = 1e-12


def harvest_draw(p_h: float, e_h: float, rng: np.random.Generator) -> float:
    if not 0.0 <= p_h <= 1.0:
        raise ValueError(f"Harvest probability must lie in [0, 1] (got {p_h})")
    return e_h if rng.random() < p_h else 0.0


def energy_transition(e: float, e_c: float, harvested: float, e_max: float) -> float:
    """Battery at the start of the next slot."""
    if e_c > e + ROUNDING_SLACK * max(e, e_max):
        raise EnergyInvariantViolation(f"Slot consumed {e_c!r} J with only {e!r} J stored")
    left = max(e - e_c, 0.0)
    if harvested:
        return min(left + harvested, e_max)
    return left


def consumed_energy(case: str, e_est_total: float = 0.0, e_s: float = 0.0,
                    e_ckt: float = 0.0, e_tr: float = 0.0) -> float:
    if case == TRANSMITTED:
        return e_est_total + e_s + e_ckt + e_tr
    if case == SENSED_BUSY:
        return e_est_total + e_s
    if case == ESTIMATED:
        return e_est_total
    if case == FULLY_IDLE:
        return 0.0
    raise ValueError(f"Unknown slot case '{case}'")
