"""
Channel selection criterion: energy-constrained spectral efficiency and the
expected one-slot reward built on it.
"""
import math
from dataclasses import dataclass

from occupancy.chains import ChannelChain
from phy.power import PowerParams, transmission_energies, transmit_power
from phy.rates import RateTable, gain_region


@dataclass(frozen=True)
class SlotCosts:
    """Energy already committed in the slot and the time left to transmit."""
    e_est_total: float
    e_s: float
    t_tr: float


def transmission_cost(g: float, m: int, t_tr: float, pp: PowerParams) -> float:
    """e_tr + e_ckt for M-QAM at gain g over t_tr seconds."""
    e_tr, e_ckt = transmission_energies(transmit_power(g, m, pp), t_tr, pp)
    return e_tr + e_ckt


def affordable(g: float, m: int, e: float, costs: SlotCosts, pp: PowerParams) -> bool:
    return costs.e_s + transmission_cost(g, m, costs.t_tr, pp) <= e - costs.e_est_total


def spectral_efficiency(g: float, e: float, costs: SlotCosts, rt: RateTable, pp: PowerParams) -> int:
    """
    log2(M_k) for the region of g when sensing plus transmission fit in the
    battery after estimation; 0 otherwise (region 1, no time or no energy).
    """
    region = gain_region(g, rt)
    if region == 1 or costs.t_tr <= 0:
        return 0
    if affordable(g, rt.constellation(region), e, costs, pp):
        return rt.spectral_efficiency(region)
    return 0


def baseline_constant_rate(g: float, e: float, fixed_m: int, costs: SlotCosts, pp: PowerParams) -> int:
    """Fixed-constellation rate: log2(fixed_m) whenever the power budget at g passes."""
    if g <= 0 or costs.t_tr <= 0 or fixed_m < 2:
        return 0
    if affordable(g, fixed_m, e, costs, pp):
        return int(round(math.log2(fixed_m)))
    return 0


def myopic_expected_reward(pi_i: float, chain: ChannelChain, eta_i: float) -> float:
    return chain.predict_idle(pi_i) * eta_i
