"""
One slot of the secondary user: estimate, sense, access, acknowledge.

Every slot consumes the same random draws whatever the policy does, so runs
that differ only in policy see identical occupancy, fading and harvest.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from occupancy.chains import IDLE, OCCUPIED, PnState
from phy.detection import min_sensing_samples, min_sensing_time, sensing_energy
from phy.exceptions import UnsensableChannel
from phy.power import transmission_energies, transmit_power
from policy.criterion import SlotCosts
from policy.registry import SensingPolicy, SlotView
from policy.selection import SlotDecision, access_decision
from .config import RAYLEIGH, SimConfig
from .energy import (
    ESTIMATED, FULLY_IDLE, SENSED_BUSY, TRANSMITTED, consumed_energy, energy_transition, harvest_draw,
)
from .exceptions import EnergyInvariantViolation, SlotInvariantViolation
from .streams import ReplicationStreams


# Mutually exclusive slot kinds
SUCCESS = 'success'
COLLISION = 'collision'
BUSY = 'busy'
OUTAGE = 'outage'
UNSENSABLE = 'unsensable'
IDLE_SLOT = 'idle'
SLOT_KINDS = (SUCCESS, COLLISION, BUSY, OUTAGE, UNSENSABLE, IDLE_SLOT)


@dataclass
class SuState:
    pn: PnState
    energy: float
    policy: SensingPolicy
    slot: int = 0


@dataclass(frozen=True)
class SlotOutcome:
    slot: int
    kind: str
    estimated: Tuple[int, ...]
    sensed: Tuple[int, ...]
    observations: Tuple[int, ...]
    # True occupancy of each sensed channel, aligned with ``sensed``
    sensed_states: Tuple[int, ...]
    accessed: Optional[int]
    d: int
    true_state: Optional[int]
    ack: Optional[bool]
    eta: float
    reward: float
    e_est_total: float
    e_s_total: float
    e_ckt: float
    e_tr: float
    harvested: float
    battery_before: float
    battery_after: float
    # Estimated channels that could not be sensed this slot
    unsensable: Tuple[int, ...] = ()
    e_max: float = field(repr=False, default=np.inf)

    def __post_init__(self):
        if not 0.0 <= self.battery_after <= self.e_max:
            raise EnergyInvariantViolation(
                f"Battery {self.battery_after!r} J outside [0, {self.e_max!r}] after slot {self.slot}"
            )
        if self.reward > 0 and self.ack is not True:
            raise SlotInvariantViolation(f"Reward without acknowledgement in slot {self.slot}")
        if (self.ack is True) != (self.d == 1 and self.true_state == IDLE):
            raise SlotInvariantViolation(f"ACK does not match access on an idle channel in slot {self.slot}")
        if self.kind not in SLOT_KINDS:
            raise ValueError(f"Unknown slot kind '{self.kind}'")

    @property
    def consumed(self) -> float:
        return self.e_est_total + self.e_s_total + self.e_ckt + self.e_tr


def sensing_gains(config: SimConfig, rng: np.random.Generator) -> np.ndarray:
    """PU-SU power gains; unit for AWGN, exponential with unit mean for Rayleigh."""
    if config.sensing_channel == RAYLEIGH:
        return rng.exponential(1.0, config.n_channels)
    return np.ones(config.n_channels)


def draw_observation(state: int, u: float, p_d: float, p_f: float) -> int:
    """Detector output for one channel from a uniform draw; 0 reports busy."""
    report_busy = p_d if state == OCCUPIED else p_f
    return 0 if u < report_busy else 1


def estimation_subset(predicted_idle, lambda0: int) -> Tuple[int, ...]:
    """The lambda0 channels most likely idle next, in index order."""
    n = len(predicted_idle)
    if lambda0 >= n:
        return tuple(range(n))
    ranked = sorted(range(n), key=lambda channel: (-predicted_idle[channel], channel))
    return tuple(sorted(ranked[:lambda0]))


def _sensing_cost(config: SimConfig, h: float) -> Optional[Tuple[float, float]]:
    """(e_s, T_s) on a channel, or None when it cannot be sensed in the time left."""
    try:
        samples = min_sensing_samples(config.sensing, h)
    except UnsensableChannel:
        return None
    t_s = min_sensing_time(samples, config.f_s)
    if t_s > config.slot_duration - config.t_est_total:
        return None
    return sensing_energy(samples, config.e_sample), t_s


def run_slot(state: SuState, config: SimConfig, streams: ReplicationStreams, horizon: int = 1) -> SlotOutcome:
    """
    Advance one slot. ``horizon`` is the number of slots the planner may
    look ahead, the current one included.
    """
    n = config.n_channels
    policy = state.policy
    chains = config.chains
    p_d, p_f = config.sensing.p_d, config.p_f

    pn = state.pn.step(chains, streams.occupancy.random(n))
    gains = streams.fading.exponential(1.0, n)
    h = sensing_gains(config, streams.sensing)
    obs_draws = streams.observation.random(n)
    harvested = harvest_draw(config.p_h, config.e_h, streams.harvest)

    energy = state.energy
    e_est_total, t_est_total = config.e_est_total, config.t_est_total
    estimated: Tuple[int, ...] = ()
    unsensable: Tuple[int, ...] = ()
    sensed: List[int] = []
    observations: List[int] = []
    feedback: Dict[int, Tuple[int, Optional[bool]]] = {}
    decision = SlotDecision(a_hat=None, o=None, d=0, eta=0.0)
    reward, e_s_total, e_ckt, e_tr = 0.0, 0.0, 0.0, 0.0

    if energy < e_est_total:
        case, kind = FULLY_IDLE, OUTAGE
    else:
        case = ESTIMATED
        lambda0 = config.action_sets.lambda0
        estimated = tuple(range(n)) if lambda0 >= n else estimation_subset(policy.predicted_idle(), lambda0)
        costs = {channel: _sensing_cost(config, h[channel]) for channel in estimated}
        candidates = tuple(channel for channel in estimated if costs[channel] is not None)
        unsensable = tuple(channel for channel in estimated if costs[channel] is None)
        etas = {}
        for channel in candidates:
            slot_costs = SlotCosts(e_est_total, costs[channel][0], config.slot_duration - t_est_total - costs[channel][1])
            etas[channel] = policy.link(gains[channel], energy, slot_costs)[0]

        if not candidates:
            kind = UNSENSABLE
        else:
            view = SlotView(
                candidates=candidates, etas=etas, gains=gains, energy=energy,
                sensing_costs={channel: costs[channel] for channel in candidates},
                limit=config.action_sets.lambda1, horizon=horizon,
            )
            spent_t = 0.0
            for channel in policy.order(view):
                e_s, t_s = costs[channel]
                t_tr = config.slot_duration - t_est_total - spent_t - t_s
                if t_tr < 0 or e_s > energy - e_est_total - e_s_total:
                    continue
                # Earlier sensing in this slot is already committed energy.
                link_costs = SlotCosts(e_est_total + e_s_total, e_s, t_tr)
                eta, m = policy.link(gains[channel], energy, link_costs)
                if policy.requires_rate and eta <= 0:
                    continue

                spent_t += t_s
                e_s_total += e_s
                case = SENSED_BUSY
                o = draw_observation(pn.s[channel], obs_draws[channel], p_d, p_f)
                sensed.append(channel)
                observations.append(o)
                if o == 0:
                    feedback[channel] = (0, None)
                    continue

                d = access_decision(o) if eta > 0 else 0
                if d:
                    p_tr = transmit_power(gains[channel], m, config.power)
                    e_tr, e_ckt = transmission_energies(p_tr, t_tr, config.power)
                    ack = pn.is_idle(channel)
                    reward = config.reward(eta, t_tr) if ack else 0.0
                    feedback[channel] = (1, ack)
                    case = TRANSMITTED
                else:
                    feedback[channel] = (1, None)
                decision = SlotDecision(a_hat=channel, o=o, d=d, eta=eta if d else 0.0)
                break

            if case == TRANSMITTED:
                kind = SUCCESS if feedback[decision.a_hat][1] else COLLISION
            elif sensed:
                kind = BUSY
            elif _energy_blocked(policy, candidates, etas, costs, gains, config):
                kind = OUTAGE
            else:
                kind = IDLE_SLOT

    e_c = consumed_energy(case, e_est_total=e_est_total, e_s=e_s_total, e_ckt=e_ckt, e_tr=e_tr)
    battery_after = energy_transition(energy, e_c, harvested, config.battery_max)
    policy.observe(feedback)

    accessed = decision.a_hat if decision.d else None
    ack = feedback[accessed][1] if accessed is not None else None
    outcome = SlotOutcome(
        slot=state.slot,
        kind=kind,
        estimated=estimated,
        sensed=tuple(sensed),
        observations=tuple(observations),
        sensed_states=tuple(pn.s[channel] for channel in sensed),
        accessed=accessed,
        d=decision.d,
        true_state=pn.s[accessed] if accessed is not None else None,
        ack=ack,
        eta=decision.eta,
        reward=reward,
        e_est_total=e_est_total if case != FULLY_IDLE else 0.0,
        e_s_total=e_s_total,
        e_ckt=e_ckt,
        e_tr=e_tr,
        harvested=harvested,
        battery_before=energy,
        battery_after=battery_after,
        unsensable=unsensable,
        e_max=config.battery_max,
    )
    state.pn = pn
    state.energy = battery_after
    state.slot += 1
    return outcome


def _energy_blocked(policy, candidates, etas, costs, gains, config) -> bool:
    """True when some sensable channel would carry a rate with a full battery but not with this one."""
    for channel in candidates:
        if etas[channel] > 0:
            continue
        e_s, t_s = costs[channel]
        slot_costs = SlotCosts(config.e_est_total, e_s, config.slot_duration - config.t_est_total - t_s)
        if policy.link(gains[channel], np.inf, slot_costs)[0] > 0:
            return True
    return False
