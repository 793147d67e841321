"""
Finite-horizon planner over (joint belief, battery energy, channel gains).

The value of a slot is the best of staying idle after estimation or sensing
one channel. Next-slot gains are independent of everything else, so the
expectation over them reduces to the expected maximum of independent
per-channel action values; energy is carried exactly through the tree.
"""
import logging
import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Hashable, Optional, Sequence, Tuple

import numpy as np

from occupancy.chains import IDLE, JointTransition, joint_states
from phy.power import PowerParams
from phy.rates import RateTable, gain_region
from .beliefs import BeliefJoint, condition_joint, predict_joint
from .criterion import SlotCosts, spectral_efficiency, transmission_cost
from .exceptions import PlanningInfeasible

logger = logging.getLogger(__name__)

MAX_HORIZON = 6
MAX_CHANNELS = 4
# Memo entries kept per planner before the table is dropped and rebuilt
MEMO_LIMIT = 1_000_000
MAX_SHARED_PLANNERS = 8

SLOT_TIME = 'slot_time'
PER_SLOT = 'per_slot'


@dataclass(frozen=True)
class PlanningContext:
    jt: JointTransition
    p_d: float
    p_f: float
    rate_table: RateTable
    power: PowerParams
    slot_duration: float
    e_est_total: float
    t_est_total: float
    # (e_s, t_s) per channel assumed for future slots
    sensing_costs: Tuple[Tuple[float, float], ...]
    p_h: float
    e_h: float
    e_max: float
    reward_basis: str = SLOT_TIME

    @property
    def n_channels(self) -> int:
        return self.jt.n_channels

    def slot_costs(self, sensing_cost) -> SlotCosts:
        e_s, t_s = sensing_cost
        return SlotCosts(
            e_est_total=self.e_est_total,
            e_s=e_s,
            t_tr=self.slot_duration - self.t_est_total - t_s,
        )

    def reward(self, eta: float, costs: SlotCosts) -> float:
        if self.reward_basis == SLOT_TIME:
            return eta * costs.t_tr / self.slot_duration
        return float(eta)


@dataclass(frozen=True)
class _Option:
    """Sensing one channel at a known gain."""
    reward: float
    e_s: float
    e_tx: float


class OptimalPlanner:
    """
    Memoised value recursion for one planning context. Memo keys are exact
    (horizon, belief bytes, energy), so an instance can serve every decision
    of every episode run under that context. Not thread-safe; see
    ``shared_planner``.
    """

    def __init__(self, ctx: PlanningContext):
        if ctx.n_channels > MAX_CHANNELS:
            raise PlanningInfeasible(
                f"Planning over {ctx.n_channels} channels exceeds the limit of {MAX_CHANNELS}"
            )
        self.ctx = ctx
        self._idle_bits = joint_states(ctx.n_channels) == IDLE
        self._memo: Dict[tuple, float] = {}
        self._harvest = [(p, e) for p, e in ((ctx.p_h, ctx.e_h), (1.0 - ctx.p_h, 0.0)) if p > 0]
        self._ample_per_slot = ctx.e_est_total + max(
            (self._largest_spend(cost) for cost in ctx.sensing_costs), default=0.0
        )

    @property
    def nodes(self) -> int:
        """Belief/energy nodes currently memoised."""
        return len(self._memo)

    # public API

    def decide(self, belief: np.ndarray, energy: float, gains: Sequence[float], horizon: int,
               sensing_costs: Optional[Sequence[Optional[Tuple[float, float]]]] = None
               ) -> Tuple[float, Optional[int]]:
        """
        Value and sensing choice (channel index, or None for idle) for the
        current slot. ``sensing_costs`` overrides the context's per-channel
        costs for this slot; a None entry marks a channel that cannot be sensed.
        """
        if not 1 <= horizon <= MAX_HORIZON:
            raise PlanningInfeasible(f"Horizon {horizon} outside 1..{MAX_HORIZON}")
        ctx = self.ctx
        if sensing_costs is None:
            sensing_costs = ctx.sensing_costs
        predicted = predict_joint(np.asarray(belief, dtype=float), ctx.jt)

        if energy < ctx.e_est_total:
            return self._continuation(predicted, energy, horizon - 1), None

        idle_value = self._continuation(predicted, energy - ctx.e_est_total, horizon - 1)
        best_value, best_channel = -np.inf, None
        for channel in range(ctx.n_channels):
            if sensing_costs[channel] is None:
                continue
            option = self._option(gains[channel], energy, sensing_costs[channel])
            if option is None:
                continue
            value = self._sense_value(self._outcomes(predicted, channel), energy, option, horizon)
            if value > best_value:
                best_value, best_channel = value, channel
        if best_channel is None or idle_value > best_value:
            return idle_value, None
        return best_value, best_channel

    def expected_value(self, belief: np.ndarray, energy: float, horizon: int) -> float:
        """Value before the slot's gains are revealed (expectation over gains)."""
        if horizon <= 0:
            return 0.0
        # Once every remaining slot can afford its dearest option the value no
        # longer depends on the battery level.
        energy_key = np.inf if energy >= horizon * self._ample_per_slot else float(energy)
        key = (horizon, np.ascontiguousarray(belief, dtype=float).tobytes(), energy_key)
        cached = self._memo.get(key)
        if cached is not None:
            return cached

        ctx = self.ctx
        predicted = predict_joint(belief, ctx.jt)
        if energy < ctx.e_est_total:
            value = self._continuation(predicted, energy, horizon - 1)
        else:
            idle_value = self._continuation(predicted, energy - ctx.e_est_total, horizon - 1)
            per_channel = []
            for channel in range(ctx.n_channels):
                outcomes = self._outcomes(predicted, channel)
                per_region = []
                for rep_gain in ctx.rate_table.region_rep_gain:
                    option = self._option(rep_gain, energy, ctx.sensing_costs[channel])
                    if option is None:
                        per_region.append(idle_value)
                    else:
                        sensed = self._sense_value(outcomes, energy, option, horizon)
                        per_region.append(max(sensed, idle_value))
                per_channel.append(per_region)
            value = expected_maximum(idle_value, per_channel, ctx.rate_table.region_probs)

        if len(self._memo) >= MEMO_LIMIT:
            logger.debug(f"Planner memo reached {MEMO_LIMIT} entries; clearing it")
            self._memo.clear()
        self._memo[key] = value
        return value

    # recursion pieces

    def _largest_spend(self, sensing_cost) -> float:
        """Sensing plus the dearest lookahead transmission on one channel."""
        ctx = self.ctx
        costs = ctx.slot_costs(sensing_cost)
        if costs.t_tr <= 0:
            return 0.0
        rt = ctx.rate_table
        e_tx = max(
            transmission_cost(gain, rt.constellation(region), costs.t_tr, ctx.power)
            for region, gain in enumerate(rt.region_rep_gain, start=1) if region > 1
        )
        return costs.e_s + e_tx

    def _option(self, gain, energy, sensing_cost) -> Optional[_Option]:
        ctx = self.ctx
        costs = ctx.slot_costs(sensing_cost)
        eta = spectral_efficiency(gain, energy, costs, ctx.rate_table, ctx.power)
        if eta <= 0:
            return None
        m = ctx.rate_table.constellation(gain_region(gain, ctx.rate_table))
        return _Option(
            reward=ctx.reward(eta, costs),
            e_s=costs.e_s,
            e_tx=transmission_cost(gain, m, costs.t_tr, ctx.power),
        )

    def _outcomes(self, predicted, channel) -> tuple:
        """(probability, posterior, transmitted, acknowledged) per sensing outcome."""
        ctx = self.ctx
        p_idle = float(predicted[self._idle_bits[:, channel]].sum())
        p_ack = p_idle * (1.0 - ctx.p_f)
        p_collision = (1.0 - p_idle) * (1.0 - ctx.p_d)
        p_busy = max(1.0 - p_ack - p_collision, 0.0)
        outcomes = []
        for prob, o, ack in ((p_ack, 1, True), (p_collision, 1, False), (p_busy, 0, None)):
            if prob > 0:
                outcomes.append((prob, condition_joint(predicted, channel, o, ack, ctx.p_d, ctx.p_f), o == 1, ack is True))
        return tuple(outcomes)

    def _sense_value(self, outcomes, energy, option: _Option, horizon) -> float:
        after_sensing = energy - self.ctx.e_est_total - option.e_s
        after_transmission = after_sensing - option.e_tx
        value = 0.0
        for prob, belief, transmitted, acknowledged in outcomes:
            left = after_transmission if transmitted else after_sensing
            gain = option.reward if acknowledged else 0.0
            value += prob * (gain + self._continuation(belief, left, horizon - 1))
        return value

    def _continuation(self, belief, energy_left, horizon) -> float:
        """Expectation over the harvest draw of the next slot's value."""
        if horizon <= 0:
            return 0.0
        total = 0.0
        for prob, harvested in self._harvest:
            next_energy = min(energy_left + harvested, self.ctx.e_max) if harvested else energy_left
            total += prob * self.expected_value(belief, next_energy, horizon)
        return total


def expected_maximum(floor: float, per_channel: Sequence[Sequence[float]], probs: Sequence[float]) -> float:
    """
    E[max(floor, X_1, ..., X_n)] for independent X_i taking per_channel[i][k]
    with probability probs[k].
    """
    if not per_channel:
        return floor
    values = np.maximum(np.asarray(per_channel, dtype=float), floor)
    probs = np.asarray(probs, dtype=float)
    grid = np.unique(values)
    # P(X_i <= v) for every channel and grid point, then the product over channels
    cdf = ((values[:, :, None] <= grid[None, None, :]) * probs[None, :, None]).sum(axis=1).prod(axis=0)
    mass = np.diff(np.concatenate(([0.0], cdf)))
    return float(np.dot(grid, mass))


def optimal_value(b: BeliefJoint, e: float, gains: Sequence[float], t: int, ctx: PlanningContext,
                  sensing_costs=None) -> Tuple[float, Optional[int]]:
    """Best expected total reward over t slots and the channel to sense now."""
    planner = OptimalPlanner(ctx)
    value, channel = planner.decide(b.b, e, gains, t, sensing_costs)
    logger.debug(f"Planner visited {planner.nodes} belief/energy nodes (t={t}, value={value:.6g})")
    return value, channel


_local = threading.local()


def shared_planner(ctx: PlanningContext, key: Hashable) -> OptimalPlanner:
    """
    The calling thread's planner for ``key``, built from ``ctx`` on first use.
    Callers must pass the same key only for equal contexts.
    """
    planners = getattr(_local, 'planners', None)
    if planners is None:
        planners = _local.planners = OrderedDict()
    planner = planners.get(key)
    if planner is None:
        if len(planners) >= MAX_SHARED_PLANNERS:
            planners.popitem(last=False)
        planner = planners[key] = OptimalPlanner(ctx)
    else:
        planners.move_to_end(key)
    return planner
