"""
Sensing policies by name.

A policy owns its belief for one episode: it orders the channels the
simulator may sense, sizes the link on a sensed channel and folds the
slot's observations back into its belief.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from ehcrsim.exceptions import ConfigurationError
from occupancy.chains import ChannelChain
from phy.power import PowerParams
from phy.rates import RateTable, gain_region
from .beliefs import (
    BeliefFactored, BeliefJoint, condition_joint, predict_joint, update_belief_myopic,
)
from .criterion import SlotCosts, baseline_constant_rate, spectral_efficiency
from .exceptions import InconsistentObservation, PlanningInfeasible
from .optimal import MAX_CHANNELS, MAX_HORIZON, OptimalPlanner, PlanningContext, shared_planner
from .selection import baseline_belief_bandwidth, baseline_random, rank_channels_myopic

logger = logging.getLogger(__name__)

OPTIMAL = 'optimal'
MYOPIC = 'myopic'
BELIEF_BANDWIDTH = 'belief-bandwidth'
RANDOM = 'random'
CONSTANT_RATE = 'constant-rate'


@dataclass(frozen=True)
class PolicyContext:
    chains: Tuple[ChannelChain, ...]
    p_d: float
    p_f: float
    rate_table: RateTable
    power: PowerParams
    bandwidths: Tuple[float, ...]
    constant_m: int = 4
    planning: Optional[PlanningContext] = None
    # Episodes with the same key reuse one planner per thread
    planner_key: Optional[Hashable] = None


@dataclass
class SlotView:
    """What a policy may look at when ordering channels for one slot."""
    candidates: Tuple[int, ...]
    etas: Dict[int, float]
    gains: Sequence[float]
    energy: float
    sensing_costs: Dict[int, Tuple[float, float]]
    limit: int
    horizon: int = 1


class SensingPolicy:
    name = ''
    uses_joint_belief = False
    # Only channels with a positive rate are worth sensing
    requires_rate = True

    def __init__(self, ctx: PolicyContext, rng: np.random.Generator):
        self.ctx = ctx
        self.rng = rng
        self.beliefs = BeliefFactored.stationary(ctx.chains)

    def predicted_idle(self) -> Tuple[float, ...]:
        return self.beliefs.predicted(self.ctx.chains)

    def link(self, gain: float, energy: float, costs: SlotCosts) -> Tuple[float, int]:
        """(eta, constellation size) for transmitting at ``gain``; (0, 1) when nothing is sent."""
        rt = self.ctx.rate_table
        eta = spectral_efficiency(gain, energy, costs, rt, self.ctx.power)
        if eta <= 0:
            return 0.0, 1
        return float(eta), rt.constellation(gain_region(gain, rt))

    def order(self, view: SlotView) -> List[int]:
        raise NotImplementedError

    def observe(self, sensed: Dict[int, Tuple[int, Optional[bool]]]) -> None:
        """Fold (o, ack) per sensed channel into the belief; unsensed channels just propagate."""
        ctx = self.ctx
        pi = []
        for channel, (chain, pi_i) in enumerate(zip(ctx.chains, self.beliefs.pi)):
            o, ack = sensed.get(channel, (None, None))
            try:
                pi.append(update_belief_myopic(pi_i, o, ack, chain, ctx.p_d, ctx.p_f))
            except InconsistentObservation as exc:
                logger.warning(f"{exc}; falling back to the propagated belief")
                pi.append(chain.predict_idle(pi_i))
        self.beliefs = BeliefFactored(tuple(pi))


class MyopicPolicy(SensingPolicy):
    name = MYOPIC

    def order(self, view: SlotView) -> List[int]:
        etas = [view.etas.get(channel, 0.0) for channel in range(len(self.ctx.chains))]
        return rank_channels_myopic(self.beliefs, etas, self.ctx.chains, view.limit, view.candidates)


class ConstantRatePolicy(MyopicPolicy):
    """Myopic ranking, but every transmission uses one fixed constellation."""
    name = CONSTANT_RATE

    def link(self, gain: float, energy: float, costs: SlotCosts) -> Tuple[float, int]:
        eta = baseline_constant_rate(gain, energy, self.ctx.constant_m, costs, self.ctx.power)
        if eta <= 0:
            return 0.0, 1
        return float(eta), self.ctx.constant_m


class BeliefBandwidthPolicy(SensingPolicy):
    name = BELIEF_BANDWIDTH
    requires_rate = False

    def order(self, view: SlotView) -> List[int]:
        return baseline_belief_bandwidth(
            self.beliefs, self.ctx.bandwidths, self.ctx.chains, view.limit, view.candidates
        )


class RandomPolicy(SensingPolicy):
    name = RANDOM
    requires_rate = False

    def order(self, view: SlotView) -> List[int]:
        return baseline_random(view.candidates, self.rng, view.limit)


class OptimalPolicy(SensingPolicy):
    name = OPTIMAL
    uses_joint_belief = True

    def __init__(self, ctx: PolicyContext, rng: np.random.Generator):
        super().__init__(ctx, rng)
        if ctx.planning is None:
            raise ConfigurationError("The optimal policy needs a planning context")
        if len(ctx.chains) > MAX_CHANNELS:
            raise PlanningInfeasible(
                f"Optimal planning supports at most {MAX_CHANNELS} channels (got {len(ctx.chains)}); "
                f"use the myopic policy"
            )
        self.joint = BeliefJoint.stationary(ctx.chains)
        if ctx.planner_key is None:
            self.planner = OptimalPlanner(ctx.planning)
        else:
            self.planner = shared_planner(ctx.planning, ctx.planner_key)

    def predicted_idle(self) -> Tuple[float, ...]:
        predicted = BeliefJoint(predict_joint(self.joint.b, self.ctx.planning.jt))
        return tuple(predicted.marginal_idle(channel) for channel in range(len(self.ctx.chains)))

    def order(self, view: SlotView) -> List[int]:
        n = len(self.ctx.chains)
        costs = [view.sensing_costs.get(channel) if channel in view.candidates else None for channel in range(n)]
        horizon = min(max(view.horizon, 1), MAX_HORIZON)
        _, channel = self.planner.decide(self.joint.b, view.energy, view.gains, horizon, costs)
        return [] if channel is None else [channel]

    def observe(self, sensed: Dict[int, Tuple[int, Optional[bool]]]) -> None:
        ctx = self.ctx
        predicted = predict_joint(self.joint.b, ctx.planning.jt)
        belief = predicted
        try:
            for channel in sorted(sensed):
                o, ack = sensed[channel]
                belief = condition_joint(belief, channel, o, ack, ctx.p_d, ctx.p_f)
        except InconsistentObservation as exc:
            logger.warning(f"{exc}; falling back to the propagated belief")
            belief = predicted
        self.joint = BeliefJoint(belief)


POLICIES = {
    cls.name: cls
    for cls in (OptimalPolicy, MyopicPolicy, BeliefBandwidthPolicy, RandomPolicy, ConstantRatePolicy)
}


def build_policy(name: str, ctx: PolicyContext, rng: np.random.Generator) -> SensingPolicy:
    try:
        policy_cls = POLICIES[name]
    except KeyError:
        raise ConfigurationError(f"Unknown policy '{name}'; choose one of {', '.join(sorted(POLICIES))}")
    return policy_cls(ctx, rng)
