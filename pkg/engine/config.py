"""
Simulation configuration.

``SimConfig`` keeps only plain values so it can travel to Celery workers as
JSON; the model objects (chains, detector spec, rate table, contexts for the
policies) are built from it on first use.
"""
import dataclasses
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

from ehcrsim.exceptions import ConfigurationError
from occupancy.chains import ChannelChain, joint_transition, stationary_idle_prob
from occupancy.exceptions import DegenerateChain
from phy.detection import SensingSpec, min_sensing_samples, min_sensing_time, sensing_energy
from phy.power import PowerParams, estimation_energy
from phy.rates import RateTable
from policy.optimal import MAX_CHANNELS, MAX_HORIZON, PER_SLOT, SLOT_TIME, PlanningContext
from policy.registry import OPTIMAL, POLICIES, PolicyContext
from policy.selection import ActionSets

AWGN = 'awgn'
RAYLEIGH = 'rayleigh'
SENSING_CHANNELS = (AWGN, RAYLEIGH)
REWARD_BASES = (SLOT_TIME, PER_SLOT)

_TUPLE_FIELDS = ('alpha', 'beta', 'bandwidths', 'rate_boundaries')
# Fields the planner never reads
_RUN_ONLY_FIELDS = ('seed', 'iterations', 'episode_slots', 'e_init')


@dataclass(frozen=True)
class SimConfig:
    policy: str = 'myopic'
    n_channels: int = 5
    # One value applies to every channel
    alpha: Tuple[float, ...] = (0.5,)
    beta: Tuple[float, ...] = (0.7,)
    # Empty means every channel has the power model's bandwidth
    bandwidths: Tuple[float, ...] = ()
    # None means estimate every channel
    lambda0: Optional[int] = None
    lambda1: int = 1
    lambda2: int = 1
    p_col: float = 0.1
    p_f: float = 0.1
    gamma_db: float = 0.0
    f_s: float = 2e5
    e_sample: float = 0.11e-6
    sensing_channel: str = AWGN
    power: PowerParams = field(default_factory=PowerParams)
    rates_k: int = 4
    # Empty means equal-probability regions
    rate_boundaries: Tuple[float, ...] = ()
    p_eh: float = 0.06  # J/s
    e_h: float = 180e-6
    e_max: Optional[float] = None
    e_init: Optional[float] = None
    slot_duration: float = 1e-3
    horizon: int = 5
    episode_slots: int = 1000
    iterations: int = 10_000
    seed: int = 0
    reward_basis: str = SLOT_TIME
    constant_m: int = 4

    def __post_init__(self):
        for name in _TUPLE_FIELDS:
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if isinstance(self.power, dict):
            object.__setattr__(self, 'power', PowerParams(**self.power))

        n = self.n_channels
        if n < 1:
            raise ConfigurationError(f"At least one channel is needed (got {n})")
        for name in ('alpha', 'beta'):
            if len(getattr(self, name)) not in (1, n):
                raise ConfigurationError(f"'{name}' needs 1 or {n} values")
        if self.bandwidths and len(self.bandwidths) != n:
            raise ConfigurationError(f"'bandwidths' needs {n} values")
        if any(b <= 0 for b in self.bandwidths):
            raise ConfigurationError("Bandwidths must be positive")
        if self.policy not in POLICIES:
            raise ConfigurationError(f"Unknown policy '{self.policy}'; choose one of {', '.join(sorted(POLICIES))}")
        if self.sensing_channel not in SENSING_CHANNELS:
            raise ConfigurationError(f"Sensing channel must be one of {SENSING_CHANNELS}")
        if self.reward_basis not in REWARD_BASES:
            raise ConfigurationError(f"Reward basis must be one of {REWARD_BASES}")
        if not 0.0 < self.p_col < 1.0:
            raise ConfigurationError(f"P_col must lie in (0, 1) (got {self.p_col})")
        if self.slot_duration <= 0 or self.p_eh < 0 or self.e_h <= 0:
            raise ConfigurationError("Slot duration and e_h must be positive, P_EH non-negative")
        if min(self.horizon, self.episode_slots, self.iterations) < 1:
            raise ConfigurationError("Horizon, episode length and iterations must be at least 1")
        if self.constant_m < 2 or math.log2(self.constant_m) % 2:
            raise ConfigurationError(f"Constant-rate constellation must be a square QAM size (got {self.constant_m})")

        self.action_sets.validate(n)
        # Building the model objects runs their own range checks.
        _ = (self.chains, self.sensing, self.rate_table)
        try:
            for chain in self.chains:
                stationary_idle_prob(chain)
        except DegenerateChain as exc:
            raise ConfigurationError(str(exc)) from exc
        if self.t_est_total >= self.slot_duration:
            raise ConfigurationError("Estimating the channels takes the whole slot")
        if self.p_eh * self.slot_duration > self.e_h * (1.0 + 1e-9):
            raise ConfigurationError(
                f"P_EH*T = {self.p_eh * self.slot_duration!r} J exceeds e_h = {self.e_h!r} J; raise harvest.e_h"
            )
        if not 0.0 <= self.battery_init <= self.battery_max:
            raise ConfigurationError("Initial battery must lie in [0, e_max]")
        if self.policy == OPTIMAL:
            if self.action_sets.lambda0 != n or n > MAX_CHANNELS:
                raise ConfigurationError(
                    f"The optimal policy estimates every channel and plans over at most {MAX_CHANNELS}"
                )
            if self.action_sets.lambda1 != 1:
                raise ConfigurationError("The optimal policy senses one channel per slot")
            if self.horizon > MAX_HORIZON:
                raise ConfigurationError(f"Planning horizon is limited to {MAX_HORIZON} slots")

    # serialisation

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        for name in _TUPLE_FIELDS:
            data[name] = list(data[name])
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'SimConfig':
        return cls(**data)

    def replace(self, **changes) -> 'SimConfig':
        return dataclasses.replace(self, **changes)

    # derived model

    @cached_property
    def chains(self) -> Tuple[ChannelChain, ...]:
        def per_channel(values):
            return values * self.n_channels if len(values) == 1 else values
        return tuple(ChannelChain(a, b) for a, b in zip(per_channel(self.alpha), per_channel(self.beta)))

    @cached_property
    def sensing(self) -> SensingSpec:
        return SensingSpec.from_collision(
            self.p_col, self.p_f, gamma_db=self.gamma_db, f_s=self.f_s, e_s_sample=self.e_sample
        )

    @cached_property
    def rate_table(self) -> RateTable:
        if self.rate_boundaries:
            if len(self.rate_boundaries) != self.rates_k - 1:
                raise ConfigurationError(f"K={self.rates_k} regions need {self.rates_k - 1} boundaries")
            return RateTable.from_boundaries(self.rate_boundaries)
        return RateTable.exponential(self.rates_k)

    @cached_property
    def action_sets(self) -> ActionSets:
        lambda0 = self.n_channels if self.lambda0 is None else self.lambda0
        return ActionSets(lambda0=lambda0, lambda1=self.lambda1, lambda2=self.lambda2)

    @property
    def channel_bandwidths(self) -> Tuple[float, ...]:
        return self.bandwidths or (self.power.b,) * self.n_channels

    @property
    def battery_max(self) -> float:
        return 10.0 * self.e_h if self.e_max is None else self.e_max

    @property
    def battery_init(self) -> float:
        return self.battery_max / 2.0 if self.e_init is None else self.e_init

    @property
    def p_h(self) -> float:
        """Per-slot harvest probability, P_EH * T / e_h."""
        return min(self.p_eh * self.slot_duration / self.e_h, 1.0)

    @property
    def e_est_total(self) -> float:
        return self.action_sets.lambda0 * estimation_energy(self.power)

    @property
    def t_est_total(self) -> float:
        return self.action_sets.lambda0 * self.power.t_est

    @cached_property
    def nominal_sensing_cost(self) -> Tuple[float, float]:
        """(e_s, T_s) at unit sensing-channel gain."""
        samples = min_sensing_samples(self.sensing, 1.0)
        return sensing_energy(samples, self.e_sample), min_sensing_time(samples, self.f_s)

    def reward(self, eta: float, t_tr: float) -> float:
        if self.reward_basis == SLOT_TIME:
            return eta * t_tr / self.slot_duration
        return float(eta)

    def planning_context(self) -> PlanningContext:
        return PlanningContext(
            jt=joint_transition(self.chains),
            p_d=self.sensing.p_d,
            p_f=self.p_f,
            rate_table=self.rate_table,
            power=self.power,
            slot_duration=self.slot_duration,
            e_est_total=self.e_est_total,
            t_est_total=self.t_est_total,
            sensing_costs=(self.nominal_sensing_cost,) * self.n_channels,
            p_h=self.p_h,
            e_h=self.e_h,
            e_max=self.battery_max,
            reward_basis=self.reward_basis,
        )

    @cached_property
    def planner_key(self) -> str:
        """Equal for configs that build equal planning contexts."""
        fields = {name: value for name, value in self.to_dict().items() if name not in _RUN_ONLY_FIELDS}
        return json.dumps(fields, sort_keys=True)

    def policy_context(self) -> PolicyContext:
        return PolicyContext(
            chains=self.chains,
            p_d=self.sensing.p_d,
            p_f=self.p_f,
            rate_table=self.rate_table,
            power=self.power,
            bandwidths=self.channel_bandwidths,
            constant_m=self.constant_m,
            planning=self.planning_context() if self.policy == OPTIMAL else None,
            planner_key=self.planner_key if self.policy == OPTIMAL else None,
        )
