"""
Episodes and Monte Carlo aggregation.

Replications are split into fixed-size chunks and handed to Celery; results
are put back in replication order before anything is summed, so the
aggregate does not depend on chunking or on which worker finished first.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Optional, Tuple

import numpy as np
from celery import group
from django.conf import settings

from ehcrsim.exceptions import SimulationError
from occupancy.chains import initial_state
from policy.registry import build_policy
from .config import SimConfig
from .slots import COLLISION, OUTAGE, SLOT_KINDS, SUCCESS, UNSENSABLE, SlotOutcome, SuState, run_slot
from .streams import make_streams

logger = logging.getLogger(__name__)


def _empty_table():
    return [[0, 0], [0, 0]]


@dataclass
class RunMetrics:
    slots: int = 0
    reward_sum: float = 0.0
    kinds: Dict[str, int] = field(default_factory=lambda: dict.fromkeys(SLOT_KINDS, 0))
    harvested: float = 0.0
    consumed: float = 0.0
    unsensable_channels: int = 0
    # Sensing counts: row = true state (0 occupied, 1 idle), column = observation
    observation_table: List[List[int]] = field(default_factory=_empty_table)
    trace: List[SlotOutcome] = field(default_factory=list)

    def record(self, outcome: SlotOutcome, keep_trace: bool = False):
        self.slots += 1
        self.reward_sum += outcome.reward
        self.kinds[outcome.kind] += 1
        self.harvested += outcome.harvested
        self.consumed += outcome.consumed
        self.unsensable_channels += len(outcome.unsensable)
        for state, o in zip(outcome.sensed_states, outcome.observations):
            self.observation_table[state][o] += 1
        if keep_trace:
            self.trace.append(outcome)

    def merge(self, other: 'RunMetrics') -> 'RunMetrics':
        return RunMetrics(
            slots=self.slots + other.slots,
            reward_sum=self.reward_sum + other.reward_sum,
            kinds={kind: self.kinds[kind] + other.kinds[kind] for kind in SLOT_KINDS},
            harvested=self.harvested + other.harvested,
            consumed=self.consumed + other.consumed,
            unsensable_channels=self.unsensable_channels + other.unsensable_channels,
            observation_table=[
                [a + b for a, b in zip(mine, theirs)]
                for mine, theirs in zip(self.observation_table, other.observation_table)
            ],
        )

    @property
    def mean_efficiency(self) -> float:
        """Average reward per slot, bits/s/Hz."""
        return self.reward_sum / self.slots if self.slots else 0.0

    def rate(self, kind: str) -> float:
        return self.kinds[kind] / self.slots if self.slots else 0.0

    def to_dict(self) -> dict:
        return {
            'slots': self.slots,
            'reward_sum': self.reward_sum,
            'kinds': dict(self.kinds),
            'harvested': self.harvested,
            'consumed': self.consumed,
            'unsensable_channels': self.unsensable_channels,
            'observation_table': [list(row) for row in self.observation_table],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'RunMetrics':
        return cls(**data)


@dataclass(frozen=True)
class MonteCarloResult:
    metrics: RunMetrics
    efficiencies: Tuple[float, ...]
    seed: int

    @property
    def iterations(self) -> int:
        return len(self.efficiencies)

    @property
    def mean_efficiency(self) -> float:
        return math.fsum(self.efficiencies) / self.iterations

    @property
    def stderr(self) -> float:
        if self.iterations < 2:
            return 0.0
        return float(np.std(self.efficiencies, ddof=1) / math.sqrt(self.iterations))

    @property
    def collision_rate(self) -> float:
        return self.metrics.rate(COLLISION)

    @property
    def outage_rate(self) -> float:
        return self.metrics.rate(OUTAGE)

    @property
    def unsensable_rate(self) -> float:
        return self.metrics.rate(UNSENSABLE)

    @property
    def success_rate(self) -> float:
        return self.metrics.rate(SUCCESS)


def run_episode(config: SimConfig, seed: Optional[int] = None, replication: int = 0,
                trace: bool = False) -> RunMetrics:
    """One replication; deterministic in (config, seed, replication)."""
    streams = make_streams(config.seed if seed is None else seed, replication)
    policy = build_policy(config.policy, config.policy_context(), streams.policy)
    state = SuState(
        pn=initial_state(config.chains, streams.occupancy),
        energy=config.battery_init,
        policy=policy,
    )
    metrics = RunMetrics()
    for slot in range(config.episode_slots):
        horizon = min(config.horizon, config.episode_slots - slot)
        metrics.record(run_slot(state, config, streams, horizon), keep_trace=trace)
    return metrics


def replication_chunks(iterations: int, chunk_size: int) -> List[Tuple[int, int]]:
    if iterations < 1 or chunk_size < 1:
        raise ValueError(f"Need iterations >= 1 and chunk_size >= 1 (got {iterations}, {chunk_size})")
    return [(start, min(start + chunk_size, iterations)) for start in range(0, iterations, chunk_size)]


def monte_carlo(config: SimConfig, iterations: Optional[int] = None, seed: Optional[int] = None,
                chunk_size: Optional[int] = None) -> MonteCarloResult:
    from .tasks import run_replications

    iterations = config.iterations if iterations is None else iterations
    seed = config.seed if seed is None else seed
    chunks = replication_chunks(iterations, chunk_size or settings.EHCR_CHUNK_SIZE)
    logger.info(
        f"Running {iterations} replications of '{config.policy}' "
        f"({config.episode_slots} slots each) in {len(chunks)} chunks, seed={seed}"
    )

    payload = config.to_dict()
    job = group(run_replications.s(payload, seed, start, stop) for start, stop in chunks)
    chunk_results = job.apply_async().get(timeout=settings.EHCR_RESULT_TIMEOUT)

    by_replication = {}
    for chunk in chunk_results:
        for item in chunk:
            by_replication[item['replication']] = RunMetrics.from_dict(item['metrics'])
    missing = set(range(iterations)) - set(by_replication)
    if missing:
        raise SimulationError(f"{len(missing)} replications returned no result")

    ordered = [by_replication[replication] for replication in range(iterations)]
    result = MonteCarloResult(
        metrics=reduce(RunMetrics.merge, ordered),
        efficiencies=tuple(metrics.mean_efficiency for metrics in ordered),
        seed=seed,
    )
    if result.metrics.kinds[UNSENSABLE]:
        logger.warning(f"{result.metrics.kinds[UNSENSABLE]} of {result.metrics.slots} slots could not be sensed")
    logger.info(f"Mean efficiency {result.mean_efficiency:.6g} +/- {result.stderr:.2g} bits/s/Hz")
    return result
