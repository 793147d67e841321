"""
Sensing order for one slot: the myopic criterion, the baselines it is
compared against, and the access rule.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ehcrsim.exceptions import ConfigurationError
from occupancy.chains import ChannelChain
from .beliefs import BeliefFactored
from .criterion import myopic_expected_reward


@dataclass(frozen=True)
class ActionSets:
    """Sizes of the estimate / sense / access sets."""
    lambda0: int
    lambda1: int
    lambda2: int = 1

    def validate(self, n_channels: int):
        if self.lambda2 != 1:
            raise ConfigurationError("Exactly one sensed channel can be accessed per slot")
        if not 1 <= self.lambda2 <= self.lambda1 <= self.lambda0 <= n_channels:
            raise ConfigurationError(
                f"Action sets must satisfy 1 <= |L2| <= |L1| <= |L0| <= N "
                f"(got {self.lambda2}, {self.lambda1}, {self.lambda0}, N={n_channels})"
            )


@dataclass(frozen=True)
class SlotDecision:
    a_hat: Optional[int]
    o: Optional[int]
    d: int
    eta: float

    def __post_init__(self):
        if self.d == 1 and self.o != 1:
            raise ValueError("Access is only allowed after an idle observation")
        if self.eta > 0 and self.d != 1:
            raise ValueError("A positive rate needs an access decision")


def access_decision(o: int) -> int:
    return 1 if o == 1 else 0


def _ranked(scores, candidates, limit):
    # Stable sort on descending score keeps the lower channel index first on ties.
    ordered = sorted(candidates, key=lambda channel: (-scores[channel], channel))
    return ordered[:limit]


def rank_channels_myopic(beliefs: BeliefFactored, etas: Sequence[float], chains: Sequence[ChannelChain],
                         limit: int, candidates: Optional[Sequence[int]] = None) -> List[int]:
    """Channels with positive rate, best expected one-slot reward first."""
    if candidates is None:
        candidates = range(len(chains))
    eligible = [channel for channel in candidates if etas[channel] > 0]
    scores = {
        channel: myopic_expected_reward(beliefs.pi[channel], chains[channel], etas[channel])
        for channel in eligible
    }
    return _ranked(scores, eligible, limit)


def baseline_belief_bandwidth(beliefs: BeliefFactored, bandwidths: Sequence[float],
                              chains: Sequence[ChannelChain], limit: int,
                              candidates: Optional[Sequence[int]] = None) -> List[int]:
    """Rank on predicted idle probability times bandwidth, ignoring gain and energy."""
    if candidates is None:
        candidates = range(len(chains))
    candidates = list(candidates)
    scores = {
        channel: chains[channel].predict_idle(beliefs.pi[channel]) * bandwidths[channel]
        for channel in candidates
    }
    return _ranked(scores, candidates, limit)


def baseline_random(candidates: Sequence[int], rng: np.random.Generator, limit: int) -> List[int]:
    return [int(channel) for channel in rng.permutation(list(candidates))[:limit]]
