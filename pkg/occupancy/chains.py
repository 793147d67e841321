"""
Primary network occupancy: independent two-state Markov chains per channel
(0 = occupied, 1 = idle), their product chain over 2^N joint states, and the
ground-truth stepping used by the simulator.
"""
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Sequence, Tuple

import numpy as np

from ehcrsim.exceptions import ConfigurationError
from .exceptions import DegenerateChain, JointModelInfeasible

OCCUPIED = 0
IDLE = 1

MAX_JOINT_CHANNELS = 12


@dataclass(frozen=True)
class ChannelChain:
    """alpha: P(occupied -> idle), beta: P(idle -> idle)"""
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ('alpha', 'beta'):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"Transition probability '{name}' must lie in [0, 1] (got {value})")

    @property
    def matrix(self) -> np.ndarray:
        """Row-stochastic 2x2 matrix; row = current state, column = next state."""
        return np.array([
            [1.0 - self.alpha, self.alpha],
            [1.0 - self.beta, self.beta],
        ])

    def predict_idle(self, pi: float) -> float:
        """Idle probability one slot ahead given current idle probability pi."""
        return pi * self.beta + (1.0 - pi) * self.alpha


@dataclass(frozen=True)
class PnState:
    s: Tuple[int, ...]

    def __len__(self):
        return len(self.s)

    def step(self, chains: Sequence[ChannelChain], uniforms: Sequence[float]) -> 'PnState':
        return PnState(tuple(
            step_channel(s_i, chain, u) for s_i, chain, u in zip(self.s, chains, uniforms)
        ))

    def is_idle(self, channel: int) -> bool:
        return self.s[channel] == IDLE


@dataclass(frozen=True)
class JointTransition:
    """P[s, s'] over joint states indexed by joint_states(n)."""
    p: np.ndarray

    @property
    def n_channels(self) -> int:
        return int(round(np.log2(self.p.shape[0])))


def step_channel(s_i: int, chain: ChannelChain, u: float) -> int:
    threshold = chain.beta if s_i == IDLE else chain.alpha
    return IDLE if u < threshold else OCCUPIED


@lru_cache(maxsize=None)
def joint_states(n: int) -> np.ndarray:
    """All 2^n occupancy vectors, channel 0 as the most significant bit. Shared; do not mutate."""
    index = np.arange(2 ** n)[:, None]
    shifts = np.arange(n - 1, -1, -1)[None, :]
    return (index >> shifts) & 1


def joint_transition(chains: Sequence[ChannelChain]) -> JointTransition:
    n = len(chains)
    if n < 1:
        raise ConfigurationError("At least one channel is needed")
    if n > MAX_JOINT_CHANNELS:
        raise JointModelInfeasible(
            f"{n} channels give {2 ** n} joint states; the limit is {MAX_JOINT_CHANNELS} channels"
        )
    return JointTransition(reduce(np.kron, [chain.matrix for chain in chains]))


def marginal(jt: JointTransition, channel: int) -> np.ndarray:
    """Recover one channel's 2x2 matrix from the product chain."""
    n = jt.n_channels
    bits = joint_states(n)[:, channel]
    result = np.zeros((2, 2))
    for s_from in (OCCUPIED, IDLE):
        # Every row with the same bit gives the same marginal; take the first.
        row = jt.p[np.flatnonzero(bits == s_from)[0]]
        for s_to in (OCCUPIED, IDLE):
            result[s_from, s_to] = row[bits == s_to].sum()
    return result


def stationary_idle_prob(chain: ChannelChain) -> float:
    rate = chain.alpha + (1.0 - chain.beta)
    if rate <= 0:
        raise DegenerateChain(
            f"Chain with alpha={chain.alpha}, beta={chain.beta} has no unique stationary distribution"
        )
    return chain.alpha / rate


def initial_state(chains: Sequence[ChannelChain], rng: np.random.Generator) -> PnState:
    """Draw each channel from its stationary distribution."""
    idle_probs = [stationary_idle_prob(chain) for chain in chains]
    draws = rng.random(len(chains))
    return PnState(tuple(IDLE if u < p else OCCUPIED for u, p in zip(draws, idle_probs)))
