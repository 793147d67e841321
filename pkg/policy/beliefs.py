"""
Belief state over primary network occupancy.

Two representations are kept: the joint belief over all 2^N occupancy
vectors (used by the finite-horizon planner) and the factored per-channel
idle probabilities (used by the myopic and baseline policies). Both store
the posterior for the *last* slot; prediction to the next slot happens
inside the update.
"""
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from occupancy.chains import IDLE, OCCUPIED, ChannelChain, JointTransition, joint_states, stationary_idle_prob
from .exceptions import InconsistentObservation

NORMALIZATION_TOLERANCE = 1e-9


def observation_prob(o: int, s: int, p_d: float, p_f: float) -> float:
    """P(o | s) for the energy detector; o = 0 reports busy, o = 1 reports idle."""
    if o == 0:
        return p_d if s == OCCUPIED else p_f
    return (1.0 - p_d) if s == OCCUPIED else (1.0 - p_f)


@dataclass
class BeliefJoint:
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        if np.any(self.b < 0) or abs(self.b.sum() - 1.0) > NORMALIZATION_TOLERANCE:
            raise ValueError(f"Joint belief must be a probability vector (sum={self.b.sum()})")

    @property
    def n_channels(self) -> int:
        return int(round(np.log2(self.b.size)))

    @classmethod
    def from_factored(cls, pi: Sequence[float]) -> 'BeliefJoint':
        states = joint_states(len(pi))
        pi = np.asarray(pi, dtype=float)
        probs = np.where(states == IDLE, pi[None, :], 1.0 - pi[None, :]).prod(axis=1)
        return cls(probs)

    @classmethod
    def stationary(cls, chains: Sequence[ChannelChain]) -> 'BeliefJoint':
        return cls.from_factored([stationary_idle_prob(chain) for chain in chains])

    def marginal_idle(self, channel: int) -> float:
        bits = joint_states(self.n_channels)[:, channel]
        return float(self.b[bits == IDLE].sum())


@dataclass(frozen=True)
class BeliefFactored:
    pi: Tuple[float, ...]

    def __post_init__(self):
        if any(not 0.0 <= p <= 1.0 for p in self.pi):
            raise ValueError(f"Idle beliefs must lie in [0, 1] (got {self.pi})")

    @classmethod
    def stationary(cls, chains: Sequence[ChannelChain]) -> 'BeliefFactored':
        return cls(tuple(stationary_idle_prob(chain) for chain in chains))

    def predicted(self, chains: Sequence[ChannelChain]) -> Tuple[float, ...]:
        return tuple(chain.predict_idle(p) for p, chain in zip(self.pi, chains))

    def replace(self, channel: int, value: float) -> 'BeliefFactored':
        pi = list(self.pi)
        pi[channel] = value
        return BeliefFactored(tuple(pi))


def predict_joint(b: np.ndarray, jt: JointTransition) -> np.ndarray:
    """Propagate a joint belief one slot through the product chain."""
    return b @ jt.p


def observation_likelihood(bits: np.ndarray, o: int, ack: Optional[bool], p_d: float, p_f: float) -> np.ndarray:
    """Likelihood of (o, ack) for each joint state given the sensed channel's bits."""
    idle = bits == IDLE
    if o == 1 and ack is True:
        return idle.astype(float)
    if o == 1 and ack is False:
        return (~idle).astype(float)
    if o == 1:
        return np.where(idle, 1.0 - p_f, 1.0 - p_d)
    return np.where(idle, p_f, p_d)


def condition_joint(predicted: np.ndarray, channel: int, o: int, ack: Optional[bool],
                    p_d: float, p_f: float) -> np.ndarray:
    """Bayes update of an already-predicted joint belief on one sensed channel."""
    n = int(round(np.log2(predicted.size)))
    bits = joint_states(n)[:, channel]
    posterior = predicted * observation_likelihood(bits, o, ack, p_d, p_f)
    total = posterior.sum()
    if total <= 0:
        raise InconsistentObservation(
            f"Observation o={o}, ack={ack} on channel {channel} has zero probability"
        )
    return posterior / total


def update_belief_joint(b: BeliefJoint, a_hat: Optional[int], o: Optional[int], ack: Optional[bool],
                        jt: JointTransition, p_d: float, p_f: float) -> BeliefJoint:
    """
    Next joint belief. ``a_hat`` is the sensed channel (0-based) or None when
    nothing was sensed; ``ack`` is True/False only when a transmission took
    place after o = 1, None otherwise.
    """
    predicted = predict_joint(b.b, jt)
    if a_hat is None:
        return BeliefJoint(predicted)
    return BeliefJoint(condition_joint(predicted, a_hat, o, ack, p_d, p_f))


def update_belief_myopic(pi_i: float, o: Optional[int], ack: Optional[bool], chain: ChannelChain,
                         p_d: float, p_f: float) -> float:
    """Per-channel idle belief after one slot; o is None for an unsensed channel."""
    x = chain.predict_idle(pi_i)
    y = 1.0 - x
    if o is None:
        return x
    if o == 1 and ack is True:
        return 1.0
    if o == 1 and ack is False:
        return 0.0
    if o == 1:
        numerator, other = x * (1.0 - p_f), y * (1.0 - p_d)
    else:
        numerator, other = x * p_f, y * p_d
    if numerator + other <= 0:
        raise InconsistentObservation(f"Observation o={o} has zero probability at belief {pi_i}")
    return numerator / (numerator + other)
