"""
Energy detection: minimum sample count, sensing time and sensing energy
needed to meet a detection / false alarm target on a CSCG channel.
"""
import math
from dataclasses import dataclass
from functools import cached_property

from scipy.stats import norm

from ehcrsim.exceptions import ConfigurationError
from .exceptions import UnsensableChannel


@dataclass(frozen=True)
class SensingSpec:
    """Detector targets and sampling parameters"""
    p_d: float
    p_f: float
    gamma: float = 1.0
    f_s: float = 2e5
    e_s_sample: float = 0.11e-6

    def __post_init__(self):
        if not 0.0 < self.p_f <= self.p_d < 1.0:
            raise ConfigurationError(
                f"Detector targets must satisfy 0 < p_f <= p_d < 1 (got p_f={self.p_f}, p_d={self.p_d})"
            )
        if self.gamma <= 0:
            raise ConfigurationError(f"SNR must be positive (got {self.gamma})")
        if self.f_s <= 0:
            raise ConfigurationError(f"Sampling rate must be positive (got {self.f_s})")
        if self.e_s_sample < 0:
            raise ConfigurationError(f"Energy per sample cannot be negative (got {self.e_s_sample})")

    @classmethod
    def from_collision(cls, p_col, p_f, gamma_db=0.0, **kwargs):
        """Build a SensingSpec from a collision target, P_D = 1 - P_col."""
        return cls(p_d=1.0 - p_col, p_f=p_f, gamma=10.0 ** (gamma_db / 10.0), **kwargs)

    @property
    def p_col(self):
        return 1.0 - self.p_d

    @cached_property
    def q_inv_targets(self):
        """(Q^-1(p_f), Q^-1(p_d)), fixed for the lifetime of the instance."""
        return q_inv(self.p_f), q_inv(self.p_d)


def q_inv(p):
    """Inverse of the Gaussian tail function Q."""
    return float(norm.isf(p))


def min_sensing_samples(spec: SensingSpec, h: float) -> int:
    """
    Minimum number of energy-detector samples meeting (p_d, p_f) when the
    PU-SU sensing channel has power gain ``h``.

    Raises UnsensableChannel when gamma * h is zero.
    """
    if h < 0:
        raise ValueError(f"Sensing channel gain cannot be negative (got {h})")
    snr = spec.gamma * h
    if snr <= 0:
        raise UnsensableChannel(f"No PU signal on the sensing channel (gamma*h={snr})")

    shrink = (1.0 + snr) ** (-1.0 / 3.0)
    denominator = 1.0 - shrink
    if denominator <= 0:
        # snr so small that the cube root rounds to 1
        raise UnsensableChannel(f"Sensing channel too weak to meet targets (gamma*h={snr})")

    q_f, q_d = spec.q_inv_targets
    p = (shrink * q_f - q_d) / denominator
    samples = math.ceil((p + math.sqrt(p * p + 4.0)) ** 2 / 36.0)
    return max(int(samples), 1)


def min_sensing_time(l: int, f_s: float) -> float:
    if l < 1 or f_s <= 0:
        raise ValueError(f"Need l >= 1 and f_s > 0 (got l={l}, f_s={f_s})")
    return l / f_s


def sensing_energy(l: int, e_per_sample: float) -> float:
    if l < 1 or e_per_sample < 0:
        raise ValueError(f"Need l >= 1 and e_per_sample >= 0 (got l={l}, e={e_per_sample})")
    return l * e_per_sample
