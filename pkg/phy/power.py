"""
Transmit power for adaptive M-QAM, transmission / circuit energies and
channel estimation cost.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

from ehcrsim.exceptions import ConfigurationError
from .exceptions import NoTransmission


@dataclass(frozen=True)
class PowerParams:
    """Power model constants."""
    p_b: float = 1e-3
    c1: float = 2.0
    c2: float = 1.5
    c3: float = 1.0
    c4: float = 1.0
    n0: float = 2e-10
    b: float = 2e5
    p_ckt: float = 0.188
    kappa: float = 1.9
    estimation_fraction: float = 0.2
    reference_constellation: int = 16
    pilot_symbols: int = 14
    # Derived from the fields above when left as None
    p_est: Optional[float] = field(default=None)
    t_est: Optional[float] = field(default=None)

    def __post_init__(self):
        for name in ('p_b', 'c1', 'c2', 'c3', 'n0', 'b', 'kappa'):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"Power parameter '{name}' must be positive")
        if self.c4 < 0 or self.p_ckt < 0 or self.estimation_fraction < 0:
            raise ConfigurationError("c4, p_ckt and estimation_fraction cannot be negative")
        if not 0 < self.p_b < self.c1:
            raise ConfigurationError(f"Bit error target p_b must lie in (0, c1) (got {self.p_b})")
        if self.pilot_symbols < 1:
            raise ConfigurationError("At least one pilot symbol is needed for estimation")

        if self.t_est is None:
            object.__setattr__(self, 't_est', self.pilot_symbols / self.b)
        if self.p_est is None:
            reference_power = transmit_power(1.0, self.reference_constellation, self)
            object.__setattr__(self, 'p_est', self.estimation_fraction * reference_power)
        if self.p_est < 0 or self.t_est < 0:
            raise ConfigurationError("Estimation power and duration cannot be negative")

    @property
    def power_factor(self):
        """-ln(p_b / c1) / c2, the bit-error-rate term of the power law."""
        return -math.log(self.p_b / self.c1) / self.c2


def transmit_power(g: float, m_k: int, pp: PowerParams) -> float:
    """
    Power (W) needed to send M_k-QAM at bit error rate p_b over a channel
    with power gain g. Zero for M_k = 1 (no transmission).
    """
    if m_k == 1:
        return 0.0
    if g <= 0:
        raise NoTransmission(f"Cannot size transmit power for channel gain {g}")
    constellation_term = 2.0 ** (pp.c3 * math.log2(m_k)) - pp.c4
    return pp.power_factor * constellation_term * pp.n0 * pp.b / g


def transmission_energies(p_tr: float, t_tr: float, pp: PowerParams) -> Tuple[float, float]:
    """Return (e_tr, e_ckt) for transmitting at p_tr for t_tr seconds."""
    if p_tr < 0 or t_tr < 0:
        raise ValueError(f"Power and duration cannot be negative (got p_tr={p_tr}, t_tr={t_tr})")
    e_tr = p_tr * t_tr
    e_ckt = (pp.p_ckt + pp.kappa * p_tr) * t_tr
    return e_tr, e_ckt


def estimation_energy(pp: PowerParams) -> float:
    """Energy to estimate one channel: pilot power times pilot duration."""
    return pp.p_est * pp.t_est
