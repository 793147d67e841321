"""
Fading-region rate table for adaptive square M-QAM.

Region k (1-based) covers power gains in [boundary_{k-1}, boundary_k) and
carries constellation M_k = 4^(k-1); region 1 means no transmission.
"""
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ehcrsim.exceptions import ConfigurationError


def _exp_tail(x):
    return 0.0 if math.isinf(x) else math.exp(-x)


def _conditional_mean(lo, hi):
    """Mean of an exponential(1) variable restricted to [lo, hi)."""
    if math.isinf(hi):
        return lo + 1.0
    mass = _exp_tail(lo) - _exp_tail(hi)
    return ((lo + 1.0) * _exp_tail(lo) - (hi + 1.0) * _exp_tail(hi)) / mass


@dataclass(frozen=True)
class RateTable:
    k: int
    boundaries: Tuple[float, ...]
    constellations: Tuple[int, ...]
    region_probs: Tuple[float, ...]
    region_rep_gain: Tuple[float, ...]

    def __post_init__(self):
        if self.k < 2:
            raise ConfigurationError(f"Need at least two fading regions (got K={self.k})")
        if len(self.boundaries) != self.k - 1:
            raise ConfigurationError(f"K={self.k} regions need {self.k - 1} boundaries")
        if any(b <= 0 for b in self.boundaries) or any(
            hi <= lo for lo, hi in zip(self.boundaries, self.boundaries[1:])
        ):
            raise ConfigurationError("Region boundaries must be positive and strictly ascending")
        if abs(math.fsum(self.region_probs) - 1.0) > 1e-12:
            raise ConfigurationError("Region probabilities must sum to 1")

    @classmethod
    def from_boundaries(cls, boundaries: Sequence[float]):
        """Table for explicit gain thresholds under exponential(1) power gain."""
        boundaries = tuple(float(b) for b in boundaries)
        k = len(boundaries) + 1
        edges = (0.0,) + boundaries + (math.inf,)
        probs = [_exp_tail(lo) - _exp_tail(hi) for lo, hi in zip(edges, edges[1:])]
        # Telescoping sum; push the rounding residue into the top region.
        probs[-1] = 1.0 - math.fsum(probs[:-1])
        reps = tuple(_conditional_mean(lo, hi) for lo, hi in zip(edges, edges[1:]))
        return cls(
            k=k,
            boundaries=boundaries,
            constellations=tuple(4 ** (i - 1) for i in range(1, k + 1)),
            region_probs=tuple(probs),
            region_rep_gain=reps,
        )

    @classmethod
    def exponential(cls, k: int = 4):
        """Equal-probability regions: boundary_j = -ln(1 - j/K)."""
        if k < 2:
            raise ConfigurationError(f"Need at least two fading regions (got K={k})")
        return cls.from_boundaries([-math.log(1.0 - j / k) for j in range(1, k)])

    def constellation(self, region: int) -> int:
        return self.constellations[region - 1]

    @staticmethod
    def spectral_efficiency(region: int) -> int:
        """log2(M_k) = 2(k - 1) bits/s/Hz."""
        return 2 * (region - 1)

    def expected_efficiency(self) -> float:
        """Average of log2(M_k) under the fading law."""
        return math.fsum(p * self.spectral_efficiency(i + 1) for i, p in enumerate(self.region_probs))


def gain_region(g, rt: RateTable):
    """
    Region index (1..K) of power gain g; lower-inclusive intervals so a gain
    equal to a boundary belongs to the upper region. Accepts numpy arrays.
    """
    regions = np.searchsorted(np.asarray(rt.boundaries), g, side='right') + 1
    if np.ndim(regions) == 0:
        return int(regions)
    return regions
