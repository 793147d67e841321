"""
Experiment files: parse, validate, dump.

A file holds one base point plus optional ``sweep.<key>=v1,v2,...`` lines;
the grid is the cartesian product of the swept values in file order, the
first swept key varying slowest. Every grid point goes through the same
serializer as the base, so a bad swept value is reported under its key.
"""
import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass
from decimal import Decimal
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

from decouple import Csv, RepositoryEnv
from rest_framework import serializers

from ehcrsim.exceptions import SimulationError
from engine.config import SimConfig
from engine.runner import MonteCarloResult
from phy.power import PowerParams
from .serializers import (
    DERIVED_POWER_FIELDS, LIST_KEYS, OUTPUT_KEY, POWER_KEYS, SIM_FIELDS, SWEEP_PREFIX, UNIT_FACTORS,
    ExperimentSerializer, field_for, format_errors, rescale,
)

logger = logging.getLogger(__name__)

CONFIG_KEYS = tuple(SIM_FIELDS) + POWER_KEYS
SWEEPABLE_KEYS = tuple(key for key in CONFIG_KEYS if key not in LIST_KEYS)

Point = Tuple[Tuple[str, Any], ...]


def format_value(value) -> str:
    """Config-file text for a value; floats keep full round-trip precision."""
    if isinstance(value, (list, tuple)):
        return ','.join(format_value(item) for item in value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def nest(flat: Mapping[str, str]) -> dict:
    """{'sensing.p_col': '0.1'} -> {'sensing': {'p_col': '0.1'}}"""
    nested = {}
    for key, value in flat.items():
        section, _, name = key.partition('.')
        if not name:
            if isinstance(nested.get(key), dict):
                raise serializers.ValidationError({key: ['Is a section, not a key.']})
            nested[key] = value
            continue
        group = nested.setdefault(section, {})
        if not isinstance(group, dict):
            raise serializers.ValidationError({section: ['Is a section, not a key.']})
        group[name] = value
    return nested


def build_point(flat: Mapping[str, str]) -> Tuple[SimConfig, Optional[str]]:
    serializer = ExperimentSerializer(data=nest(flat))
    serializer.is_valid(raise_exception=True)
    return serializer.validated_data['config'], serializer.validated_data['output_path']


def config_to_flat(config: SimConfig) -> Dict[str, str]:
    """Dotted text for every explicitly set parameter of ``config``."""
    flat = {}
    for key, name in SIM_FIELDS.items():
        value = getattr(config, name)
        if value is None or value == ():
            continue
        if key in UNIT_FACTORS:
            value = rescale(value, str(1 / Decimal(UNIT_FACTORS[key])))
        flat[key] = format_value(value)

    power = config.power
    underived = PowerParams(**{
        f.name: getattr(power, f.name) for f in dataclasses.fields(PowerParams) if f.name not in DERIVED_POWER_FIELDS
    })
    for key in POWER_KEYS:
        name = key.partition('.')[2]
        value = getattr(power, name)
        if name in DERIVED_POWER_FIELDS and value == getattr(underived, name):
            continue
        flat[key] = format_value(value)
    return flat


@dataclass(frozen=True)
class SweepSpec:
    """A base configuration and the values swept over it."""
    base: SimConfig
    sweep: Tuple[Tuple[str, Tuple[Any, ...]], ...] = ()
    output_path: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, 'sweep', tuple((key, tuple(values)) for key, values in self.sweep))
        seen = set()
        for key, values in self.sweep:
            if key not in SWEEPABLE_KEYS:
                raise serializers.ValidationError({SWEEP_PREFIX + key: ['Not a sweepable key.']})
            if key in seen:
                raise serializers.ValidationError({SWEEP_PREFIX + key: ['Swept twice.']})
            if not values:
                raise serializers.ValidationError({SWEEP_PREFIX + key: ['Needs at least one value.']})
            seen.add(key)

    @property
    def swept_keys(self) -> Tuple[str, ...]:
        return tuple(key for key, _ in self.sweep)

    @property
    def size(self) -> int:
        return math.prod(len(values) for _, values in self.sweep)

    @cached_property
    def grid(self) -> List[Tuple[Point, SimConfig]]:
        """(swept values, config) per grid point in sweep order."""
        base_flat = config_to_flat(self.base)
        points = []
        for combination in itertools.product(*(values for _, values in self.sweep)):
            point = tuple(zip(self.swept_keys, combination))
            flat = dict(base_flat)
            flat.update((key, format_value(value)) for key, value in point)
            try:
                config, _ = build_point(flat)
            except serializers.ValidationError as exc:
                where = ', '.join(f'{SWEEP_PREFIX}{key}={format_value(value)}' for key, value in point)
                raise serializers.ValidationError({f'sweep point ({where})': [format_errors(exc.detail)]})
            points.append((point, config))
        return points

    def to_flat(self) -> Dict[str, str]:
        flat = config_to_flat(self.base)
        if self.output_path:
            flat[OUTPUT_KEY] = self.output_path
        for key, values in self.sweep:
            flat[SWEEP_PREFIX + key] = format_value(values)
        return flat

    def with_overrides(self, overrides: Iterable[Tuple[str, str]]) -> 'SweepSpec':
        flat = self.to_flat()
        flat.update(overrides)
        return parse_mapping(flat)


def parse_sweep_values(key: str, text: str) -> Tuple[Any, ...]:
    if key not in SWEEPABLE_KEYS:
        raise serializers.ValidationError({SWEEP_PREFIX + key: ['Not a sweepable key.']})
    field = field_for(key)
    try:
        return tuple(field.to_internal_value(item) for item in Csv()(text))
    except serializers.ValidationError as exc:
        raise serializers.ValidationError({SWEEP_PREFIX + key: exc.detail})


def parse_mapping(flat: Mapping[str, str]) -> SweepSpec:
    """Validate a flat dotted mapping; raises serializers.ValidationError."""
    point = {key: value for key, value in flat.items() if not key.startswith(SWEEP_PREFIX)}
    sweep = tuple(
        (key[len(SWEEP_PREFIX):], parse_sweep_values(key[len(SWEEP_PREFIX):], value))
        for key, value in flat.items() if key.startswith(SWEEP_PREFIX)
    )
    config, output_path = build_point(point)
    spec = SweepSpec(base=config, sweep=sweep, output_path=output_path)
    # Validate every grid point up front.
    _ = spec.grid
    return spec


def parse_config(path: Optional[str] = None, overrides: Iterable[Tuple[str, str]] = ()) -> SweepSpec:
    """
    Read a config file (``None`` for all defaults) and apply command-line
    overrides, which win over file values.

    Raises:
        OSError: the file cannot be read
        serializers.ValidationError: keyed by the dotted name that failed
    """
    flat = dict(RepositoryEnv(path).data) if path else {}
    flat.update(overrides)
    spec = parse_mapping(flat)
    logger.debug(f"Parsed {path or 'defaults'}: {spec.size} grid point(s), policy '{spec.base.policy}'")
    return spec


def dump_config(spec: SweepSpec) -> str:
    """Config-file text that ``parse_config`` reads back to ``spec``."""
    return ''.join(f'{key}={value}\n' for key, value in spec.to_flat().items())


def split_override(text: str) -> Tuple[str, str]:
    key, sep, value = text.partition('=')
    if not sep or not key.strip():
        raise serializers.ValidationError({'--set': [f"Expected KEY=VALUE, got '{text}'."]})
    return key.strip(), value.strip()


RESULT_COLUMNS = (
    'policy', 'mean_eff_bps_hz', 'stderr', 'collision_rate', 'outage_rate', 'unsensable_rate', 'iters', 'seed',
)


@dataclass(frozen=True)
class ResultRow:
    point: Point
    policy: str
    mean_efficiency: float
    stderr: float
    collision_rate: float
    outage_rate: float
    unsensable_rate: float
    iterations: int
    seed: int

    def __post_init__(self):
        for name in ('mean_efficiency', 'stderr', 'collision_rate', 'outage_rate', 'unsensable_rate'):
            if not math.isfinite(getattr(self, name)):
                raise SimulationError(f"Non-finite {name} at grid point {self.point}")

    @classmethod
    def from_result(cls, point: Point, config: SimConfig, result: MonteCarloResult) -> 'ResultRow':
        return cls(
            point=point,
            policy=config.policy,
            mean_efficiency=result.mean_efficiency,
            stderr=result.stderr,
            collision_rate=result.collision_rate,
            outage_rate=result.outage_rate,
            unsensable_rate=result.unsensable_rate,
            iterations=result.iterations,
            seed=result.seed,
        )

    def value(self, key: str):
        return dict(self.point)[key]

    def csv_values(self) -> List[str]:
        swept = [format_value(value) for key, value in self.point if key != 'policy']
        return swept + [
            self.policy,
            repr(float(self.mean_efficiency)),
            repr(float(self.stderr)),
            repr(float(self.collision_rate)),
            repr(float(self.outage_rate)),
            repr(float(self.unsensable_rate)),
            str(self.iterations),
            str(self.seed),
        ]


def csv_header(swept_keys: Iterable[str]) -> List[str]:
    return [key for key in swept_keys if key != 'policy'] + list(RESULT_COLUMNS)
