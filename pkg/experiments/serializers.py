"""
Validation of experiment configuration files.

A config file is flat ``section.key=value`` text. ``nest`` groups it by
section, every section has its own serializer and ``dotted_errors``
flattens DRF's nested error dict back to the dotted names that failed.
"""
import dataclasses
import math
from collections.abc import Mapping
from decimal import Decimal

from decouple import Csv
from django.conf import settings
from rest_framework import serializers
from rest_framework.settings import api_settings

from ehcrsim.exceptions import ConfigurationError
from engine.config import REWARD_BASES, SENSING_CHANNELS, SimConfig
from occupancy.chains import ChannelChain, stationary_idle_prob
from occupancy.exceptions import DegenerateChain
from phy.power import PowerParams
from policy.registry import POLICIES

# Dotted key -> SimConfig field
SIM_FIELDS = {
    'policy': 'policy',
    'channels.n': 'n_channels',
    'channels.alpha': 'alpha',
    'channels.beta': 'beta',
    'channels.bandwidth': 'bandwidths',
    'actions.estimate': 'lambda0',
    'actions.sense': 'lambda1',
    'actions.access': 'lambda2',
    'sensing.p_col': 'p_col',
    'sensing.p_f': 'p_f',
    'sensing.gamma_db': 'gamma_db',
    'sensing.f_s': 'f_s',
    'sensing.e_sample': 'e_sample',
    'sensing.channel': 'sensing_channel',
    'rates.k': 'rates_k',
    'rates.boundaries': 'rate_boundaries',
    'harvest.p_eh_mj_s': 'p_eh',
    'harvest.e_h': 'e_h',
    'battery.e_max': 'e_max',
    'battery.e_init': 'e_init',
    'slot.duration': 'slot_duration',
    'run.horizon': 'horizon',
    'run.slots': 'episode_slots',
    'run.iterations': 'iterations',
    'run.seed': 'seed',
    'run.reward_basis': 'reward_basis',
    'baseline.constant_m': 'constant_m',
}
POWER_KEYS = tuple(f'power.{f.name}' for f in dataclasses.fields(PowerParams))
DERIVED_POWER_FIELDS = ('p_est', 't_est')
OUTPUT_KEY = 'output.path'
SWEEP_PREFIX = 'sweep.'
LIST_KEYS = ('channels.alpha', 'channels.beta', 'channels.bandwidth', 'rates.boundaries')

# File units that differ from SimConfig units: file value * factor = SimConfig value
UNIT_FACTORS = {'harvest.p_eh_mj_s': '0.001'}

DEFAULTS = SimConfig()


def rescale(value: float, factor: str) -> float:
    """Decimal scaling of the shortest repr, so scaling back restores the float."""
    return float(Decimal(repr(float(value))) * Decimal(factor))


def dotted_errors(errors, prefix=''):
    """{'sensing': {'p_col': [...]}} -> {'sensing.p_col': [...]}"""
    flat = {}
    if not isinstance(errors, Mapping):
        flat[prefix or 'config'] = [str(message) for message in errors]
        return flat
    for key, value in errors.items():
        if key == api_settings.NON_FIELD_ERRORS_KEY:
            name = prefix or 'config'
        else:
            name = f'{prefix}.{key}' if prefix else str(key)
        if isinstance(value, Mapping):
            flat.update(dotted_errors(value, name))
        else:
            flat.setdefault(name, []).extend(str(message) for message in value)
    return flat


def format_errors(errors) -> str:
    return '; '.join(f"{key}: {' '.join(messages)}" for key, messages in dotted_errors(errors).items())


class CsvListField(serializers.ListField):
    """List written as comma-separated text, e.g. ``0.8, 0.7, 0.65``."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = Csv()(data)
        return super().to_internal_value(data)


class StrictSerializer(serializers.Serializer):
    """Rejects keys it does not declare instead of dropping them."""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown key.'] for key in unknown})
        return super().to_internal_value(data)


def _probability_list():
    return CsvListField(
        child=serializers.FloatField(min_value=0.0, max_value=1.0), allow_empty=False, required=False
    )


def _positive(value, what='Value'):
    if value <= 0:
        raise serializers.ValidationError(f'{what} must be positive.')
    return value


class ChannelsSerializer(StrictSerializer):
    n = serializers.IntegerField(min_value=1, required=False)
    alpha = _probability_list()
    beta = _probability_list()
    bandwidth = CsvListField(child=serializers.FloatField(), required=False)

    def validate_bandwidth(self, value):
        for bandwidth in value:
            _positive(bandwidth, 'Bandwidth')
        return value

    @staticmethod
    def _check_chains(attrs, n):
        def per_channel(values):
            return list(values) * n if len(values) == 1 else list(values)
        alpha = per_channel(attrs.get('alpha', DEFAULTS.alpha))
        beta = per_channel(attrs.get('beta', DEFAULTS.beta))
        for channel, (a, b) in enumerate(zip(alpha, beta), start=1):
            try:
                stationary_idle_prob(ChannelChain(a, b))
            except DegenerateChain:
                raise serializers.ValidationError(
                    {'alpha': f'Channel {channel} never changes state (alpha=0 and beta=1).'}
                )

    def validate(self, attrs):
        n = attrs.get('n', DEFAULTS.n_channels)
        for name in ('alpha', 'beta'):
            if name in attrs and len(attrs[name]) not in (1, n):
                raise serializers.ValidationError({name: f'Needs 1 or {n} values (got {len(attrs[name])}).'})
        if attrs.get('bandwidth') and len(attrs['bandwidth']) != n:
            raise serializers.ValidationError({'bandwidth': f'Needs {n} values.'})
        self._check_chains(attrs, n)
        return attrs


class ActionsSerializer(StrictSerializer):
    estimate = serializers.IntegerField(min_value=1, required=False)
    sense = serializers.IntegerField(min_value=1, required=False)
    access = serializers.IntegerField(min_value=1, max_value=1, required=False)

    def validate(self, attrs):
        sense = attrs.get('sense', DEFAULTS.lambda1)
        if 'estimate' in attrs and sense > attrs['estimate']:
            raise serializers.ValidationError(
                {'sense': f'Cannot sense more channels than are estimated ({sense} > {attrs["estimate"]}).'}
            )
        return attrs


class SensingSerializer(StrictSerializer):
    p_col = serializers.FloatField(required=False)
    p_f = serializers.FloatField(required=False)
    gamma_db = serializers.FloatField(required=False)
    f_s = serializers.FloatField(required=False)
    e_sample = serializers.FloatField(min_value=0.0, required=False)
    channel = serializers.ChoiceField(choices=SENSING_CHANNELS, required=False)

    def _open_unit(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError('Must lie strictly between 0 and 1.')
        return value

    def validate_p_col(self, value):
        return self._open_unit(value)

    def validate_p_f(self, value):
        return self._open_unit(value)

    def validate_f_s(self, value):
        return _positive(value, 'Sampling rate')

    def validate_gamma_db(self, value):
        if not math.isfinite(value):
            raise serializers.ValidationError('SNR must be finite.')
        return value

    def validate(self, attrs):
        p_d = 1.0 - attrs.get('p_col', DEFAULTS.p_col)
        if attrs.get('p_f', DEFAULTS.p_f) > p_d:
            raise serializers.ValidationError({'p_f': f'False alarm target exceeds the detection target {p_d!r}.'})
        return attrs


class PowerSerializer(StrictSerializer):
    p_b = serializers.FloatField(required=False)
    c1 = serializers.FloatField(required=False)
    c2 = serializers.FloatField(required=False)
    c3 = serializers.FloatField(required=False)
    c4 = serializers.FloatField(min_value=0.0, required=False)
    n0 = serializers.FloatField(required=False)
    b = serializers.FloatField(required=False)
    p_ckt = serializers.FloatField(min_value=0.0, required=False)
    kappa = serializers.FloatField(required=False)
    estimation_fraction = serializers.FloatField(min_value=0.0, required=False)
    reference_constellation = serializers.IntegerField(min_value=2, required=False)
    pilot_symbols = serializers.IntegerField(min_value=1, required=False)
    p_est = serializers.FloatField(min_value=0.0, required=False)
    t_est = serializers.FloatField(min_value=0.0, required=False)

    def validate(self, attrs):
        try:
            PowerParams(**attrs)
        except ConfigurationError as exc:
            raise serializers.ValidationError(str(exc))
        return attrs


class RatesSerializer(StrictSerializer):
    k = serializers.IntegerField(min_value=2, required=False)
    boundaries = CsvListField(child=serializers.FloatField(min_value=0.0), required=False)

    def validate(self, attrs):
        k = attrs.get('k', DEFAULTS.rates_k)
        boundaries = attrs.get('boundaries')
        if boundaries and len(boundaries) != k - 1:
            raise serializers.ValidationError({'boundaries': f'K={k} regions need {k - 1} boundaries.'})
        return attrs


class HarvestSerializer(StrictSerializer):
    p_eh_mj_s = serializers.FloatField(min_value=0.0, required=False)
    e_h = serializers.FloatField(required=False)

    def validate_e_h(self, value):
        return _positive(value, 'Harvest quantum')


class BatterySerializer(StrictSerializer):
    e_max = serializers.FloatField(required=False)
    e_init = serializers.FloatField(min_value=0.0, required=False)

    def validate_e_max(self, value):
        return _positive(value, 'Battery capacity')


class SlotSerializer(StrictSerializer):
    duration = serializers.FloatField(required=False)

    def validate_duration(self, value):
        return _positive(value, 'Slot duration')


class RunSerializer(StrictSerializer):
    horizon = serializers.IntegerField(min_value=1, required=False)
    slots = serializers.IntegerField(min_value=1, required=False)
    iterations = serializers.IntegerField(min_value=1, required=False)
    seed = serializers.IntegerField(min_value=0, required=False)
    reward_basis = serializers.ChoiceField(choices=REWARD_BASES, required=False)


class BaselineSerializer(StrictSerializer):
    constant_m = serializers.ChoiceField(choices=[4, 16, 64, 256], required=False)


class OutputSerializer(StrictSerializer):
    path = serializers.CharField(required=False, allow_blank=False)


class ExperimentSerializer(StrictSerializer):
    """
    One experiment point. ``validated_data`` holds the built ``config``
    (a SimConfig with defaults applied) and the optional ``output_path``.
    """
    policy = serializers.ChoiceField(choices=sorted(POLICIES), required=False)
    channels = ChannelsSerializer(required=False)
    actions = ActionsSerializer(required=False)
    sensing = SensingSerializer(required=False)
    power = PowerSerializer(required=False)
    rates = RatesSerializer(required=False)
    harvest = HarvestSerializer(required=False)
    battery = BatterySerializer(required=False)
    slot = SlotSerializer(required=False)
    run = RunSerializer(required=False)
    baseline = BaselineSerializer(required=False)
    output = OutputSerializer(required=False)

    def validate(self, attrs):
        kwargs = {'iterations': settings.EHCR_DEFAULT_ITERATIONS}
        for key, name in SIM_FIELDS.items():
            section, _, field_name = key.rpartition('.')
            values = attrs.get(section, {}) if section else attrs
            if field_name not in values:
                continue
            value = values[field_name]
            if key in UNIT_FACTORS:
                value = rescale(value, UNIT_FACTORS[key])
            kwargs[name] = tuple(value) if isinstance(value, list) else value
        if attrs.get('power'):
            kwargs['power'] = PowerParams(**attrs['power'])
        try:
            config = SimConfig(**kwargs)
        except ConfigurationError as exc:
            raise serializers.ValidationError(str(exc))
        return {'config': config, 'output_path': attrs.get('output', {}).get('path')}


def field_for(key: str) -> serializers.Field:
    """The serializer field behind a dotted key."""
    section, _, name = key.rpartition('.')
    fields = ExperimentSerializer().fields
    try:
        return fields[section].fields[name] if section else fields[name]
    except (KeyError, AttributeError):
        raise serializers.ValidationError({key: ['Unknown key.']})
