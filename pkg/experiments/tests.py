import io
import math
import tempfile
from pathlib import Path
from unittest import skipUnless

from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, override_settings, tag
from rest_framework import serializers

from ehcrsim.exceptions import ConfigurationError
from engine.config import SimConfig
from engine.runner import monte_carlo, run_episode
from engine.slots import OUTAGE
from phy.detection import min_sensing_samples, min_sensing_time, sensing_energy
from policy.criterion import transmission_cost
from .config import RESULT_COLUMNS, SweepSpec, dump_config, parse_config, split_override
from .presets import FIGURE_PRESETS, emit_figure_preset
from .serializers import dotted_errors
from .sweeps import run_sweep

SMALL_RUN = 'run.slots=20\nrun.iterations=6\n'


def slow_tests_enabled():
    return settings.EHCR_RUN_SLOW_TESTS


class WorkspaceMixin:
    """Temporary directory for config and result files."""

    def setUp(self):
        super().setUp()
        workspace = tempfile.TemporaryDirectory()
        self.addCleanup(workspace.cleanup)
        self.workspace = Path(workspace.name)

    def write_config(self, text, name='experiment.env'):
        path = self.workspace / name
        path.write_text(text)
        return str(path)

    def assertRejected(self, text, key, overrides=()):
        with self.assertRaises(serializers.ValidationError) as cm:
            parse_config(self.write_config(text), overrides)
        errors = dotted_errors(cm.exception.detail)
        self.assertIn(key, errors, errors)
        return errors


class ParseConfigTests(WorkspaceMixin, SimpleTestCase):

    def test_empty_config_gives_defaults(self):
        spec = parse_config(self.write_config(''))
        self.assertEqual(spec.base, SimConfig(iterations=settings.EHCR_DEFAULT_ITERATIONS))
        self.assertEqual(spec.sweep, ())
        self.assertEqual(spec.size, 1)
        self.assertIsNone(spec.output_path)
        self.assertEqual(parse_config(), spec)

    def test_values_and_comments(self):
        spec = parse_config(self.write_config(
            '# two channels, random sensing\n'
            'policy=random\n'
            'channels.n=2\n'
            'channels.alpha=0.3, 0.4\n'
            'channels.beta=0.8,0.7\n'
            'harvest.p_eh_mj_s=120\n'
            'power.pilot_symbols=20\n'
            'output.path=out/results.csv\n'
        ))
        config = spec.base
        self.assertEqual(config.policy, 'random')
        self.assertEqual(config.alpha, (0.3, 0.4))
        self.assertEqual(config.beta, (0.8, 0.7))
        self.assertEqual(config.p_eh, 0.12)
        self.assertEqual(config.power.pilot_symbols, 20)
        self.assertAlmostEqual(config.power.t_est, 20 / config.power.b)
        self.assertEqual(spec.output_path, 'out/results.csv')

    def test_collision_probability_out_of_range(self):
        self.assertRejected('sensing.p_col=1.5\n', 'sensing.p_col')

    def test_sensing_more_than_estimated(self):
        self.assertRejected('actions.estimate=2\nactions.sense=3\n', 'actions.sense')

    def test_unknown_keys(self):
        self.assertRejected('sensing.p_colx=0.1\n', 'sensing.p_colx')
        self.assertRejected('colour=blue\n', 'colour')

    def test_transition_vector_length(self):
        self.assertRejected('channels.n=5\nchannels.alpha=0.1,0.2\n', 'channels.alpha')

    def test_frozen_channel(self):
        errors = self.assertRejected('channels.n=2\nchannels.alpha=0.3,0\nchannels.beta=0.7,1\n', 'channels.alpha')
        self.assertIn('Channel 2', errors['channels.alpha'][0])
        self.assertRejected('channels.alpha=0\nchannels.beta=1\n', 'channels.alpha')

    def test_cross_section_checks_surface_as_config_errors(self):
        errors = self.assertRejected('actions.sense=6\n', 'config')
        self.assertIn('|L1|', ' '.join(errors['config']))
        self.assertRejected('policy=optimal\n', 'config')

    def test_overrides_win(self):
        path = self.write_config('sensing.p_col=0.2\n')
        spec = parse_config(path, [('sensing.p_col', '0.3'), ('run.seed', '9')])
        self.assertEqual(spec.base.p_col, 0.3)
        self.assertEqual(spec.base.seed, 9)

    def test_split_override(self):
        self.assertEqual(split_override(' sensing.p_f = 0.05'), ('sensing.p_f', '0.05'))
        with self.assertRaises(serializers.ValidationError):
            split_override('sensing.p_f')

    def test_sweep_order(self):
        spec = parse_config(self.write_config('sweep.sensing.p_col=0.1,0.2\nsweep.policy=myopic,random\n'))
        self.assertEqual(spec.swept_keys, ('sensing.p_col', 'policy'))
        self.assertEqual(spec.size, 4)
        points = [point for point, _ in spec.grid]
        self.assertEqual(points[0], (('sensing.p_col', 0.1), ('policy', 'myopic')))
        self.assertEqual(points[1], (('sensing.p_col', 0.1), ('policy', 'random')))
        self.assertEqual(points[2], (('sensing.p_col', 0.2), ('policy', 'myopic')))
        self.assertEqual([config.policy for _, config in spec.grid], ['myopic', 'random'] * 2)
        self.assertEqual(spec.grid[3][1].p_col, 0.2)

    def test_bad_sweep_values(self):
        errors = self.assertRejected('sweep.sensing.p_col=0.1,abc\n', 'sweep.sensing.p_col')
        self.assertEqual(len(errors), 1)
        self.assertRejected('sweep.channels.alpha=0.1\n', 'sweep.channels.alpha')
        self.assertRejected('sweep.run.slots=\n', 'sweep.run.slots')
        with self.assertRaises(serializers.ValidationError) as cm:
            parse_config(self.write_config('sweep.sensing.p_col=0.1,1.5\n'))
        self.assertTrue(any(key.startswith('sweep point') for key in dotted_errors(cm.exception.detail)))

    def test_missing_file(self):
        with self.assertRaises(OSError):
            parse_config(str(self.workspace / 'absent.env'))


class PresetTests(WorkspaceMixin, SimpleTestCase):

    def test_every_preset_round_trips(self):
        for name in FIGURE_PRESETS:
            with self.subTest(preset=name):
                spec = emit_figure_preset(name)
                self.assertEqual(parse_config(self.write_config(dump_config(spec), f'{name}.env')), spec)

    def test_overrides_round_trip(self):
        spec = emit_figure_preset('fig3').with_overrides([('run.iterations', '50'), ('run.seed', '4')])
        self.assertEqual(spec.base.iterations, 50)
        self.assertEqual(parse_config(self.write_config(dump_config(spec))), spec)

    def test_fig1a(self):
        spec = emit_figure_preset('fig1a')
        self.assertEqual(spec.swept_keys, ('policy', 'channels.n'))
        self.assertEqual(
            [(config.policy, config.n_channels) for _, config in spec.grid],
            [('optimal', 2), ('optimal', 3), ('optimal', 4), ('myopic', 2), ('myopic', 3), ('myopic', 4)],
        )

    def test_fig1b(self):
        spec = emit_figure_preset('fig1b')
        self.assertEqual(spec.size, 40)
        self.assertEqual(spec.swept_keys, ('harvest.p_eh_mj_s', 'sensing.p_col'))
        self.assertTrue(all(config.policy == 'myopic' and config.n_channels == 5 for _, config in spec.grid))
        self.assertEqual(spec.grid[0][1].p_eh, 0.015)
        self.assertEqual(spec.grid[-1][1].p_eh, 0.18)
        self.assertEqual(spec.grid[-1][1].p_col, 0.5)

    def test_top_harvest_rate_covers_the_dearest_slot(self):
        _, config = emit_figure_preset('fig1b').grid[-1]
        self.assertAlmostEqual(config.p_h, 1.0, places=12)
        rt = config.rate_table
        samples = min_sensing_samples(config.sensing, 1.0)
        t_tr = config.slot_duration - config.t_est_total - min_sensing_time(samples, config.f_s)
        transmit = max(
            transmission_cost(rt.boundaries[region - 2], rt.constellation(region), t_tr, config.power)
            for region in range(2, rt.k + 1)
        )
        dearest = config.e_est_total + sensing_energy(samples, config.e_sample) + transmit
        self.assertLess(dearest, config.p_eh * config.slot_duration)

        metrics = run_episode(config.replace(episode_slots=300), seed=2)
        self.assertEqual(metrics.kinds[OUTAGE], 0)

    def test_fig2(self):
        spec = emit_figure_preset('fig2')
        config = spec.base
        self.assertEqual(config.n_channels, 5)
        self.assertEqual(config.action_sets.lambda0, 5)
        self.assertEqual(config.beta, (0.8, 0.7, 0.65, 0.6, 0.5))
        self.assertEqual(config.alpha, (0.3, 0.4, 0.45, 0.5, 0.6))
        self.assertEqual((config.p_col, config.p_f), (0.1, 0.1))
        self.assertEqual(dict(spec.sweep)['actions.sense'], (1, 3))

    def test_fig3(self):
        spec = emit_figure_preset('fig3')
        self.assertEqual(spec.base.action_sets.lambda0, 6)
        self.assertEqual(spec.base.action_sets.lambda1, 3)
        self.assertEqual(dict(spec.sweep)['policy'], ('myopic', 'belief-bandwidth', 'random'))

    def test_fig4(self):
        spec = emit_figure_preset('fig4')
        config = spec.base
        self.assertEqual(config.policy, 'optimal')
        self.assertEqual((config.n_channels, config.action_sets.lambda0, config.action_sets.lambda1), (4, 4, 1))
        self.assertEqual(config.beta, (0.8, 0.7, 0.65, 0.6))
        self.assertEqual(config.alpha, (0.3, 0.4, 0.45, 0.5))
        self.assertEqual(dict(spec.sweep)['sensing.channel'], ('awgn', 'rayleigh'))

    def test_unknown_preset(self):
        with self.assertRaises(ConfigurationError) as cm:
            emit_figure_preset('fig9')
        for name in FIGURE_PRESETS:
            self.assertIn(name, str(cm.exception))


class SweepTests(WorkspaceMixin, SimpleTestCase):

    def test_single_point_matches_monte_carlo(self):
        spec = parse_config(self.write_config(SMALL_RUN))
        buffer = io.StringIO()
        summary = run_sweep(spec, out=buffer)
        result = monte_carlo(spec.base)
        self.assertEqual(len(summary.rows), 1)
        row = summary.rows[0]
        self.assertEqual(row.mean_efficiency, result.mean_efficiency)
        self.assertEqual(row.stderr, result.stderr)
        self.assertEqual(row.collision_rate, result.collision_rate)
        self.assertEqual((row.iterations, row.seed), (6, 0))

        header, values = buffer.getvalue().splitlines()
        self.assertEqual(header, ','.join(RESULT_COLUMNS))
        self.assertEqual(float(values.split(',')[1]), result.mean_efficiency)

    def test_rows_follow_sweep_order(self):
        spec = parse_config(self.write_config(SMALL_RUN + 'sweep.harvest.p_eh_mj_s=15,180\nsweep.policy=myopic,random\n'))
        buffer = io.StringIO()
        summary = run_sweep(spec, out=buffer)
        lines = buffer.getvalue().splitlines()
        self.assertEqual(lines[0], 'harvest.p_eh_mj_s,' + ','.join(RESULT_COLUMNS))
        self.assertEqual([line.split(',')[:2] for line in lines[1:]], [
            ['15.0', 'myopic'], ['15.0', 'random'], ['180.0', 'myopic'], ['180.0', 'random'],
        ])
        self.assertEqual(summary.best.mean_efficiency, max(row.mean_efficiency for row in summary.rows))
        self.assertIn('Grid points: 4', summary.lines())

    def test_nothing_written_without_target(self):
        spec = SweepSpec(base=SimConfig(episode_slots=10, iterations=2))
        self.assertEqual(len(run_sweep(spec).rows), 1)


class CommandTests(WorkspaceMixin, SimpleTestCase):

    def simulate(self, *args, **options):
        stdout = io.StringIO()
        call_command('simulate', *args, stdout=stdout, stderr=io.StringIO(), **options)
        return stdout.getvalue()

    def test_reruns_are_byte_identical(self):
        path = self.write_config(SMALL_RUN + 'sweep.sensing.p_col=0.1,0.3\n')
        first, second, chunked = (self.workspace / f'{name}.csv' for name in ('first', 'second', 'chunked'))
        self.simulate('--config', path, '--seed', '5', '--out', str(first))
        self.simulate('--config', path, '--seed', '5', '--out', str(second))
        with override_settings(EHCR_CHUNK_SIZE=1):
            self.simulate('--config', path, '--seed', '5', '--out', str(chunked))
        self.assertEqual(first.read_bytes(), second.read_bytes())
        self.assertEqual(first.read_bytes(), chunked.read_bytes())
        self.assertEqual(len(first.read_text().splitlines()), 3)

    def test_csv_to_stdout(self):
        output = self.simulate('--config', self.write_config(SMALL_RUN), '--set', 'policy=random')
        self.assertTrue(output.startswith(','.join(RESULT_COLUMNS)))
        self.assertIn('random', output)

    def test_trace(self):
        trace = self.workspace / 'trace.csv'
        self.simulate('--config', self.write_config(SMALL_RUN), '--trace', str(trace), '--out', str(self.workspace / 'r.csv'))
        lines = trace.read_text().splitlines()
        self.assertEqual(len(lines), 21)
        self.assertTrue(lines[0].startswith('slot,kind,'))

    def test_exit_codes(self):
        cases = (
            (('--config', self.write_config('sensing.p_col=1.5\n')), 2),
            (('--config', str(self.workspace / 'absent.env')), 4),
            (('--set', 'sensing.p_col'), 2),
            (('--set', 'channels.alpha=0', '--set', 'channels.beta=1'), 2),
            (('--config', self.write_config(SMALL_RUN + 'sweep.policy=myopic,random\n'), '--trace', 't.csv'), 2),
        )
        for args, returncode in cases:
            with self.subTest(args=args):
                with self.assertRaises(CommandError) as cm:
                    self.simulate(*args)
                self.assertEqual(cm.exception.returncode, returncode)

    def test_emit_then_validate(self):
        path = self.workspace / 'fig2.env'
        call_command('preset', 'fig2', '--emit-config', str(path), stdout=io.StringIO())
        self.assertEqual(parse_config(str(path)), emit_figure_preset('fig2'))
        stdout = io.StringIO()
        call_command('validate', '--config', str(path), stdout=stdout)
        self.assertIn('Config OK: 24 grid point(s)', stdout.getvalue())

    def test_validate_rejects(self):
        with self.assertRaises(CommandError) as cm:
            call_command('validate', '--config', self.write_config('actions.sense=3\nactions.estimate=2\n'),
                         stdout=io.StringIO())
        self.assertEqual(cm.exception.returncode, 2)
        self.assertIn('actions.sense', str(cm.exception))


@tag('slow')
@skipUnless(slow_tests_enabled(), "EHCR_RUN_SLOW_TESTS is off")
class FigureTrendTests(SimpleTestCase):
    """Trend checks on the figure presets at reduced replication counts."""
    iterations = '2000'

    def run_preset(self, name):
        spec = emit_figure_preset(name).with_overrides([('run.iterations', self.iterations)])
        return {row.point: row for row in run_sweep(spec, out=io.StringIO()).rows}

    @staticmethod
    def sigma(a, b):
        return math.sqrt(a.stderr ** 2 + b.stderr ** 2)

    def test_collision_constraint_against_harvest_rate(self):
        rows = self.run_preset('fig1b')
        p_cols = dict(emit_figure_preset('fig1b').sweep)['sensing.p_col']

        low = [rows[(('harvest.p_eh_mj_s', 15.0), ('sensing.p_col', p))] for p in p_cols]
        for a, b in zip(low, low[1:]):
            self.assertLessEqual(b.mean_efficiency, a.mean_efficiency + 2 * self.sigma(a, b))

        high = [rows[(('harvest.p_eh_mj_s', 180.0), ('sensing.p_col', p))] for p in p_cols]
        best = max(high[1:-1], key=lambda row: row.mean_efficiency)
        self.assertGreaterEqual(best.mean_efficiency - high[0].mean_efficiency, 2 * self.sigma(best, high[0]))

    def test_sensing_more_channels_pays_only_with_energy(self):
        rows = self.run_preset('fig2')
        rates = dict(emit_figure_preset('fig2').sweep)['harvest.p_eh_mj_s']

        def row(sense, rate):
            return rows[(('actions.sense', sense), ('policy', 'myopic'), ('harvest.p_eh_mj_s', rate))]

        one, three = row(1, rates[0]), row(3, rates[0])
        self.assertGreaterEqual(one.mean_efficiency - three.mean_efficiency, 2 * self.sigma(one, three))
        one, three = row(1, rates[-1]), row(3, rates[-1])
        self.assertGreaterEqual(three.mean_efficiency - one.mean_efficiency, 2 * self.sigma(one, three))

    def test_selection_criteria_ranking(self):
        rows = self.run_preset('fig3')
        rates = dict(emit_figure_preset('fig3').sweep)['harvest.p_eh_mj_s']
        for rate in rates:
            ranked = [rows[(('policy', policy), ('harvest.p_eh_mj_s', rate))]
                      for policy in ('myopic', 'belief-bandwidth', 'random')]
            for better, worse in zip(ranked, ranked[1:]):
                self.assertGreaterEqual(better.mean_efficiency + 2 * self.sigma(better, worse), worse.mean_efficiency)
        proposed = rows[(('policy', 'myopic'), ('harvest.p_eh_mj_s', rates[-1]))]
        random = rows[(('policy', 'random'), ('harvest.p_eh_mj_s', rates[-1]))]
        self.assertGreaterEqual(proposed.mean_efficiency - random.mean_efficiency, 2 * self.sigma(proposed, random))

    def test_sensing_channel_fading_penalty(self):
        rows = self.run_preset('fig4')
        for rate in dict(emit_figure_preset('fig4').sweep)['harvest.p_eh_mj_s']:
            awgn = rows[(('sensing.channel', 'awgn'), ('harvest.p_eh_mj_s', rate))]
            rayleigh = rows[(('sensing.channel', 'rayleigh'), ('harvest.p_eh_mj_s', rate))]
            self.assertGreaterEqual(awgn.mean_efficiency - rayleigh.mean_efficiency, 2 * self.sigma(awgn, rayleigh))
            self.assertGreater(rayleigh.unsensable_rate, 0.0)
            self.assertEqual(awgn.unsensable_rate, 0.0)

    def test_optimal_against_myopic(self):
        rows = self.run_preset('fig1a')
        for policy in ('optimal', 'myopic'):
            means = [rows[(('policy', policy), ('channels.n', n))].mean_efficiency for n in (2, 3, 4)]
            self.assertEqual(means, sorted(means))
        for n in (2, 3, 4):
            optimal = rows[(('policy', 'optimal'), ('channels.n', n))]
            myopic = rows[(('policy', 'myopic'), ('channels.n', n))]
            self.assertGreaterEqual(optimal.mean_efficiency + self.sigma(optimal, myopic), myopic.mean_efficiency)
