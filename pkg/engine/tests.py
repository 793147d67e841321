import math
import threading
import time
from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings, tag

from ehcrsim.exceptions import ConfigurationError
from occupancy.chains import IDLE, OCCUPIED
from policy.beliefs import BeliefJoint
from policy.optimal import shared_planner
from policy.registry import build_policy
from .config import SimConfig
from .energy import (
    ESTIMATED, FULLY_IDLE, SENSED_BUSY, TRANSMITTED, consumed_energy, energy_transition, harvest_draw,
)
from .exceptions import EnergyInvariantViolation
from .runner import RunMetrics, monte_carlo, replication_chunks, run_episode
from .slots import (
    BUSY, COLLISION, IDLE_SLOT, OUTAGE, SLOT_KINDS, SUCCESS, UNSENSABLE, draw_observation, estimation_subset,
)
from .streams import make_streams
from .tasks import run_replications

# Detector close enough to perfect that no error shows up in a short run
PERFECT_SENSING = dict(p_col=1e-9, p_f=1e-9, gamma_db=20.0)


def slow_tests_enabled():
    return settings.EHCR_RUN_SLOW_TESTS


class HarvestTests(SimpleTestCase):

    def test_certain_and_impossible(self):
        rng = np.random.default_rng(0)
        self.assertTrue(all(harvest_draw(1.0, 30e-6, rng) == 30e-6 for _ in range(1000)))
        self.assertTrue(all(harvest_draw(0.0, 30e-6, rng) == 0.0 for _ in range(1000)))

    def test_mean_harvest(self):
        rng = np.random.default_rng(1)
        n = 100_000
        draws = [harvest_draw(0.5, 30e-6, rng) for _ in range(n)]
        sigma = 30e-6 * math.sqrt(0.25 / n)
        self.assertLess(abs(math.fsum(draws) / n - 15e-6), 3 * sigma)

    def test_invalid_probability(self):
        with self.assertRaises(ValueError):
            harvest_draw(1.5, 30e-6, np.random.default_rng(0))


class EnergyTransitionTests(SimpleTestCase):

    def test_examples(self):
        self.assertEqual(energy_transition(5.0, 2.0, 4.0, 6.0), 6.0)
        self.assertEqual(energy_transition(5.0, 2.0, 0.0, 6.0), 3.0)
        self.assertEqual(energy_transition(6.0, 0.0, 1.0, 6.0), 6.0)

    def test_overspend_is_a_violation(self):
        with self.assertRaises(EnergyInvariantViolation):
            energy_transition(1.0, 1.5, 0.0, 6.0)

    def test_consumed_energy_cases(self):
        self.assertEqual(consumed_energy(FULLY_IDLE, e_est_total=1.0, e_s=2.0), 0.0)
        self.assertEqual(consumed_energy(ESTIMATED, e_est_total=1.0, e_s=2.0), 1.0)
        self.assertEqual(consumed_energy(SENSED_BUSY, e_est_total=1.0, e_s=2.0, e_ckt=4.0, e_tr=8.0), 3.0)
        self.assertEqual(consumed_energy(TRANSMITTED, e_est_total=1.0, e_s=2.0, e_ckt=4.0, e_tr=8.0), 15.0)
        with self.assertRaises(ValueError):
            consumed_energy('sleeping')


class SlotHelperTests(SimpleTestCase):

    def test_draw_observation(self):
        self.assertEqual(draw_observation(OCCUPIED, 0.89, 0.9, 0.1), 0)
        self.assertEqual(draw_observation(OCCUPIED, 0.91, 0.9, 0.1), 1)
        self.assertEqual(draw_observation(IDLE, 0.09, 0.9, 0.1), 0)
        self.assertEqual(draw_observation(IDLE, 0.5, 0.9, 0.1), 1)

    def test_estimation_subset(self):
        self.assertEqual(estimation_subset([0.2, 0.9, 0.5], 3), (0, 1, 2))
        self.assertEqual(estimation_subset([0.2, 0.9, 0.5], 2), (1, 2))
        self.assertEqual(estimation_subset([0.5, 0.5, 0.5], 1), (0,))

    def test_streams_are_reproducible_and_distinct(self):
        first, again, other = make_streams(7, 3), make_streams(7, 3), make_streams(7, 4)
        self.assertEqual(first.fading.random(), again.fading.random())
        self.assertNotEqual(make_streams(7, 3).fading.random(), other.fading.random())
        self.assertNotEqual(make_streams(7, 3).fading.random(), make_streams(7, 3).harvest.random())


class SimConfigTests(SimpleTestCase):

    def test_defaults(self):
        config = SimConfig()
        self.assertEqual(config.n_channels, 5)
        self.assertEqual(config.action_sets.lambda0, 5)
        self.assertAlmostEqual(config.sensing.p_d, 0.9)
        self.assertAlmostEqual(config.battery_max, 1.8e-3)
        self.assertAlmostEqual(config.battery_init, 0.9e-3)
        self.assertAlmostEqual(config.p_h, 1.0 / 3.0)
        self.assertEqual(len(config.chains), 5)

    def test_full_harvest_rate_is_certain(self):
        self.assertAlmostEqual(SimConfig(p_eh=0.18).p_h, 1.0, places=12)

    def test_round_trip(self):
        config = SimConfig(policy='optimal', n_channels=2, alpha=(0.3, 0.4), beta=(0.8, 0.7), horizon=3)
        self.assertEqual(SimConfig.from_dict(config.to_dict()), config)

    def test_rejections(self):
        for bad in (dict(p_col=1.5), dict(lambda1=3, lambda0=2), dict(p_eh=0.5), dict(alpha=(0.1, 0.2)),
                    dict(policy='greedy'), dict(policy='optimal'), dict(sensing_channel='fibre'),
                    dict(constant_m=8), dict(e_init=1.0), dict(n_channels=2, alpha=(0.3, 0.0), beta=(0.7, 1.0))):
            with self.subTest(**{key: str(value) for key, value in bad.items()}):
                with self.assertRaises(ConfigurationError):
                    SimConfig(**bad)

    def test_planner_key_ignores_run_settings(self):
        config = SimConfig(policy='optimal', n_channels=2, horizon=3)
        self.assertEqual(config.replace(seed=4, iterations=9, episode_slots=7).planner_key, config.planner_key)
        self.assertNotEqual(config.replace(p_eh=0.12).planner_key, config.planner_key)
        self.assertIsNone(SimConfig().policy_context().planner_key)


class SlotProcedureTests(SimpleTestCase):

    def test_perfect_sensing_on_idle_channel(self):
        config = SimConfig(
            n_channels=1, alpha=(0.5,), beta=(1.0,), p_eh=1.0, e_h=1e-3, episode_slots=200,
            reward_basis='per_slot', **PERFECT_SENSING,
        )
        trace = run_episode(config, seed=3, trace=True).trace
        kinds = {outcome.kind for outcome in trace}
        self.assertLessEqual(kinds, {SUCCESS, IDLE_SLOT})
        self.assertIn(SUCCESS, kinds)
        for outcome in trace:
            if outcome.kind == SUCCESS:
                self.assertTrue(outcome.ack)
                self.assertGreater(outcome.reward, 0)
                self.assertEqual(outcome.reward, outcome.eta)

    def test_missed_detection_wastes_transmit_energy(self):
        # Busy forever, detector almost never reports busy
        config = SimConfig(
            n_channels=1, alpha=(0.0,), beta=(0.0,), p_col=1.0 - 1e-6, p_f=1e-6,
            p_eh=0.18, episode_slots=200,
        )
        trace = run_episode(config, seed=5, trace=True).trace
        collisions = [outcome for outcome in trace if outcome.kind == COLLISION]
        self.assertTrue(collisions)
        for outcome in collisions:
            self.assertEqual(outcome.d, 1)
            self.assertIs(outcome.ack, False)
            self.assertEqual(outcome.reward, 0.0)
            self.assertGreater(outcome.e_tr, 0.0)
            self.assertGreater(outcome.e_ckt, 0.0)

    def test_empty_battery_idles(self):
        config = SimConfig(p_eh=0.0, e_init=0.0, episode_slots=100)
        metrics = run_episode(config, seed=1, trace=True)
        self.assertEqual(metrics.mean_efficiency, 0.0)
        self.assertEqual(metrics.kinds[OUTAGE], 100)
        self.assertEqual(metrics.consumed, 0.0)
        self.assertTrue(all(outcome.battery_after == 0.0 for outcome in metrics.trace))

    def test_slot_kinds_partition_the_episode(self):
        config = SimConfig(lambda1=3, episode_slots=300, policy='belief-bandwidth')
        metrics = run_episode(config, seed=2, trace=True)
        self.assertEqual(sum(metrics.kinds.values()), 300)
        self.assertEqual(set(metrics.kinds), set(SLOT_KINDS))
        for outcome in metrics.trace:
            self.assertLessEqual(len(outcome.sensed), 3)
            if outcome.d:
                self.assertEqual(outcome.observations[-1], 1)
            self.assertTrue(all(o == 0 for o in outcome.observations[:-1]))

    def test_sequential_sensing_stops_at_first_idle_report(self):
        config = SimConfig(lambda1=5, p_eh=0.18, episode_slots=300)
        trace = run_episode(config, seed=4, trace=True).trace
        self.assertTrue(any(len(outcome.sensed) > 1 for outcome in trace))
        for outcome in trace:
            if outcome.kind == BUSY and outcome.observations:
                self.assertTrue(all(o == 0 for o in outcome.observations[:-1]))

    def test_battery_stays_in_bounds(self):
        config = SimConfig(p_eh=0.18, episode_slots=500, policy='random')
        for outcome in run_episode(config, seed=9, trace=True).trace:
            self.assertGreaterEqual(outcome.battery_after, 0.0)
            self.assertLessEqual(outcome.battery_after, config.battery_max)
            self.assertTrue(outcome.reward == 0 or outcome.ack)

    def test_rayleigh_sensing_channel_has_unsensable_slots(self):
        config = SimConfig(n_channels=1, sensing_channel='rayleigh', p_eh=0.18, episode_slots=500)
        metrics = run_episode(config, seed=6)
        self.assertGreater(metrics.kinds[UNSENSABLE], 0)
        self.assertEqual(metrics.unsensable_channels, metrics.kinds[UNSENSABLE])

    def test_optimal_policy_episode(self):
        config = SimConfig(
            policy='optimal', n_channels=2, alpha=(0.3, 0.4), beta=(0.8, 0.7), horizon=3, episode_slots=10,
        )
        metrics = run_episode(config, seed=0, trace=True)
        self.assertEqual(metrics.slots, 10)
        self.assertTrue(all(len(outcome.sensed) <= 1 for outcome in metrics.trace))

    def test_optimal_episodes_share_one_planner(self):
        config = SimConfig(
            policy='optimal', n_channels=2, alpha=(0.3, 0.4), beta=(0.8, 0.7), horizon=3, episode_slots=10,
        )
        rng = np.random.default_rng(0)
        first = build_policy(config.policy, config.policy_context(), rng)
        second = build_policy(config.policy, config.policy_context(), rng)
        self.assertIs(first.planner, second.planner)

        warm = [run_episode(config, seed=3, replication=r, trace=True) for r in range(4)]
        cold = []
        thread = threading.Thread(target=lambda: cold.append(run_episode(config, seed=3, replication=3, trace=True)))
        thread.start()
        thread.join()
        self.assertEqual(cold[0].trace, warm[3].trace)
        self.assertEqual(cold[0].to_dict(), warm[3].to_dict())


class DeterminismTests(SimpleTestCase):

    def test_same_seed_same_trace(self):
        config = SimConfig(episode_slots=200)
        self.assertEqual(run_episode(config, seed=11, trace=True).trace, run_episode(config, seed=11, trace=True).trace)

    def test_different_replications_differ(self):
        config = SimConfig(episode_slots=200)
        self.assertNotEqual(
            run_episode(config, seed=11, replication=0).reward_sum,
            run_episode(config, seed=11, replication=1).reward_sum,
        )

    def test_chunks(self):
        self.assertEqual(replication_chunks(5, 2), [(0, 2), (2, 4), (4, 5)])
        with self.assertRaises(ValueError):
            replication_chunks(0, 2)

    def test_chunking_does_not_change_aggregates(self):
        config = SimConfig(episode_slots=40, iterations=7)
        results = [monte_carlo(config, chunk_size=size) for size in (1, 3, 7)]
        for result in results[1:]:
            self.assertEqual(result.efficiencies, results[0].efficiencies)
            self.assertEqual(result.metrics.to_dict(), results[0].metrics.to_dict())
            self.assertEqual(result.mean_efficiency, results[0].mean_efficiency)
            self.assertEqual(result.stderr, results[0].stderr)

    @override_settings(EHCR_CHUNK_SIZE=2)
    def test_single_iteration_equals_episode(self):
        config = SimConfig(episode_slots=60, seed=13)
        result = monte_carlo(config, iterations=1)
        self.assertEqual(result.metrics.to_dict(), run_episode(config).to_dict())
        self.assertEqual(result.mean_efficiency, run_episode(config).mean_efficiency)
        self.assertEqual(result.stderr, 0.0)

    def test_task_payload(self):
        config = SimConfig(episode_slots=20)
        rows = run_replications.apply(args=(config.to_dict(), 5, 2, 4)).get()
        self.assertEqual([row['replication'] for row in rows], [2, 3])
        self.assertEqual(RunMetrics.from_dict(rows[0]['metrics']).to_dict(), run_episode(config, 5, 2).to_dict())

    def test_stderr_shrinks_with_iterations(self):
        config = SimConfig(n_channels=2, episode_slots=10)
        small = monte_carlo(config, iterations=1000, seed=1)
        large = monte_carlo(config, iterations=2000, seed=1)
        self.assertAlmostEqual(large.stderr / small.stderr, 1 / math.sqrt(2), delta=0.2 / math.sqrt(2))


class StatisticalInvariantTests(SimpleTestCase):
    """Checks at three standard deviations; valid at any sample size."""

    def soak(self, slots, **overrides):
        config = SimConfig(**{'p_eh': 0.18, 'episode_slots': slots, 'lambda1': 2, **overrides})
        return config, run_episode(config, seed=17)

    def assert_observation_frequencies(self, config, metrics):
        table = metrics.observation_table
        for state, expected in ((OCCUPIED, config.sensing.p_d), (IDLE, config.p_f)):
            n = sum(table[state])
            self.assertGreater(n, 0)
            sigma = math.sqrt(expected * (1 - expected) / n)
            self.assertLess(abs(table[state][0] / n - expected), 3 * sigma)

    def assert_harvest_rate(self, config, metrics):
        sigma = config.e_h * math.sqrt(config.p_h * (1 - config.p_h) / metrics.slots)
        expected = config.p_eh * config.slot_duration
        self.assertLessEqual(abs(metrics.harvested / metrics.slots - expected), max(3 * sigma, 1e-18))

    def test_observation_frequencies(self):
        config, metrics = self.soak(20_000)
        self.assert_observation_frequencies(config, metrics)

    def test_harvest_rate(self):
        config, metrics = self.soak(20_000, p_eh=0.09)
        self.assert_harvest_rate(config, metrics)

    def test_collisions_track_missed_detection(self):
        config = SimConfig(n_channels=1, alpha=(0.0,), beta=(0.0,), p_eh=0.18, episode_slots=20_000)
        metrics = run_episode(config, seed=23)
        accessed_busy = metrics.kinds[COLLISION]
        sensed = sum(metrics.observation_table[OCCUPIED])
        expected = 1 - config.sensing.p_d
        sigma = math.sqrt(expected * (1 - expected) / sensed)
        self.assertLess(abs(accessed_busy / sensed - expected), 3 * sigma)

    def test_always_idle_channel_earns_fading_average(self):
        config = SimConfig(
            n_channels=1, alpha=(0.5,), beta=(1.0,), p_eh=1.0, e_h=1e-3, episode_slots=20_000,
            reward_basis='per_slot', **PERFECT_SENSING,
        )
        metrics = run_episode(config, seed=29)
        rt = config.rate_table
        expected = rt.expected_efficiency()
        second_moment = math.fsum(p * rt.spectral_efficiency(k + 1) ** 2 for k, p in enumerate(rt.region_probs))
        sigma = math.sqrt((second_moment - expected ** 2) / metrics.slots)
        self.assertLess(abs(metrics.mean_efficiency - expected), 3 * sigma)

    @tag('slow')
    @skipUnless(slow_tests_enabled(), "EHCR_RUN_SLOW_TESTS is off")
    def test_million_slot_soak(self):
        config, metrics = self.soak(1_000_000)
        self.assert_observation_frequencies(config, metrics)
        self.assert_harvest_rate(config, metrics)
        self.assertEqual(sum(metrics.kinds.values()), 1_000_000)


@tag('slow')
@skipUnless(slow_tests_enabled(), "EHCR_RUN_SLOW_TESTS is off")
class PlannerBudgetTests(SimpleTestCase):
    """Optimal-policy episodes fast enough for the figure sweeps at full size."""
    episodes = 200

    def assert_sweep_fits(self, config, points, minutes):
        planner = shared_planner(config.planning_context(), config.planner_key)
        planner.expected_value(BeliefJoint.stationary(config.chains).b, config.battery_init, config.horizon)

        started = time.perf_counter()
        for replication in range(self.episodes):
            run_episode(config, seed=1, replication=replication)
        per_episode = (time.perf_counter() - started) / self.episodes
        projected = per_episode * points * 10_000
        self.assertLess(projected, minutes * 60, f"{per_episode * 1e3:.2f} ms per episode")

    def test_awgn_against_rayleigh_sweep(self):
        for channel in ('awgn', 'rayleigh'):
            with self.subTest(channel=channel):
                config = SimConfig(
                    policy='optimal', n_channels=4, alpha=(0.3, 0.4, 0.45, 0.5), beta=(0.8, 0.7, 0.65, 0.6),
                    p_eh=0.015, sensing_channel=channel, horizon=5, episode_slots=5,
                )
                self.assert_sweep_fits(config, points=12, minutes=30)

    def test_optimal_against_myopic_sweep(self):
        for n in (2, 3, 4):
            with self.subTest(n=n):
                config = SimConfig(policy='optimal', n_channels=n, alpha=(0.5,), beta=(0.7,), horizon=5, episode_slots=5)
                self.assert_sweep_fits(config, points=3, minutes=30)
