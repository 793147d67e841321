import math

import numpy as np
from django.test import SimpleTestCase

from ehcrsim.exceptions import ConfigurationError
from .chains import (
    IDLE, OCCUPIED, ChannelChain, PnState, initial_state, joint_states, joint_transition,
    marginal, stationary_idle_prob, step_channel,
)
from .exceptions import DegenerateChain, JointModelInfeasible


class StepChannelTests(SimpleTestCase):

    def test_absorbing_states(self):
        idle_forever = ChannelChain(alpha=0.3, beta=1.0)
        busy_forever = ChannelChain(alpha=0.0, beta=0.4)
        for u in (0.0, 0.5, 0.999999):
            self.assertEqual(step_channel(IDLE, idle_forever, u), IDLE)
            self.assertEqual(step_channel(OCCUPIED, busy_forever, u), OCCUPIED)

    def test_idle_persistence_frequency(self):
        chain = ChannelChain(alpha=0.5, beta=0.7)
        rng = np.random.default_rng(3)
        n = 100_000
        hits = sum(step_channel(IDLE, chain, u) for u in rng.random(n))
        sigma = math.sqrt(0.7 * 0.3 / n)
        self.assertLess(abs(hits / n - 0.7), 3 * sigma)

    def test_seeded_trajectory_is_reproducible(self):
        chains = [ChannelChain(0.5, 0.7), ChannelChain(0.3, 0.8)]

        def trajectory(seed):
            rng = np.random.default_rng(seed)
            state = initial_state(chains, rng)
            states = [state.s]
            for _ in range(500):
                state = state.step(chains, rng.random(len(chains)))
                states.append(state.s)
            return states

        self.assertEqual(trajectory(99), trajectory(99))

    def test_long_run_occupancy_matches_stationary(self):
        chain = ChannelChain(alpha=0.5, beta=0.7)
        rng = np.random.default_rng(5)
        n = 1_000_000
        uniforms = rng.random(n)
        state, idle = IDLE, 0
        for u in uniforms:
            state = step_channel(state, chain, u)
            idle += state
        pi = stationary_idle_prob(chain)
        # Effective sample size shrinks by the chain's autocorrelation.
        rho = chain.beta - chain.alpha
        sigma = math.sqrt(pi * (1 - pi) / n * (1 + rho) / (1 - rho))
        self.assertLess(abs(idle / n - pi), 3 * sigma)

    def test_invalid_probability_rejected(self):
        with self.assertRaises(ConfigurationError):
            ChannelChain(alpha=1.2, beta=0.5)


class JointTransitionTests(SimpleTestCase):

    def test_single_channel(self):
        jt = joint_transition([ChannelChain(alpha=0.5, beta=0.7)])
        np.testing.assert_allclose(jt.p, [[0.5, 0.5], [0.3, 0.7]])

    def test_two_channels_brute_force(self):
        chains = [ChannelChain(0.2, 0.9), ChannelChain(0.6, 0.35)]
        jt = joint_transition(chains)
        states = joint_states(2)
        for i, s in enumerate(states):
            for j, s_next in enumerate(states):
                expected = 1.0
                for chain, a, b in zip(chains, s, s_next):
                    expected *= chain.matrix[a, b]
                self.assertAlmostEqual(jt.p[i, j], expected, delta=1e-15)

    def test_rows_are_stochastic(self):
        rng = np.random.default_rng(1)
        chains = [ChannelChain(*rng.random(2)) for _ in range(5)]
        jt = joint_transition(chains)
        np.testing.assert_allclose(jt.p.sum(axis=1), 1.0, atol=1e-12)

    def test_marginals_recover_channel_matrices(self):
        rng = np.random.default_rng(2)
        chains = [ChannelChain(*rng.random(2)) for _ in range(4)]
        jt = joint_transition(chains)
        self.assertEqual(jt.n_channels, 4)
        for i, chain in enumerate(chains):
            np.testing.assert_allclose(marginal(jt, i), chain.matrix, atol=1e-12)

    def test_state_ordering(self):
        np.testing.assert_array_equal(joint_states(2), [[0, 0], [0, 1], [1, 0], [1, 1]])

    def test_too_many_channels(self):
        with self.assertRaises(JointModelInfeasible):
            joint_transition([ChannelChain(0.5, 0.5)] * 13)


class StationaryTests(SimpleTestCase):

    def test_matches_power_iteration(self):
        chain = ChannelChain(alpha=0.5, beta=0.7)
        dist = np.array([1.0, 0.0])
        for _ in range(10_000):
            nxt = dist @ chain.matrix
            if np.abs(nxt - dist).max() < 1e-15:
                break
            dist = nxt
        self.assertAlmostEqual(stationary_idle_prob(chain), dist[1], delta=1e-12)
        self.assertAlmostEqual(stationary_idle_prob(chain), 0.625)

    def test_symmetric_and_absorbing(self):
        self.assertAlmostEqual(stationary_idle_prob(ChannelChain(0.5, 0.5)), 0.5)
        self.assertEqual(stationary_idle_prob(ChannelChain(1.0, 1.0)), 1.0)

    def test_degenerate_chain(self):
        with self.assertRaises(DegenerateChain):
            stationary_idle_prob(ChannelChain(alpha=0.0, beta=1.0))

    def test_pn_state_step(self):
        chains = [ChannelChain(0.0, 1.0), ChannelChain(1.0, 0.0)]
        state = PnState((IDLE, IDLE)).step(chains, [0.5, 0.5])
        self.assertEqual(state.s, (IDLE, OCCUPIED))
        self.assertTrue(state.is_idle(0))
