import itertools
import math
import threading

import numpy as np
from django.test import SimpleTestCase

from ehcrsim.exceptions import ConfigurationError
from occupancy.chains import ChannelChain, joint_transition
from phy.detection import SensingSpec, min_sensing_samples, min_sensing_time, sensing_energy
from phy.power import PowerParams, estimation_energy
from phy.rates import RateTable, gain_region
from .beliefs import (
    BeliefFactored, BeliefJoint, observation_prob, update_belief_joint, update_belief_myopic,
)
from .criterion import (
    SlotCosts, baseline_constant_rate, myopic_expected_reward, spectral_efficiency, transmission_cost,
)
from .exceptions import InconsistentObservation, PlanningInfeasible
from .optimal import (
    PER_SLOT, SLOT_TIME, OptimalPlanner, PlanningContext, expected_maximum, optimal_value, shared_planner,
)
from .registry import PolicyContext, SlotView, build_policy
from .selection import (
    ActionSets, SlotDecision, access_decision, baseline_belief_bandwidth, baseline_random,
    rank_channels_myopic,
)

AMPLE = 1.0
COSTS = SlotCosts(e_est_total=1e-7, e_s=1.65e-6, t_tr=8e-4)


def planning_context(chains, p_d=0.9, p_f=0.1, p_h=0.5, e_h=1.5e-4, e_max=3e-4, reward_basis=SLOT_TIME):
    pp = PowerParams()
    spec = SensingSpec(p_d=p_d, p_f=p_f)
    samples = min_sensing_samples(spec, 1.0)
    cost = (sensing_energy(samples, spec.e_s_sample), min_sensing_time(samples, spec.f_s))
    n = len(chains)
    return PlanningContext(
        jt=joint_transition(chains),
        p_d=p_d,
        p_f=p_f,
        rate_table=RateTable.exponential(4),
        power=pp,
        slot_duration=1e-3,
        e_est_total=n * estimation_energy(pp),
        t_est_total=n * pp.t_est,
        sensing_costs=(cost,) * n,
        p_h=p_h,
        e_h=e_h,
        e_max=e_max,
        reward_basis=reward_basis,
    )


def state_bits(index, n):
    return [(index >> (n - 1 - c)) & 1 for c in range(n)]


def oracle_predict(chains, belief):
    n = len(chains)
    out = []
    for s in range(2 ** n):
        total = 0.0
        for prev in range(2 ** n):
            weight = belief[prev]
            for c, chain in enumerate(chains):
                weight *= chain.matrix[state_bits(prev, n)[c], state_bits(s, n)[c]]
            total += weight
        out.append(total)
    return out


def oracle_value(chains, ctx, belief, energy, gains, t, choose=None):
    """
    Exhaustive value of the sensing recursion with explicit gain vectors.
    ``choose`` fixes the sensed channel (or None) instead of maximising.
    """
    if t == 0:
        return 0.0
    n = len(chains)
    rt = ctx.rate_table
    predicted = oracle_predict(chains, belief)

    def future(b, e):
        if t == 1:
            return 0.0
        total = 0.0
        for prob_h, add in ((ctx.p_h, ctx.e_h), (1.0 - ctx.p_h, 0.0)):
            if prob_h == 0:
                continue
            e_next = min(e + add, ctx.e_max) if add else e
            for combo in itertools.product(range(rt.k), repeat=n):
                prob = math.prod(rt.region_probs[k] for k in combo)
                next_gains = [rt.region_rep_gain[k] for k in combo]
                total += prob_h * prob * oracle_value(chains, ctx, b, e_next, next_gains, t - 1, choose)
        return total

    if energy < ctx.e_est_total:
        return future(predicted, energy)

    values = {None: future(predicted, energy - ctx.e_est_total)}
    for c in range(n):
        costs = ctx.slot_costs(ctx.sensing_costs[c])
        eta = spectral_efficiency(gains[c], energy, costs, rt, ctx.power)
        if eta <= 0:
            continue
        e_tx = transmission_cost(gains[c], rt.constellation(gain_region(gains[c], rt)), costs.t_tr, ctx.power)
        after_sensing = energy - ctx.e_est_total - costs.e_s
        value = 0.0
        outcomes = (
            (lambda idle: (1 - ctx.p_f) if idle else 0.0, ctx.reward(eta, costs), after_sensing - e_tx),
            (lambda idle: 0.0 if idle else (1 - ctx.p_d), 0.0, after_sensing - e_tx),
            (lambda idle: ctx.p_f if idle else ctx.p_d, 0.0, after_sensing),
        )
        for likelihood, reward, left in outcomes:
            weights = [predicted[s] * likelihood(state_bits(s, n)[c] == 1) for s in range(2 ** n)]
            prob = sum(weights)
            if prob <= 0:
                continue
            posterior = [w / prob for w in weights]
            value += prob * (reward + future(posterior, left))
        values[c] = value

    if choose is None:
        return max(values.values())
    return values[choose(chains, predicted, gains, energy, ctx, values)]


def myopic_choice(chains, predicted, gains, energy, ctx, values):
    """Highest predicted idle probability times rate; idle when nothing has a rate."""
    n = len(chains)
    best, best_score = None, 0.0
    for c in range(n):
        if c not in values:
            continue
        idle = sum(predicted[s] for s in range(2 ** n) if state_bits(s, n)[c] == 1)
        eta = spectral_efficiency(gains[c], energy, ctx.slot_costs(ctx.sensing_costs[c]), ctx.rate_table, ctx.power)
        if idle * eta > best_score:
            best, best_score = c, idle * eta
    return best


class ObservationModelTests(SimpleTestCase):

    def test_examples(self):
        self.assertEqual(observation_prob(0, 0, 0.9, 0.1), 0.9)
        self.assertAlmostEqual(observation_prob(1, 1, 0.9, 0.1), 0.9)

    def test_total_probability(self):
        for s in (0, 1):
            self.assertAlmostEqual(observation_prob(0, s, 0.8, 0.2) + observation_prob(1, s, 0.8, 0.2), 1.0)


class JointBeliefTests(SimpleTestCase):

    def setUp(self):
        self.chains = [ChannelChain(0.3, 0.8), ChannelChain(0.55, 0.6)]
        self.jt = joint_transition(self.chains)

    def oracle(self, prior, a_hat, o, ack, p_d, p_f):
        predicted = oracle_predict(self.chains, prior)
        if a_hat is None:
            return predicted
        weights = []
        for s, p in enumerate(predicted):
            idle = state_bits(s, 2)[a_hat] == 1
            if ack is True:
                weights.append(p if idle else 0.0)
            elif ack is False:
                weights.append(0.0 if idle else p)
            elif o == 1:
                weights.append(p * ((1 - p_f) if idle else (1 - p_d)))
            else:
                weights.append(p * (p_f if idle else p_d))
        total = sum(weights)
        return [w / total for w in weights]

    def test_matches_brute_force_bayes(self):
        rng = np.random.default_rng(21)
        cases = [(None, None, None), (0, 1, True), (1, 1, False), (0, 1, None), (1, 0, None)]
        for i in range(10_000):
            prior = rng.dirichlet(np.ones(4))
            p_f = rng.uniform(0.01, 0.4)
            p_d = rng.uniform(p_f, 0.99)
            a_hat, o, ack = cases[i % len(cases)]
            updated = update_belief_joint(BeliefJoint(prior), a_hat, o, ack, self.jt, p_d, p_f)
            np.testing.assert_allclose(updated.b, self.oracle(prior, a_hat, o, ack, p_d, p_f), atol=1e-12, rtol=0)
            self.assertAlmostEqual(updated.b.sum(), 1.0, delta=1e-9)

    def test_perfect_sensing_collapses_support(self):
        prior = BeliefJoint.stationary(self.chains)
        updated = update_belief_joint(prior, 1, 1, True, self.jt, 1.0 - 1e-9, 1e-9)
        self.assertAlmostEqual(updated.marginal_idle(1), 1.0, delta=1e-15)
        self.assertEqual(updated.b[0], 0.0)
        self.assertEqual(updated.b[2], 0.0)

    def test_unsensed_slot_is_pure_propagation(self):
        prior = BeliefJoint([0.1, 0.2, 0.3, 0.4])
        updated = update_belief_joint(prior, None, None, None, self.jt, 0.9, 0.1)
        np.testing.assert_allclose(updated.b, prior.b @ self.jt.p)

    def test_impossible_observation(self):
        prior = BeliefJoint([0.0, 0.0, 1.0, 0.0])
        always_busy = joint_transition([ChannelChain(0.0, 0.0), ChannelChain(0.0, 0.0)])
        with self.assertRaises(InconsistentObservation):
            update_belief_joint(prior, 0, 1, True, always_busy, 0.9, 0.1)

    def test_marginals_match_factored_update(self):
        rng = np.random.default_rng(8)
        for _ in range(500):
            pi = rng.random(2)
            joint = BeliefJoint.from_factored(pi)
            for o, ack in ((1, True), (1, False), (1, None), (0, None)):
                updated = update_belief_joint(joint, 0, o, ack, self.jt, 0.9, 0.1)
                expected = update_belief_myopic(pi[0], o, ack, self.chains[0], 0.9, 0.1)
                self.assertAlmostEqual(updated.marginal_idle(0), expected, delta=1e-12)
                self.assertAlmostEqual(updated.marginal_idle(1), self.chains[1].predict_idle(pi[1]), delta=1e-12)

    def test_rejects_unnormalised_vector(self):
        with self.assertRaises(ValueError):
            BeliefJoint([0.5, 0.6])


class MyopicBeliefTests(SimpleTestCase):

    def setUp(self):
        self.chain = ChannelChain(alpha=0.5, beta=0.7)

    def test_ack_cases(self):
        self.assertEqual(update_belief_myopic(0.3, 1, True, self.chain, 0.9, 0.1), 1.0)
        self.assertEqual(update_belief_myopic(0.3, 1, False, self.chain, 0.9, 0.1), 0.0)

    def test_unsensed_at_stationary_point(self):
        self.assertAlmostEqual(update_belief_myopic(0.625, None, None, self.chain, 0.9, 0.1), 0.625)

    def test_busy_observation(self):
        self.assertAlmostEqual(update_belief_myopic(0.625, 0, None, self.chain, 0.9, 0.1), 0.15625, delta=1e-15)

    def test_idle_report_without_transmission(self):
        expected = 0.625 * 0.9 / (0.625 * 0.9 + 0.375 * 0.1)
        self.assertAlmostEqual(update_belief_myopic(0.625, 1, None, self.chain, 0.9, 0.1), expected)

    def test_factored_replace(self):
        beliefs = BeliefFactored((0.2, 0.4))
        self.assertEqual(beliefs.replace(1, 0.9).pi, (0.2, 0.9))
        with self.assertRaises(ValueError):
            BeliefFactored((1.2,))


class CriterionTests(SimpleTestCase):

    def setUp(self):
        self.rt = RateTable.exponential(4)
        self.pp = PowerParams()

    def test_region_one_has_no_rate(self):
        self.assertEqual(spectral_efficiency(0.1, AMPLE, COSTS, self.rt, self.pp), 0)

    def test_empty_battery_has_no_rate(self):
        self.assertEqual(spectral_efficiency(5.0, 0.0, COSTS, self.rt, self.pp), 0)

    def test_top_region_with_ample_energy(self):
        self.assertEqual(spectral_efficiency(5.0, AMPLE, COSTS, self.rt, self.pp), 6)

    def test_energy_gate_boundary(self):
        needed = COSTS.e_est_total + COSTS.e_s + transmission_cost(5.0, 64, COSTS.t_tr, self.pp)
        self.assertEqual(spectral_efficiency(5.0, needed * (1 + 1e-9), COSTS, self.rt, self.pp), 6)
        self.assertEqual(spectral_efficiency(5.0, needed * (1 - 1e-9), COSTS, self.rt, self.pp), 0)

    def test_no_time_left(self):
        no_time = SlotCosts(e_est_total=0.0, e_s=0.0, t_tr=0.0)
        self.assertEqual(spectral_efficiency(5.0, AMPLE, no_time, self.rt, self.pp), 0)

    def test_constant_rate(self):
        self.assertEqual(baseline_constant_rate(1.0, 0.0, 4, COSTS, self.pp), 0)
        self.assertEqual(baseline_constant_rate(1.0, AMPLE, 4, COSTS, self.pp), 2)
        self.assertEqual(baseline_constant_rate(1e-12, AMPLE, 4, COSTS, self.pp), 0)

    def test_myopic_expected_reward(self):
        chain = ChannelChain(alpha=0.5, beta=0.7)
        self.assertEqual(myopic_expected_reward(0.4, chain, 0), 0)
        self.assertAlmostEqual(myopic_expected_reward(1.0, chain, 4), 2.8)
        self.assertAlmostEqual(myopic_expected_reward(0.625, chain, 6), 3.75)


class SelectionTests(SimpleTestCase):

    def setUp(self):
        self.chains = [ChannelChain(0.5, 0.7)] * 3

    def test_all_zero_rates_gives_empty_order(self):
        self.assertEqual(rank_channels_myopic(BeliefFactored((0.5,) * 3), [0, 0, 0], self.chains, 3), [])

    def test_single_positive_rate(self):
        self.assertEqual(rank_channels_myopic(BeliefFactored((0.5,) * 3), [0, 4, 0], self.chains, 3), [1])

    def test_ties_prefer_lower_index(self):
        order = rank_channels_myopic(BeliefFactored((0.5,) * 3), [2, 2, 2], self.chains, 3)
        self.assertEqual(order, [0, 1, 2])

    def test_ranked_by_expected_reward_and_truncated(self):
        order = rank_channels_myopic(BeliefFactored((0.9, 0.1, 0.5)), [2, 6, 4], self.chains, 2)
        # predicted idle 0.68, 0.52, 0.6 times rates 2, 6, 4
        self.assertEqual(order, [1, 2])

    def test_belief_bandwidth(self):
        beliefs = BeliefFactored((0.9, 0.1))
        chains = self.chains[:2]
        self.assertEqual(baseline_belief_bandwidth(beliefs, [1.0, 1.0], chains, 2), [0, 1])
        self.assertEqual(baseline_belief_bandwidth(beliefs, [1.0, 3.0], chains, 1), [1])
        zero = [ChannelChain(0.0, 0.0)] * 2
        self.assertEqual(baseline_belief_bandwidth(BeliefFactored((0.0, 0.0)), [1.0, 1.0], zero, 2), [0, 1])

    def test_random_single_channel(self):
        self.assertEqual(baseline_random([4], np.random.default_rng(0), 1), [4])

    def test_random_is_reproducible(self):
        first = baseline_random(range(5), np.random.default_rng(3), 5)
        second = baseline_random(range(5), np.random.default_rng(3), 5)
        self.assertEqual(first, second)
        self.assertEqual(sorted(first), [0, 1, 2, 3, 4])

    def test_random_first_choice_is_uniform(self):
        rng = np.random.default_rng(12)
        n = 100_000
        counts = [0, 0, 0]
        for _ in range(n):
            counts[baseline_random([0, 1, 2], rng, 1)[0]] += 1
        sigma = math.sqrt((1 / 3) * (2 / 3) / n)
        for count in counts:
            self.assertLess(abs(count / n - 1 / 3), 3 * sigma)

    def test_access_rule(self):
        self.assertEqual(access_decision(1), 1)
        self.assertEqual(access_decision(0), 0)
        with self.assertRaises(ValueError):
            SlotDecision(a_hat=0, o=0, d=1, eta=0.0)
        with self.assertRaises(ValueError):
            SlotDecision(a_hat=0, o=1, d=0, eta=2.0)

    def test_action_sets(self):
        ActionSets(lambda0=3, lambda1=2).validate(3)
        with self.assertRaises(ConfigurationError):
            ActionSets(lambda0=2, lambda1=3).validate(3)
        with self.assertRaises(ConfigurationError):
            ActionSets(lambda0=3, lambda1=2, lambda2=2).validate(3)
        with self.assertRaises(ConfigurationError):
            ActionSets(lambda0=4, lambda1=1).validate(3)


class ExpectedMaximumTests(SimpleTestCase):

    def test_single_channel(self):
        self.assertAlmostEqual(expected_maximum(0.0, [[1.0, 2.0]], [0.5, 0.5]), 1.5)

    def test_two_independent_channels(self):
        self.assertAlmostEqual(expected_maximum(0.0, [[0.0, 1.0], [0.0, 1.0]], [0.5, 0.5]), 0.75)

    def test_floor_clamps(self):
        self.assertAlmostEqual(expected_maximum(1.5, [[1.0, 2.0]], [0.5, 0.5]), 1.75)
        self.assertEqual(expected_maximum(0.7, [], []), 0.7)


class OptimalPlannerTests(SimpleTestCase):

    def setUp(self):
        self.chains = [ChannelChain(0.3, 0.8), ChannelChain(0.4, 0.7)]
        self.ctx = planning_context(self.chains)

    def test_nothing_to_gain(self):
        ctx = planning_context(self.chains[:1])
        value, channel = optimal_value(BeliefJoint.stationary(self.chains[:1]), 1e-3, [0.1], 1, ctx)
        self.assertEqual((value, channel), (0.0, None))

    def test_one_slot_single_channel(self):
        chain = self.chains[0]
        ctx = planning_context([chain], reward_basis=PER_SLOT)
        belief = BeliefJoint.from_factored([0.4])
        value, channel = optimal_value(belief, 1e-3, [5.0], 1, ctx)
        expected = chain.predict_idle(0.4) * (1 - ctx.p_f) * 6
        self.assertEqual(channel, 0)
        self.assertAlmostEqual(value, expected, delta=1e-12)

    def test_one_slot_slot_time_reward(self):
        ctx = planning_context(self.chains[:1])
        belief = BeliefJoint.from_factored([0.4])
        value, _ = optimal_value(belief, 1e-3, [5.0], 1, ctx)
        t_tr = ctx.slot_costs(ctx.sensing_costs[0]).t_tr
        expected = self.chains[0].predict_idle(0.4) * (1 - ctx.p_f) * 6 * t_tr / 1e-3
        self.assertAlmostEqual(value, expected, delta=1e-12)

    def test_matches_exhaustive_recursion(self):
        rng = np.random.default_rng(4)
        cases = [
            ([0.25, 0.25, 0.25, 0.25], 3e-4, [5.0, 0.5]),
            (list(rng.dirichlet(np.ones(4))), 1.6e-4, [0.2, 1.5]),
            (list(rng.dirichlet(np.ones(4))), 2.2e-4, [0.9, 0.9]),
        ]
        for belief, energy, gains in cases:
            value, _ = OptimalPlanner(self.ctx).decide(np.array(belief), energy, gains, 3)
            self.assertAlmostEqual(value, oracle_value(self.chains, self.ctx, belief, energy, gains, 3), delta=1e-9)

    def test_not_worse_than_myopic(self):
        belief = [0.1, 0.2, 0.3, 0.4]
        for energy in (1.6e-4, 3e-4):
            for gains in ([5.0, 0.5], [0.5, 1.6], [2.0, 2.0]):
                value, _ = OptimalPlanner(self.ctx).decide(np.array(belief), energy, gains, 3)
                myopic = oracle_value(self.chains, self.ctx, belief, energy, gains, 3, choose=myopic_choice)
                self.assertGreaterEqual(value, myopic - 1e-12)

    def test_monotone_in_horizon_and_energy(self):
        belief = BeliefJoint.stationary(self.chains)
        gains = [1.2, 0.6]
        by_horizon = [optimal_value(belief, 2e-4, gains, t, self.ctx)[0] for t in range(1, 5)]
        self.assertEqual(by_horizon, sorted(by_horizon))
        by_energy = [optimal_value(belief, e, gains, 3, self.ctx)[0] for e in (0.0, 1e-4, 1.6e-4, 2.5e-4, 3e-4)]
        for lower, higher in zip(by_energy, by_energy[1:]):
            self.assertLessEqual(lower, higher + 1e-12)

    def test_infeasible_sizes(self):
        with self.assertRaises(PlanningInfeasible):
            OptimalPlanner(planning_context([ChannelChain(0.5, 0.5)] * 5))
        with self.assertRaises(PlanningInfeasible):
            OptimalPlanner(self.ctx).decide(np.full(4, 0.25), 1e-4, [1.0, 1.0], 7)

    def test_unsensable_channel_is_skipped(self):
        belief = BeliefJoint.stationary(self.chains)
        costs = [None, self.ctx.sensing_costs[1]]
        _, channel = optimal_value(belief, 3e-4, [5.0, 0.9], 1, self.ctx, sensing_costs=costs)
        self.assertEqual(channel, 1)

    def test_memo_survives_between_decisions(self):
        planner = OptimalPlanner(self.ctx)
        belief = BeliefJoint.stationary(self.chains).b
        first = planner.decide(belief, 2.5e-4, [1.2, 0.6], 4)
        nodes = planner.nodes
        self.assertGreater(nodes, 0)
        self.assertEqual(planner.decide(belief, 2.5e-4, [1.2, 0.6], 4), first)
        self.assertEqual(planner.nodes, nodes)

    def test_warm_memo_gives_the_same_decisions(self):
        warm = OptimalPlanner(self.ctx)
        rng = np.random.default_rng(11)
        for _ in range(8):
            belief = rng.dirichlet(np.ones(4))
            energy = float(rng.uniform(0.0, 3e-4))
            gains = list(rng.exponential(1.0, 2))
            self.assertEqual(
                warm.decide(belief, energy, gains, 3),
                OptimalPlanner(self.ctx).decide(belief, energy, gains, 3),
            )

    def test_shared_planner_is_per_key_and_thread(self):
        planner = shared_planner(self.ctx, 'two-channel')
        self.assertIs(shared_planner(self.ctx, 'two-channel'), planner)
        self.assertIsNot(shared_planner(self.ctx, 'other'), planner)

        seen = []
        thread = threading.Thread(target=lambda: seen.append(shared_planner(self.ctx, 'two-channel')))
        thread.start()
        thread.join()
        self.assertIsNot(seen[0], planner)


class RegistryTests(SimpleTestCase):

    def setUp(self):
        self.chains = (ChannelChain(0.5, 0.7), ChannelChain(0.3, 0.8))
        self.ctx = PolicyContext(
            chains=self.chains, p_d=0.9, p_f=0.1, rate_table=RateTable.exponential(4),
            power=PowerParams(), bandwidths=(2e5, 2e5), constant_m=4,
            planning=planning_context(list(self.chains)),
        )

    def view(self, etas):
        return SlotView(
            candidates=(0, 1), etas=etas, gains=[5.0, 1.0], energy=3e-4,
            sensing_costs={c: self.ctx.planning.sensing_costs[c] for c in (0, 1)}, limit=2, horizon=2,
        )

    def test_unknown_policy(self):
        with self.assertRaises(ConfigurationError):
            build_policy('greedy', self.ctx, np.random.default_rng(0))

    def test_myopic_orders_on_expected_reward(self):
        policy = build_policy('myopic', self.ctx, np.random.default_rng(0))
        self.assertEqual(policy.order(self.view({0: 6.0, 1: 2.0})), [0, 1])
        self.assertEqual(policy.order(self.view({0: 0.0, 1: 2.0})), [1])

    def test_constant_rate_link(self):
        policy = build_policy('constant-rate', self.ctx, np.random.default_rng(0))
        self.assertEqual(policy.link(5.0, AMPLE, COSTS), (2.0, 4))
        self.assertEqual(build_policy('myopic', self.ctx, np.random.default_rng(0)).link(5.0, AMPLE, COSTS), (6.0, 64))

    def test_observe_updates_sensed_channel(self):
        policy = build_policy('belief-bandwidth', self.ctx, np.random.default_rng(0))
        before = policy.beliefs.pi
        policy.observe({0: (1, True)})
        self.assertEqual(policy.beliefs.pi[0], 1.0)
        self.assertAlmostEqual(policy.beliefs.pi[1], self.chains[1].predict_idle(before[1]))

    def test_optimal_policy_senses_at_most_one(self):
        policy = build_policy('optimal', self.ctx, np.random.default_rng(0))
        order = policy.order(self.view({0: 6.0, 1: 2.0}))
        self.assertLessEqual(len(order), 1)
        policy.observe({0: (0, None)})
        self.assertAlmostEqual(policy.joint.b.sum(), 1.0, delta=1e-9)
        self.assertEqual(len(policy.predicted_idle()), 2)

    def test_optimal_policy_channel_limit(self):
        chains = (ChannelChain(0.5, 0.7),) * 5
        ctx = PolicyContext(
            chains=chains, p_d=0.9, p_f=0.1, rate_table=RateTable.exponential(4), power=PowerParams(),
            bandwidths=(2e5,) * 5, planning=planning_context([ChannelChain(0.5, 0.7)]),
        )
        with self.assertRaises(PlanningInfeasible):
            build_policy('optimal', ctx, np.random.default_rng(0))
