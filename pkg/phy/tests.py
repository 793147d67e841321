import math

import numpy as np
from django.test import SimpleTestCase

from ehcrsim.exceptions import ConfigurationError
from .detection import SensingSpec, min_sensing_samples, min_sensing_time, sensing_energy, q_inv
from .exceptions import NoTransmission, UnsensableChannel
from .power import PowerParams, estimation_energy, transmission_energies, transmit_power
from .rates import RateTable, gain_region


def oracle_q_inv(p):
    """Bisection on the complementary error integral, independent of scipy."""
    lo, hi = -40.0, 40.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(mid / math.sqrt(2.0)) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def oracle_samples(p_d, p_f, gamma, h):
    shrink = (1.0 + gamma * h) ** (-1.0 / 3.0)
    p = (shrink * oracle_q_inv(p_f) - oracle_q_inv(p_d)) / (1.0 - shrink)
    return math.ceil((p + math.sqrt(p * p + 4.0)) ** 2 / 36.0)


class SensingSpecTests(SimpleTestCase):

    def test_inverted_targets_rejected(self):
        with self.assertRaises(ConfigurationError):
            SensingSpec(p_d=0.1, p_f=0.9)

    def test_nonpositive_snr_rejected(self):
        with self.assertRaises(ConfigurationError):
            SensingSpec(p_d=0.9, p_f=0.1, gamma=0.0)

    def test_from_collision(self):
        spec = SensingSpec.from_collision(p_col=0.1, p_f=0.1, gamma_db=0.0)
        self.assertAlmostEqual(spec.p_d, 0.9)
        self.assertEqual(spec.gamma, 1.0)
        self.assertAlmostEqual(spec.p_col, 0.1)


class MinSensingSamplesTests(SimpleTestCase):

    def test_q_inv_matches_bisection(self):
        for p in (1e-6, 0.01, 0.1, 0.5, 0.9, 0.999):
            self.assertAlmostEqual(q_inv(p), oracle_q_inv(p), delta=1e-8)

    def test_reference_point(self):
        spec = SensingSpec(p_d=0.9, p_f=0.1, gamma=1.0)
        self.assertEqual(min_sensing_samples(spec, 1.0), 15)
        self.assertEqual(oracle_samples(0.9, 0.1, 1.0, 1.0), 15)

    def test_coin_flip_detector_needs_one_sample(self):
        spec = SensingSpec(p_d=0.5, p_f=0.5, gamma=1.0)
        self.assertEqual(min_sensing_samples(spec, 1.0), 1)
        self.assertEqual(oracle_samples(0.5, 0.5, 1.0, 1.0), 1)

    def test_strong_channel_needs_fewer_samples(self):
        spec = SensingSpec(p_d=0.9, p_f=0.1, gamma=1.0)
        self.assertLess(min_sensing_samples(spec, 1e6), min_sensing_samples(spec, 1.0))

    def test_matches_oracle_on_grid(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            p_f = rng.uniform(0.01, 0.4)
            p_d = rng.uniform(0.5, 0.99)
            h = rng.exponential(1.0) + 0.05
            spec = SensingSpec(p_d=p_d, p_f=p_f, gamma=1.0)
            self.assertEqual(min_sensing_samples(spec, h), oracle_samples(p_d, p_f, 1.0, h))

    def test_monotonicity(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            p_f = rng.uniform(0.01, 0.3)
            p_d = rng.uniform(0.5, 0.95)
            h = rng.uniform(0.05, 5.0)
            base = min_sensing_samples(SensingSpec(p_d=p_d, p_f=p_f), h)
            self.assertLessEqual(min_sensing_samples(SensingSpec(p_d=p_d, p_f=p_f), h * 1.5), base)
            self.assertLessEqual(min_sensing_samples(SensingSpec(p_d=p_d, p_f=p_f + 0.05), h), base)
            self.assertGreaterEqual(min_sensing_samples(SensingSpec(p_d=p_d + 0.04, p_f=p_f), h), base)

    def test_zero_gain_is_unsensable(self):
        with self.assertRaises(UnsensableChannel):
            min_sensing_samples(SensingSpec(p_d=0.9, p_f=0.1), 0.0)


class SensingCostTests(SimpleTestCase):

    def test_sensing_time(self):
        self.assertAlmostEqual(min_sensing_time(15, 2e5), 75e-6)
        self.assertEqual(min_sensing_time(1, 1.0), 1.0)
        self.assertAlmostEqual(min_sensing_time(200, 2e5), 1e-3)

    def test_sensing_energy(self):
        self.assertAlmostEqual(sensing_energy(15, 0.11e-6), 1.65e-6, delta=1e-18)
        self.assertEqual(sensing_energy(1, 0.0), 0.0)
        self.assertAlmostEqual(sensing_energy(504, 0.11e-6), 5.544e-5, delta=1e-17)


class PowerTests(SimpleTestCase):

    def setUp(self):
        self.pp = PowerParams()

    def test_no_transmission_region_needs_no_power(self):
        self.assertEqual(transmit_power(0.3, 1, self.pp), 0.0)

    def test_qpsk_at_unit_gain(self):
        expected = math.log(2000.0) / 1.5 * 3.0 * 4e-5
        self.assertAlmostEqual(transmit_power(1.0, 4, self.pp), expected, delta=1e-15)
        self.assertAlmostEqual(transmit_power(1.0, 4, self.pp), 6.081e-4, delta=1e-7)

    def test_inverse_gain_law(self):
        self.assertAlmostEqual(transmit_power(2.0, 4, self.pp), transmit_power(1.0, 4, self.pp) / 2.0)
        products = [transmit_power(g, 16, self.pp) * g for g in (0.1, 0.7, 3.0, 40.0)]
        for value in products:
            self.assertAlmostEqual(value, products[0], delta=1e-15)

    def test_zero_gain_raises(self):
        with self.assertRaises(NoTransmission):
            transmit_power(0.0, 4, self.pp)

    def test_transmission_energies(self):
        self.assertEqual(transmission_energies(0.0, 1e-3, self.pp), (0.0, 0.188 * 1e-3))
        e_tr, e_ckt = transmission_energies(6.081e-4, 8e-4, self.pp)
        self.assertAlmostEqual(e_tr, 4.865e-7, delta=1e-10)
        self.assertAlmostEqual(e_ckt, 1.513e-4, delta=1e-7)
        self.assertEqual(transmission_energies(0.3, 0.0, self.pp), (0.0, 0.0))

    def test_estimation_energy(self):
        self.assertAlmostEqual(self.pp.t_est, 7e-5, delta=1e-18)
        reference = transmit_power(1.0, 16, self.pp)
        self.assertAlmostEqual(self.pp.p_est, 0.2 * reference)
        self.assertAlmostEqual(estimation_energy(self.pp), 0.2 * reference * 14 / 2e5)
        self.assertAlmostEqual(estimation_energy(self.pp), 4.26e-8, delta=1e-10)
        self.assertEqual(estimation_energy(PowerParams(estimation_fraction=0.0)), 0.0)

    def test_rejects_nonpositive_bandwidth(self):
        with self.assertRaises(ConfigurationError):
            PowerParams(b=0.0)


class RateTableTests(SimpleTestCase):

    def setUp(self):
        self.rt = RateTable.exponential(4)

    def test_default_boundaries(self):
        expected = (-math.log(0.75), -math.log(0.5), -math.log(0.25))
        for got, want in zip(self.rt.boundaries, expected):
            self.assertAlmostEqual(got, want, delta=1e-15)
        self.assertEqual(self.rt.constellations, (1, 4, 16, 64))

    def test_spectral_efficiency(self):
        for k in range(1, 5):
            self.assertEqual(RateTable.spectral_efficiency(k), 2 * (k - 1))
            self.assertEqual(math.log2(self.rt.constellation(k)), 2 * (k - 1))

    def test_region_probs(self):
        self.assertAlmostEqual(math.fsum(self.rt.region_probs), 1.0, delta=1e-12)
        for p in self.rt.region_probs:
            self.assertAlmostEqual(p, 0.25, delta=1e-12)
        self.assertAlmostEqual(self.rt.expected_efficiency(), 3.0, delta=1e-12)

    def test_representative_gains_inside_regions(self):
        edges = (0.0,) + self.rt.boundaries + (math.inf,)
        for rep, lo, hi in zip(self.rt.region_rep_gain, edges, edges[1:]):
            self.assertTrue(lo < rep < hi)
        mean = math.fsum(p * g for p, g in zip(self.rt.region_probs, self.rt.region_rep_gain))
        self.assertAlmostEqual(mean, 1.0, delta=1e-12)

    def test_boundary_convention(self):
        b1 = self.rt.boundaries[0]
        self.assertEqual(gain_region(0.0, self.rt), 1)
        self.assertEqual(gain_region(np.nextafter(b1, 0.0), self.rt), 1)
        self.assertEqual(gain_region(b1, self.rt), 2)
        self.assertEqual(gain_region(0.6931, self.rt), 2)
        self.assertEqual(gain_region(0.6932, self.rt), 3)
        self.assertEqual(gain_region(50.0, self.rt), 4)

    def test_empirical_region_frequencies(self):
        rng = np.random.default_rng(2024)
        n = 1_000_000
        regions = gain_region(rng.exponential(1.0, size=n), self.rt)
        for k, p in enumerate(self.rt.region_probs, start=1):
            freq = np.mean(regions == k)
            self.assertLess(abs(freq - p), 3.0 * math.sqrt(p * (1 - p) / n))

    def test_custom_boundaries_validated(self):
        with self.assertRaises(ConfigurationError):
            RateTable.from_boundaries([0.5, 0.2, 1.0])
        table = RateTable.from_boundaries([0.1, 1.0])
        self.assertEqual(table.k, 3)
        self.assertAlmostEqual(math.fsum(table.region_probs), 1.0, delta=1e-12)
