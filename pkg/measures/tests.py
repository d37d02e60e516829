import itertools
import math

import numpy as np
from django.test import SimpleTestCase

from .utils import Sample, d_q, empirical_apply, empirical_mean, equalize, ks_statistic, wasserstein1_1d, wasserstein_dq
from noise.streams import SeedTree

ROOT_SEED = 31337


def brute_force_cost(a, b, cost):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return min(float(np.mean(cost(a, b[list(perm)]))) for perm in itertools.permutations(range(b.size)))


class BaseMeasuresTestCase(SimpleTestCase):
    def setUp(self):
        self.rng = SeedTree(ROOT_SEED).stream("measures", 0)

    def random_pair(self, low=2, high=4):
        size = int(self.rng.integers(low, high + 1))
        return self.rng.normal(0.0, 3.0, size), self.rng.normal(0.0, 3.0, size)


class SampleTestCase(SimpleTestCase):
    def test_empty_sample_rejected(self):
        with self.assertRaises(ValueError):
            Sample([])

    def test_non_finite_sample_rejected(self):
        with self.assertRaises(ValueError):
            Sample([0.0, math.inf])
        with self.assertRaises(ValueError):
            Sample([math.nan])

    def test_values_are_flattened(self):
        self.assertEqual(len(Sample([[1.0, 2.0], [3.0, 4.0]])), 4)

    def test_empirical_mean_ignores_order(self):
        values = np.array([1e16, 1.0, -1e16, 3.0, 0.1])
        self.assertEqual(empirical_mean(values), empirical_mean(values[::-1]))
        self.assertEqual(empirical_mean(values), empirical_mean(values[[2, 0, 4, 1, 3]]))


class Wasserstein1TestCase(BaseMeasuresTestCase):
    def test_examples(self):
        self.assertEqual(wasserstein1_1d([1.0, 3.0], [2.0, 4.0]), 1.0)
        self.assertEqual(wasserstein1_1d([0.0, 0.0], [1.0, 1.0]), 1.0)
        sample = self.rng.normal(size=50)
        self.assertEqual(wasserstein1_1d(sample, sample[::-1]), 0.0)

    def test_unequal_sizes_rejected(self):
        with self.assertRaises(ValueError):
            wasserstein1_1d([0.0, 1.0], [0.0])

    def test_empty_rejected(self):
        with self.assertRaises(ValueError):
            wasserstein1_1d([], [])

    def test_matches_exhaustive_coupling(self):
        for _ in range(100):
            a, b = self.random_pair()
            expected = brute_force_cost(a, b, lambda x, y: np.abs(x - y))
            self.assertAlmostEqual(wasserstein1_1d(a, b), expected, places=12)

    def test_symmetry_and_triangle_inequality(self):
        for _ in range(1000):
            size = int(self.rng.integers(1, 20))
            a, b, c = (self.rng.standard_cauchy(size) for _ in range(3))
            ab, bc, ac = wasserstein1_1d(a, b), wasserstein1_1d(b, c), wasserstein1_1d(a, c)
            self.assertEqual(ab, wasserstein1_1d(b, a))
            self.assertLessEqual(ac, (ab + bc) * (1.0 + 1e-12))


class TruncatedConcaveTestCase(BaseMeasuresTestCase):
    def test_d_q_examples(self):
        self.assertEqual(d_q(1.5, 1.5, 0.5), 0.0)
        self.assertEqual(d_q(0.0, 0.25, 0.5), 0.25)
        self.assertEqual(d_q(0.0, 4.0, 0.5), 2.0)

    def test_d_q_is_vectorized(self):
        np.testing.assert_array_equal(d_q(np.zeros(2), np.array([0.25, 4.0]), 0.5), np.array([0.25, 2.0]))

    def test_q_outside_unit_interval_rejected(self):
        for q in (0.0, 1.0, 1.5):
            with self.assertRaises(ValueError):
                d_q(0.0, 1.0, q)

    def test_identical_samples(self):
        distance = wasserstein_dq([1.0, 2.0, 5.0], [5.0, 1.0, 2.0], 0.5)
        self.assertEqual(distance.bound, 0.0)
        self.assertEqual(distance.exact, 0.0)

    def test_two_point_example(self):
        distance = wasserstein_dq([0.0, 10.0], [1.0, 11.0], 0.5, exact=True)
        self.assertEqual(distance.bound, 1.0)
        self.assertEqual(distance.exact, 1.0)

    def test_exact_matches_enumeration_and_stays_below_bound(self):
        for _ in range(100):
            a, b = self.random_pair(2, 8)
            q = float(self.rng.uniform(0.1, 0.9))
            distance = wasserstein_dq(a, b, q, exact=True)
            expected = brute_force_cost(a, b, lambda x, y: d_q(x, y, q))
            self.assertAlmostEqual(distance.exact, expected, places=12)
            self.assertLessEqual(distance.exact, distance.bound + 1e-12)

    def test_bounded_by_wasserstein1(self):
        for _ in range(200):
            a, b = self.random_pair(1, 10)
            distance = wasserstein_dq(a, b, 0.5)
            w1 = wasserstein1_1d(a, b)
            self.assertLessEqual(distance.exact, w1 + 1e-12)
            self.assertLessEqual(distance.bound, w1 + 1e-12)

    def test_large_samples_report_bound_only(self):
        a, b = self.random_pair(11, 11)
        self.assertIsNone(wasserstein_dq(a, b, 0.5).exact)
        with self.assertRaises(ValueError):
            wasserstein_dq(a, b, 0.5, exact=True)

    def test_exact_can_be_skipped(self):
        self.assertIsNone(wasserstein_dq([0.0, 1.0], [1.0, 2.0], 0.5, exact=False).exact)


class KolmogorovSmirnovTestCase(BaseMeasuresTestCase):
    def test_identical_samples(self):
        sample = self.rng.normal(size=100)
        self.assertEqual(ks_statistic(sample, sample).stat, 0.0)

    def test_single_atom_against_uniform(self):
        self.assertAlmostEqual(ks_statistic([0.5], "uniform").stat, 0.5)

    def test_cdf_callable(self):
        self.assertAlmostEqual(ks_statistic([0.5], lambda x: np.clip(x, 0.0, 1.0)).stat, 0.5)

    def test_disjoint_supports(self):
        self.assertEqual(ks_statistic([0.0, 1.0, 2.0], [5.0, 6.0]).stat, 1.0)

    def test_statistic_range_and_increasing_map_invariance(self):
        for _ in range(50):
            a, b = self.rng.normal(size=40), self.rng.standard_cauchy(60)
            result = ks_statistic(a, b)
            self.assertGreaterEqual(result.stat, 0.0)
            self.assertLessEqual(result.stat, 1.0)
            self.assertAlmostEqual(ks_statistic(np.arctan(a), np.arctan(b)).stat, result.stat, places=12)
            self.assertAlmostEqual(ks_statistic(np.exp(a), np.exp(b)).stat, result.stat, places=12)


class EmpiricalApplyTestCase(SimpleTestCase):
    def test_registered_functions(self):
        self.assertEqual(empirical_apply([4.0, -2.0], "one"), 1.0)
        self.assertEqual(empirical_apply([1.0, 2.0, 3.0], "identity"), 2.0)
        self.assertAlmostEqual(empirical_apply([1.0, -1.0], "arctan"), 0.0)

    def test_callable(self):
        self.assertEqual(empirical_apply([1.0, 3.0], lambda x: x**2), 5.0)

    def test_unknown_function_rejected(self):
        with self.assertRaises(ValueError):
            empirical_apply([1.0], "sigmoid")

    def test_equalize(self):
        rng = SeedTree(ROOT_SEED).stream("equalize", 0)
        a, b = equalize(np.arange(10.0), np.arange(4.0), rng)
        self.assertEqual((a.size, b.size), (4, 4))
        self.assertTrue(set(a).issubset(set(np.arange(10.0))))
