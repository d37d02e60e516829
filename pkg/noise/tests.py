import math

import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers
from scipy import stats

from .samplers import DoaKind, DoaLaw, StableParams, sample_doa, sample_stable_increment, stable_target_of, truncated_levy_sample
from .serializers import DoaLawSerializer, StableParamsSerializer
from .streams import SeedTree
from measures.utils import ks_statistic

ROOT_SEED = 20240611
DRAWS = 100_000


class BaseNoiseTestCase(SimpleTestCase):
    def setUp(self):
        self.seeds = SeedTree(ROOT_SEED)

    def stream(self, label, index=0):
        return self.seeds.stream(label, index)


class StableParamsTestCase(BaseNoiseTestCase):
    def test_alpha_one_rejected(self):
        with self.assertRaises(ValueError):
            StableParams(1.0, 0.5, 0.5)

    def test_alpha_outside_range_rejected(self):
        for alpha in (0.0, 2.0, -0.5, 2.5):
            with self.assertRaises(ValueError):
                StableParams(alpha, 0.5, 0.5)

    def test_weights_must_be_positive(self):
        with self.assertRaises(ValueError):
            StableParams(0.5, -0.1, 0.5)
        with self.assertRaises(ValueError):
            StableParams(0.5, 0.0, 0.0)

    def test_symmetric_weights_have_zero_skewness(self):
        self.assertEqual(StableParams(1.5, 0.3, 0.3).skewness, 0.0)
        self.assertEqual(StableParams(0.5, 0.3, 0.0).skewness, 1.0)

    def test_scale_is_positive_on_both_branches(self):
        self.assertGreater(StableParams(0.5, 0.25, 0.25).scale, 0.0)
        self.assertGreater(StableParams(1.5, 0.25, 0.25).scale, 0.0)

    def test_scale_formula(self):
        # sigma^alpha = -(a+ + a-) Gamma(-alpha) cos(pi alpha / 2), alpha = 0.5에서 Gamma(-0.5) = -2 sqrt(pi)
        params = StableParams(0.5, 0.25, 0.25)
        expected = (0.5 * 2.0 * math.sqrt(math.pi) * math.cos(math.pi / 4.0)) ** 2
        self.assertAlmostEqual(params.scale, expected, places=12)


class StableIncrementTestCase(BaseNoiseTestCase):
    def test_zero_increment(self):
        params = StableParams(0.5, 0.25, 0.25)
        self.assertEqual(sample_stable_increment(params, 0.0, self.stream("zero")), 0.0)
        self.assertTrue(np.all(sample_stable_increment(params, 0.0, self.stream("zero"), size=10) == 0.0))

    def test_negative_dt_rejected(self):
        with self.assertRaises(ValueError):
            sample_stable_increment(StableParams(0.5, 0.25, 0.25), -1.0, self.stream("neg"))

    def test_scalar_draw_is_float(self):
        self.assertIsInstance(sample_stable_increment(StableParams(1.5, 0.2, 0.1), 1.0, self.stream("scalar")), float)

    def test_determinism(self):
        params = StableParams(1.5, 0.4, 0.1)
        first = sample_stable_increment(params, 0.7, self.stream("det", 3), size=1000)
        second = sample_stable_increment(params, 0.7, self.stream("det", 3), size=1000)
        np.testing.assert_array_equal(first, second)

    def test_subordinator_is_nonnegative(self):
        draws = sample_stable_increment(StableParams(0.5, 0.25, 0.0), 1.0, self.stream("subordinator"), size=DRAWS)
        self.assertEqual(int(np.sum(draws >= 0.0)), DRAWS)

    def test_subordinator_matches_truncated_oracle(self):
        params = StableParams(0.5, 0.25, 0.0)
        draws = sample_stable_increment(params, 1.0, self.stream("cms"), size=DRAWS)
        oracle = truncated_levy_sample(params, 1.0, 1e-4, self.stream("oracle"), DRAWS)
        self.assertTrue(np.all(oracle >= 0.0))
        self.assertLess(ks_statistic(draws, oracle).stat, 0.05)

    def test_asymmetric_alpha_above_one_matches_truncated_oracle(self):
        params = StableParams(1.5, 0.4, 0.1)
        draws = sample_stable_increment(params, 1.0, self.stream("cms"), size=20_000)
        oracle = truncated_levy_sample(params, 1.0, 1e-2, self.stream("oracle"), 20_000)
        self.assertLess(ks_statistic(draws, oracle).stat, 0.05)

    def test_symmetric_median(self):
        draws = sample_stable_increment(StableParams(0.5, 0.25, 0.25), 1.0, self.stream("median"), size=DRAWS)
        self.assertLess(abs(float(np.median(draws))), 0.02)

    def test_self_similarity(self):
        for alpha in (0.5, 1.5):
            params = StableParams(alpha, 0.3, 0.2)
            at_four = sample_stable_increment(params, 4.0, self.stream("self-similar", 0), size=DRAWS)
            scaled = 4.0 ** (1.0 / alpha) * sample_stable_increment(params, 1.0, self.stream("self-similar", 1), size=DRAWS)
            self.assertLess(ks_statistic(at_four, scaled).stat, 0.02, msg=f"alpha={alpha}")


class DoaTestCase(BaseNoiseTestCase):
    def test_symmetric_support(self):
        draws = sample_doa(DoaLaw.symmetric(0.5), self.stream("support"), size=DRAWS)
        self.assertTrue(np.all(np.abs(draws) >= 1.0))

    def test_symmetric_law_has_no_shift(self):
        self.assertEqual(DoaLaw.symmetric(0.5).center_shift, 0.0)
        self.assertEqual(DoaLaw.symmetric(1.5).center_shift, 0.0)

    def test_symmetric_law_rejects_skewed_sign(self):
        with self.assertRaises(ValueError):
            DoaLaw(DoaKind.SYMMETRIC_PARETO, 0.5, p_plus=0.7)

    def test_tail_function(self):
        law = DoaLaw.asymmetric(0.5, 0.3, x0=2.0)
        draws = sample_doa(law, self.stream("tail"), size=DRAWS)
        for x in (2.0, 8.0, 50.0):
            empirical = float(np.mean(np.abs(draws) > x))
            self.assertAlmostEqual(empirical, float(law.tail(x)), delta=0.01)

    def test_centering_above_one(self):
        law = DoaLaw.asymmetric(1.5, 0.7)
        self.assertAlmostEqual(law.center_shift, 0.4 * 1.5 / 0.5)
        draws = sample_doa(law, self.stream("centering"), size=1_000_000)
        standard_error = float(np.std(draws)) / math.sqrt(draws.size)
        self.assertLess(abs(float(np.mean(draws))), 3.0 * standard_error)

    def test_positive_only_law(self):
        draws = sample_doa(DoaLaw.asymmetric(0.5, 1.0), self.stream("positive"), size=1000)
        self.assertTrue(np.all(draws >= 1.0))


class StableTargetTestCase(SimpleTestCase):
    def test_symmetric_target(self):
        self.assertEqual(stable_target_of(DoaLaw.symmetric(0.5)), StableParams(0.5, 0.25, 0.25))

    def test_one_sided_target(self):
        self.assertEqual(stable_target_of(DoaLaw.asymmetric(0.5, 1.0)).a_minus, 0.0)

    def test_cutoff_scaling(self):
        target = stable_target_of(DoaLaw.symmetric(0.5, x0=2.0))
        self.assertAlmostEqual(target.a_plus, 0.25 * math.sqrt(2.0))
        self.assertAlmostEqual(target.a_minus, 0.25 * math.sqrt(2.0))


class SeedTreeTestCase(SimpleTestCase):
    def test_same_key_same_stream(self):
        seeds = SeedTree(7)
        np.testing.assert_array_equal(seeds.stream("events", 2).random(5), SeedTree(7).stream("events", 2).random(5))

    def test_distinct_keys_distinct_streams(self):
        seeds = SeedTree(7)
        draws = {key: seeds.stream(*key).random() for key in [("events", 0), ("events", 1), ("doa", 0), ("doa", 1)]}
        self.assertEqual(len(set(draws.values())), 4)

    def test_derived_streams_are_uncorrelated(self):
        seeds = SeedTree(ROOT_SEED)
        rho = stats.spearmanr(seeds.stream("particle", 0).random(DRAWS), seeds.stream("particle", 1).random(DRAWS)).statistic
        self.assertLess(abs(rho), 0.01)

    def test_spawn_is_deterministic(self):
        self.assertEqual(SeedTree(5).spawn("chaos_sweep", 3), SeedTree(5).spawn("chaos_sweep", 3))
        self.assertNotEqual(SeedTree(5).spawn("chaos_sweep", 3), SeedTree(5).spawn("chaos_sweep", 4))

    def test_root_must_be_unsigned_64_bit(self):
        with self.assertRaises(ValueError):
            SeedTree(-1)
        with self.assertRaises(ValueError):
            SeedTree(1 << 64)


class NoiseSerializerTestCase(SimpleTestCase):
    def test_valid_doa(self):
        serializer = DoaLawSerializer(data={"alpha": 0.5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), DoaLaw.symmetric(0.5))

    def test_invalid_alpha(self):
        serializer = DoaLawSerializer(data={"alpha": 1.0})
        self.assertFalse(serializer.is_valid())
        self.assertIn("alpha", serializer.errors)

    def test_symmetric_with_skew_rejected(self):
        serializer = DoaLawSerializer(data={"alpha": 0.5, "p_plus": 0.9})
        self.assertFalse(serializer.is_valid())
        self.assertIn("p_plus", serializer.errors)

    def test_stable_params_need_mass(self):
        serializer = StableParamsSerializer(data={"alpha": 1.5, "a_plus": 0.0, "a_minus": 0.0})
        with self.assertRaises(serializers.ValidationError):
            serializer.is_valid(raise_exception=True)
