import numpy as np
from django.test import SimpleTestCase

from .services import StablePathGrid, conditional_iid_check, directing_measure_at, sample_stable_path, simulate_limit
from measures.utils import empirical_apply, ks_statistic
from noise.samplers import StableParams, sample_stable_increment
from noise.streams import SeedTree
from particles.coefficients import ConstantRate, ModelSpec, MomentDrift, PointMass, TanhJump, TanhRate, UniformLaw
from stablechaos.exceptions import NumericalAbort

ROOT_SEED = 777
HALF = StableParams(0.5, 0.25, 0.25)
THREE_HALVES = StableParams(1.5, 0.4, 0.1)

CLOSED_FORM = ModelSpec(0.5, rate=ConstantRate(2.0), initial_law=UniformLaw(-1.0, 1.0))
FULL = ModelSpec(0.5, drift=MomentDrift(1.0), main_jump=TanhJump(0.3), rate=TanhRate(1.0, 1.0), initial_law=UniformLaw(-1.0, 1.0))


class BaseLimitsTestCase(SimpleTestCase):
    def setUp(self):
        self.seeds = SeedTree(ROOT_SEED)


class StablePathTestCase(BaseLimitsTestCase):
    def test_grid_with_short_last_step(self):
        path = sample_stable_path(HALF, 1.0, 0.3, self.seeds.stream("path"))
        self.assertEqual(path.increments.size, 4)
        self.assertEqual(path.times[-1], 1.0)
        self.assertAlmostEqual(path.times[-1] - path.times[-2], 0.1)
        self.assertEqual(path.values[0], 0.0)

    def test_exact_division(self):
        self.assertEqual(sample_stable_path(HALF, 1.0, 1e-3, self.seeds.stream("path")).increments.size, 1000)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            sample_stable_path(HALF, 1.0, 0.0, self.seeds.stream("path"))
        with self.assertRaises(ValueError):
            StablePathGrid(0.1, 1.0, np.zeros(3))

    def test_coarsen(self):
        fine = sample_stable_path(THREE_HALVES, 1.0, 0.05, self.seeds.stream("path"))
        coarse = fine.coarsen(2)
        self.assertEqual(coarse.h, 0.1)
        self.assertEqual(coarse.increments.size, 10)
        np.testing.assert_allclose(coarse.values, fine.values[::2], rtol=1e-12, atol=1e-12)

    def test_to_frame(self):
        frame = sample_stable_path(HALF, 1.0, 0.25, self.seeds.stream("path")).to_frame()
        self.assertEqual(list(frame.columns), ["t", "S"])
        self.assertEqual(len(frame), 5)


class SimulateLimitTestCase(BaseLimitsTestCase):
    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            simulate_limit(CLOSED_FORM, 0, 1.0, 0.1, HALF, self.seeds)
        with self.assertRaises(ValueError):
            simulate_limit(CLOSED_FORM, 4, 1.0, 0.0, HALF, self.seeds)
        with self.assertRaises(ValueError):
            simulate_limit(CLOSED_FORM, 4, 1.0, 1.0, HALF, self.seeds)
        with self.assertRaises(ValueError):
            simulate_limit(CLOSED_FORM, 4, 1.0, 0.1, THREE_HALVES, self.seeds)

    def test_closed_form(self):
        bundle = simulate_limit(CLOSED_FORM, 5, 1.0, 0.01, HALF, self.seeds)
        expected = bundle.initial[None, :] + 4.0 * bundle.path.values[:, None]
        np.testing.assert_allclose(bundle.states, expected, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(bundle.common, 4.0 * bundle.path.values, rtol=1e-10, atol=1e-12)

    def test_closed_form_is_step_size_independent(self):
        fine_path = sample_stable_path(HALF, 1.0, 0.005, self.seeds.stream("path"))
        coarse_path = fine_path.coarsen(2)
        fine = simulate_limit(CLOSED_FORM, 3, 1.0, 0.005, HALF, self.seeds, path=fine_path)
        coarse = simulate_limit(CLOSED_FORM, 3, 1.0, 0.01, HALF, self.seeds, path=coarse_path)
        np.testing.assert_array_equal(fine.initial, coarse.initial)
        np.testing.assert_allclose(coarse.states, fine.states[::2], rtol=1e-10, atol=1e-12)

    def test_closed_form_marginal_matches_stable_law(self):
        samples = 100_000
        increments = np.empty(samples)
        spec = ModelSpec(0.5, rate=ConstantRate(2.0))
        for r in range(samples):
            bundle = simulate_limit(spec, 1, 1.0, 0.25, HALF, self.seeds.spawn("marginal", r), output_times=[0.0, 1.0])
            increments[r] = bundle.states[1, 0] - bundle.states[0, 0]
        direct = 4.0 * sample_stable_increment(HALF, 1.0, self.seeds.stream("direct"), size=samples)
        self.assertLess(ks_statistic(increments, direct).stat, 0.02)

    def test_common_increment_is_shared(self):
        spec = ModelSpec(0.5, rate=TanhRate(1.0, 1.0), initial_law=PointMass(0.5))
        bundle = simulate_limit(spec, 8, 1.0, 0.01, HALF, self.seeds)
        self.assertTrue(np.all(bundle.states == bundle.states[:, :1]))

    def test_rate_means_stay_within_bounds(self):
        bundle = simulate_limit(FULL, 50, 1.0, 0.01, HALF, self.seeds)
        self.assertTrue(np.all(bundle.rate_means >= FULL.f_lower))
        self.assertTrue(np.all(bundle.rate_means <= FULL.f_upper))

    def test_main_jumps_fire(self):
        spec = ModelSpec(0.5, main_jump=TanhJump(0.3), initial_law=PointMass(1.0))
        bundle = simulate_limit(spec, 20, 1.0, 0.01, HALF, self.seeds)
        # 공통 잡음을 빼면 남는 변위는 main jump뿐
        displacement = bundle.states[-1] - bundle.initial - bundle.common[-1]
        self.assertTrue(np.any(np.abs(displacement) > 1e-9))

    def test_exchangeability(self):
        M = 6
        initial = UniformLaw(-1.0, 1.0).sample(self.seeds.stream("initial"), M)
        permutation = self.seeds.stream("permutation").permutation(M)
        original = simulate_limit(FULL, M, 1.0, 0.01, HALF, self.seeds, initial=initial)
        permuted = simulate_limit(FULL, M, 1.0, 0.01, HALF, self.seeds, initial=initial[permutation], particle_keys=permutation)
        np.testing.assert_array_equal(permuted.states, original.states[:, permutation])

    def test_alpha_above_one(self):
        spec = ModelSpec(1.5, drift=MomentDrift(1.0), rate=TanhRate(1.0, 1.0), initial_law=UniformLaw(-1.0, 1.0))
        bundle = simulate_limit(spec, 20, 1.0, 0.01, THREE_HALVES, self.seeds, output_times=[0.5, 1.0])
        self.assertEqual(bundle.states.shape, (2, 20))
        self.assertTrue(np.all(np.isfinite(bundle.states)))

    def test_determinism(self):
        first = simulate_limit(FULL, 10, 1.0, 0.01, HALF, self.seeds)
        second = simulate_limit(FULL, 10, 1.0, 0.01, HALF, SeedTree(ROOT_SEED))
        np.testing.assert_array_equal(first.states, second.states)

    def test_overflow_aborts(self):
        with self.assertRaises(NumericalAbort) as context:
            simulate_limit(ModelSpec(0.5), 3, 1.0, 0.1, StableParams(0.5, 1e200, 0.0), self.seeds)
        self.assertEqual(context.exception.position, 0)


class DirectingMeasureTestCase(BaseLimitsTestCase):
    def test_initial_measure(self):
        bundle = simulate_limit(FULL, 10, 1.0, 0.1, HALF, self.seeds)
        np.testing.assert_array_equal(directing_measure_at(bundle, 0.0).values, bundle.initial)

    def test_single_particle_is_dirac(self):
        bundle = simulate_limit(FULL, 1, 1.0, 0.1, HALF, self.seeds)
        measure = directing_measure_at(bundle, 0.55)
        self.assertEqual(len(measure), 1)
        self.assertEqual(measure.values[0], bundle.states[5, 0])

    def test_grid_point_before_t(self):
        bundle = simulate_limit(FULL, 10, 1.0, 0.1, HALF, self.seeds)
        np.testing.assert_array_equal(directing_measure_at(bundle, 0.35).values, bundle.states[3])

    def test_rate_average_within_bounds(self):
        bundle = simulate_limit(FULL, 30, 1.0, 0.1, HALF, self.seeds)
        for t in (0.0, 0.5, 1.0):
            value = empirical_apply(directing_measure_at(bundle, t), FULL.rate)
            self.assertGreaterEqual(value, FULL.f_lower)
            self.assertLessEqual(value, FULL.f_upper)

    def test_beyond_horizon(self):
        bundle = simulate_limit(FULL, 3, 1.0, 0.1, HALF, self.seeds)
        with self.assertRaises(ValueError):
            directing_measure_at(bundle, 1.5)


class ConditionalIidTestCase(BaseLimitsTestCase):
    def test_needs_two_replicas(self):
        with self.assertRaises(ValueError):
            conditional_iid_check(FULL, 10, 1.0, 0.1, HALF, self.seeds, R=1)

    def test_common_noise_dominant_model(self):
        spec = ModelSpec(0.5, rate=TanhRate(1.0, 1.0), initial_law=UniformLaw(-0.1, 0.1))
        report = conditional_iid_check(spec, 100, 1.0, 0.05, HALF, self.seeds, R=100)
        self.assertEqual(report.replicas, 100)
        self.assertTrue(report.conditionally_independent())
        self.assertGreater(report.unconditional_corr, 0.5)

    def test_general_model(self):
        report = conditional_iid_check(FULL, 100, 1.0, 0.05, HALF, self.seeds, R=100)
        self.assertLess(abs(report.conditional_corr), 3.0 * report.conditional_se)

    def test_frozen_path_without_idiosyncratic_noise(self):
        # 점질량 초기값, b = psi = 0: 경로를 고정하면 모든 replica의 값이 같음
        spec = ModelSpec(0.5, rate=ConstantRate(1.0), initial_law=PointMass(0.0))
        report = conditional_iid_check(spec, 10, 1.0, 0.1, HALF, self.seeds, R=20)
        self.assertEqual(report.conditional_corr, 0.0)
        self.assertEqual(report.conditional_se, 0.0)
        self.assertTrue(report.conditionally_independent())
        self.assertAlmostEqual(report.unconditional_corr, 1.0, places=6)
