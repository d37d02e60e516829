import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers
from scipy import stats

from .coefficients import (
    ConstantRate,
    ConvolutionDrift,
    MomentDrift,
    ModelSpec,
    PointMass,
    TanhJump,
    TanhRate,
    TruncatedGaussian,
    UniformLaw,
)
from .serializers import ModelSpecSerializer
from .services import (
    EventLog,
    TrajectoryBundle,
    cumulated_intensity,
    decompose_trajectory,
    export_events,
    export_states,
    simulate_collateral_sum,
    simulate_finite,
    time_changed_walk,
    transformed_event_times,
)
from measures.utils import ks_statistic
from noise.samplers import DoaLaw
from noise.streams import SeedTree
from stablechaos.exceptions import NumericalAbort

ROOT_SEED = 4242

FULL_MODEL_DATA = {
    "alpha": 0.5,
    "drift": {"kind": "moment", "beta": 1.0, "statistic": "arctan"},
    "main_jump": {"kind": "tanh", "kappa": 0.3},
    "rate": {"kind": "tanh", "c0": 1.0, "c1": 1.0},
    "initial_law": {"kind": "uniform", "low": -1.0, "high": 1.0},
}


def full_spec(alpha=0.5):
    extra = {"main_jump": TanhJump(0.3)} if alpha < 1 else {}
    return ModelSpec(
        alpha,
        drift=MomentDrift(1.0, "arctan"),
        rate=TanhRate(1.0, 1.0),
        initial_law=UniformLaw(-1.0, 1.0),
        **extra,
    )


def synthetic_bundle(spec, N, T, times, particles, u):
    """Bundle with a hand-written event log and a constant-rate clock."""
    times = np.asarray(times, dtype=float)
    grid = np.concatenate([[0.0], times, [T]])
    return TrajectoryBundle(
        spec=spec,
        N=N,
        T=T,
        grid=grid,
        states=np.zeros((grid.size, N)),
        drift=np.zeros((grid.size, N)),
        initial=np.zeros(N),
        events=EventLog.from_columns(times, particles, [True] * times.size, u, [0.0] * times.size),
        clock_knots=grid,
        clock_deficit=np.zeros(grid.size),
        scale=N ** (-1.0 / spec.alpha),
    )


class BaseParticlesTestCase(SimpleTestCase):
    def setUp(self):
        self.seeds = SeedTree(ROOT_SEED)
        self.doa = DoaLaw.symmetric(0.5)

    def replica(self, index):
        return self.seeds.spawn("replica", index)


class CoefficientsTestCase(BaseParticlesTestCase):
    def test_main_jump_rejected_above_one(self):
        with self.assertRaises(ValueError):
            ModelSpec(1.5, main_jump=TanhJump(0.3))

    def test_rate_bounds(self):
        spec = full_spec()
        self.assertEqual((spec.f_lower, spec.f_upper), (1.0, 2.0))
        self.assertTrue(spec.check_rate_bounds(self.seeds.stream("rate-check")))

    def test_rate_must_be_bounded_below(self):
        with self.assertRaises(ValueError):
            TanhRate(0.0, 1.0)
        with self.assertRaises(ValueError):
            ConstantRate(-1.0)

    def test_descriptor_bounds_hold(self):
        x = self.seeds.stream("points").standard_cauchy(1000)
        for drift in (MomentDrift(0.7, "tanh"), ConvolutionDrift("tanh", 0.5, 2.0), ConvolutionDrift("gaussian", -0.5)):
            self.assertLessEqual(float(np.max(np.abs(drift(x, x)))), drift.bound)
        self.assertLessEqual(float(np.max(np.abs(TanhJump(0.3)(x, x)))), 0.3)

    def test_cost_classes(self):
        self.assertEqual(MomentDrift(1.0).cost, "O(N)")
        self.assertEqual(ConvolutionDrift("tanh", 1.0).cost, "O(N^2)")

    def test_truncated_gaussian_support(self):
        draws = TruncatedGaussian(1.0, 0.5, 2.0).sample(self.seeds.stream("initial"), 10_000)
        self.assertTrue(np.all(np.abs(draws - 1.0) <= 1.0))

    def test_pure_collateral(self):
        self.assertTrue(ModelSpec(0.5).is_pure_collateral)
        self.assertFalse(full_spec().is_pure_collateral)

    def test_describe(self):
        self.assertEqual(full_spec().describe()["drift"], {"kind": "moment", "beta": 1.0, "statistic": "arctan"})


class ModelSpecSerializerTestCase(SimpleTestCase):
    def test_full_model(self):
        serializer = ModelSpecSerializer(data=FULL_MODEL_DATA)
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save(), full_spec())

    def test_defaults(self):
        serializer = ModelSpecSerializer(data={"alpha": 1.5})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertTrue(serializer.save().is_pure_collateral)

    def test_main_jump_above_one_rejected(self):
        serializer = ModelSpecSerializer(data={**FULL_MODEL_DATA, "alpha": 1.5})
        self.assertFalse(serializer.is_valid())
        self.assertIn("main_jump", serializer.errors)

    def test_missing_parameter_rejected(self):
        serializer = ModelSpecSerializer(data={"alpha": 0.5, "rate": {"kind": "tanh", "c0": 1.0}})
        with self.assertRaises(serializers.ValidationError):
            serializer.is_valid(raise_exception=True)

    def test_invalid_rate_value_rejected(self):
        serializer = ModelSpecSerializer(data={"alpha": 0.5, "rate": {"kind": "constant", "value": 0.0}})
        self.assertFalse(serializer.is_valid())
        self.assertIn("rate", serializer.errors)


class SimulateFiniteTestCase(BaseParticlesTestCase):
    def test_invalid_arguments(self):
        spec = ModelSpec(0.5)
        with self.assertRaises(ValueError):
            simulate_finite(spec, 0, 1.0, self.doa, self.seeds)
        with self.assertRaises(ValueError):
            simulate_finite(spec, 4, -1.0, self.doa, self.seeds)
        with self.assertRaises(ValueError):
            simulate_finite(spec, 4, 1.0, DoaLaw.symmetric(1.5), self.seeds)
        with self.assertRaises(ValueError):
            simulate_finite(spec, 4, 1.0, self.doa, self.seeds, index_map=[0, 0, 1, 2])

    def test_zero_horizon(self):
        bundle = simulate_finite(full_spec(), 10, 0.0, self.doa, self.seeds)
        np.testing.assert_array_equal(bundle.grid, [0.0])
        np.testing.assert_array_equal(bundle.states[0], bundle.initial)
        self.assertEqual(len(bundle.events), 0)

    def test_single_particle_without_drift_is_constant(self):
        spec = ModelSpec(0.5, rate=TanhRate(1.0, 1.0), initial_law=PointMass(0.3))
        bundle = simulate_finite(spec, 1, 20.0, self.doa, self.seeds)
        self.assertGreater(bundle.events.n_accepted, 0)
        self.assertTrue(np.all(bundle.states == 0.3))

    def test_determinism(self):
        first = simulate_finite(full_spec(), 20, 2.0, self.doa, self.seeds)
        second = simulate_finite(full_spec(), 20, 2.0, self.doa, SeedTree(ROOT_SEED))
        np.testing.assert_array_equal(first.states, second.states)
        np.testing.assert_array_equal(first.events.u, second.events.u)
        np.testing.assert_array_equal(first.clock_deficit, second.clock_deficit)

    def test_event_log(self):
        bundle = simulate_finite(full_spec(), 20, 2.0, self.doa, self.seeds)
        events = bundle.events
        self.assertTrue(np.all(np.diff(events.time) > 0))
        np.testing.assert_array_equal(np.isnan(events.u), ~events.accepted)
        self.assertTrue(np.all(events.main_jump[~events.accepted] == 0.0))
        self.assertGreater(events.n_accepted, 0)
        self.assertLess(events.n_accepted, len(events))

    def test_constant_rate_event_count_is_poisson(self):
        N, c, T = 5, 2.0, 1.0
        spec = ModelSpec(0.5, rate=ConstantRate(c))
        counts = np.array([simulate_finite(spec, N, T, self.doa, self.replica(r)).events.n_accepted for r in range(500)])
        mean = N * c * T
        # 기대 빈도가 작은 꼬리 구간은 양 끝 bin으로 합침
        edges = np.arange(4, 17)
        observed = np.array([np.sum(counts <= edges[0])] + [np.sum(counts == k) for k in edges[1:-1]] + [np.sum(counts >= edges[-1])])
        probabilities = np.concatenate([[stats.poisson.cdf(edges[0], mean)], stats.poisson.pmf(edges[1:-1], mean), [stats.poisson.sf(edges[-1] - 1, mean)]])
        self.assertGreater(stats.chisquare(observed, probabilities * counts.size).pvalue, 0.01)

    def test_collateral_increments_are_identical(self):
        spec = ModelSpec(0.5, initial_law=PointMass(0.0))
        bundle = simulate_finite(spec, 16, 1.0, self.doa, self.seeds)
        first = np.flatnonzero(bundle.events.accepted)[0]
        i = bundle.events.particle[first]
        state = bundle.state_at(bundle.events.time[first])
        others = np.delete(state, i)
        self.assertTrue(np.all(others == bundle.events.u[first] * bundle.scale))
        self.assertEqual(state[i], 0.0)

    def test_collateral_control_has_no_collateral(self):
        spec = ModelSpec(0.5, main_jump=TanhJump(0.3), initial_law=UniformLaw(-1.0, 1.0))
        bundle = simulate_finite(spec, 16, 2.0, self.doa, self.seeds, collateral_scale=0.0)
        self.assertEqual(bundle.scale, 0.0)
        moved = np.any(bundle.states != bundle.initial, axis=0)
        jumped = np.isin(np.arange(16), bundle.events.particle[bundle.events.accepted])
        np.testing.assert_array_equal(moved, jumped)

    def test_permutation_equivariance(self):
        N = 8
        spec = ModelSpec(0.5, drift=ConvolutionDrift("tanh", 0.8), main_jump=TanhJump(0.3), rate=TanhRate(1.0, 1.0))
        initial = UniformLaw(-2.0, 2.0).sample(self.seeds.stream("initial"), N)
        permutation = self.seeds.stream("permutation").permutation(N)
        original = simulate_finite(spec, N, 2.0, self.doa, self.seeds, initial=initial)
        relabeled = simulate_finite(spec, N, 2.0, self.doa, self.seeds, initial=initial[permutation], index_map=np.argsort(permutation))
        np.testing.assert_array_equal(relabeled.states, original.states[:, permutation])
        np.testing.assert_array_equal(relabeled.events.particle, np.argsort(permutation)[original.events.particle])
        np.testing.assert_array_equal(relabeled.clock_deficit, original.clock_deficit)

    def test_snapshot_mode_matches_full_grid(self):
        spec = ModelSpec(0.5, main_jump=TanhJump(0.3), rate=TanhRate(1.0, 1.0), initial_law=UniformLaw(-1.0, 1.0))
        times = [0.0, 0.5, 1.25, 2.0]
        full = simulate_finite(spec, 12, 2.0, self.doa, self.seeds)
        snapshot = simulate_finite(spec, 12, 2.0, self.doa, self.seeds, output_times=times)
        self.assertTrue(snapshot.snapshot)
        np.testing.assert_array_equal(snapshot.grid, times)
        for k, t in enumerate(times):
            np.testing.assert_array_equal(snapshot.states[k], full.state_at(t))

    def test_output_times_validated(self):
        with self.assertRaises(ValueError):
            simulate_finite(full_spec(), 4, 1.0, self.doa, self.seeds, output_times=[0.5, 2.0])
        with self.assertRaises(ValueError):
            simulate_finite(full_spec(), 4, 1.0, self.doa, self.seeds, output_times=[0.5, 0.2])

    def test_overflow_aborts(self):
        doa = DoaLaw.asymmetric(0.5, 1.0, x0=1e308)
        with self.assertRaises(NumericalAbort) as context:
            simulate_finite(ModelSpec(0.5), 4, 50.0, doa, self.seeds)
        self.assertIsNotNone(context.exception.position)

    def test_exports(self):
        bundle = simulate_finite(full_spec(), 6, 1.0, self.doa, self.seeds)
        events = export_events(bundle)
        self.assertEqual(list(events.columns), ["time", "particle", "accepted", "u", "main_jump"])
        self.assertEqual(len(events), len(bundle.events))
        states = export_states(bundle, [0.0, 0.5, 1.0])
        self.assertEqual(list(states.columns), ["time", "particle", "x"])
        self.assertEqual(len(states), 18)


class DecompositionTestCase(BaseParticlesTestCase):
    def test_identity_on_full_model(self):
        T = 5.0
        bundle = simulate_finite(full_spec(), 50, T, self.doa, self.seeds)
        for i in range(bundle.N):
            self.assertLessEqual(decompose_trajectory(bundle, i).residual(), 1e-9 * T)

    def test_identity_above_one(self):
        T = 3.0
        bundle = simulate_finite(full_spec(1.5), 30, T, DoaLaw.asymmetric(1.5, 0.7), self.seeds)
        for i in range(bundle.N):
            decomposition = decompose_trajectory(bundle, i)
            self.assertTrue(np.all(decomposition.I == 0.0))
            self.assertLessEqual(decomposition.residual(), 1e-9 * T)

    def test_pure_collateral_paths(self):
        T = 2.0
        bundle = simulate_finite(ModelSpec(0.5, rate=TanhRate(1.0, 1.0)), 20, T, self.doa, self.seeds)
        for i in range(bundle.N):
            decomposition = decompose_trajectory(bundle, i)
            self.assertTrue(np.all(decomposition.B == 0.0))
            np.testing.assert_allclose(decomposition.X - decomposition.X0, decomposition.J - decomposition.E, rtol=0.0, atol=1e-9 * T)

    def test_zero_events(self):
        spec = ModelSpec(0.5, drift=MomentDrift(1.0), initial_law=UniformLaw(-1.0, 1.0))
        bundle = simulate_finite(spec, 4, 1e-6, self.doa, self.seeds)
        self.assertEqual(len(bundle.events), 0)
        decomposition = decompose_trajectory(bundle, 2)
        self.assertTrue(np.all(decomposition.J == 0.0))
        self.assertTrue(np.all(decomposition.E == 0.0))
        self.assertTrue(np.all(decomposition.I == 0.0))
        np.testing.assert_allclose(decomposition.B, decomposition.X - decomposition.X0, atol=1e-15)

    def test_single_hand_computed_event(self):
        bundle = synthetic_bundle(ModelSpec(0.5), N=16, T=1.0, times=[0.5], particles=[0], u=[2.0])
        own = decompose_trajectory(bundle, 0)
        other = decompose_trajectory(bundle, 3)
        self.assertEqual(own.J[-1], 0.0078125)
        self.assertEqual(own.E[-1], 0.0078125)
        self.assertEqual(other.J[-1], 0.0078125)
        self.assertEqual(other.E[-1], 0.0)
        self.assertEqual(own.J[0], 0.0)

    def test_index_out_of_range(self):
        bundle = synthetic_bundle(ModelSpec(0.5), N=4, T=1.0, times=[], particles=[], u=[])
        with self.assertRaises(ValueError):
            decompose_trajectory(bundle, 4)


class TimeChangeTestCase(BaseParticlesTestCase):
    def test_unit_rate_clock_is_identity(self):
        bundle = simulate_finite(ModelSpec(0.5), 10, 3.0, self.doa, self.seeds)
        clock = cumulated_intensity(bundle)
        np.testing.assert_array_equal(clock.values, clock.knots)

    def test_constant_rate_clock(self):
        bundle = simulate_finite(ModelSpec(0.5, drift=MomentDrift(0.5), rate=ConstantRate(2.5)), 10, 3.0, self.doa, self.seeds)
        clock = cumulated_intensity(bundle)
        self.assertEqual(clock.values[-1], 2.5 * 3.0)
        self.assertEqual(clock(3.0), 7.5)

    def test_bounds_on_every_knot_pair(self):
        for index in range(5):
            bundle = simulate_finite(full_spec(), 30, 2.0, self.doa, self.replica(index))
            clock = cumulated_intensity(bundle)
            self.assertEqual(clock.values[0], 0.0)
            self.assertTrue(clock.within_bounds(bundle.spec.f_lower, bundle.spec.f_upper))
            knots, values = clock.knots[::7], clock.values[::7]
            gaps = knots[None, :] - knots[:, None]
            increments = values[None, :] - values[:, None]
            upper = np.triu(np.ones(gaps.shape, dtype=bool), k=1)
            slack = 1e-12 * bundle.spec.f_upper * bundle.T
            self.assertTrue(np.all(increments[upper] >= bundle.spec.f_lower * gaps[upper] - slack))
            self.assertTrue(np.all(increments[upper] <= bundle.spec.f_upper * gaps[upper] + slack))

    def test_inverse(self):
        bundle = simulate_finite(full_spec(), 10, 2.0, self.doa, self.seeds)
        clock = cumulated_intensity(bundle)
        times = np.array([0.0, 0.3, 1.1, 2.0])
        np.testing.assert_allclose(clock.inverse(clock(times)), times, atol=1e-12)
        with self.assertRaises(ValueError):
            clock.inverse(clock.values[-1] + 1.0)

    def test_no_events(self):
        bundle = synthetic_bundle(ModelSpec(0.5), N=4, T=1.0, times=[], particles=[], u=[])
        self.assertEqual(transformed_event_times(bundle).size, 0)

    def test_regular_events_have_unit_spacing(self):
        N, c = 4, 2.0
        times = np.arange(1, 9) / (N * c)
        spec = ModelSpec(0.5, rate=ConstantRate(c))
        bundle = synthetic_bundle(spec, N=N, T=2.0, times=times, particles=[0] * 8, u=[1.0] * 8)
        np.testing.assert_array_equal(transformed_event_times(bundle), np.arange(1, 9))

    def test_spacings_are_exponential(self):
        spec = ModelSpec(0.5, rate=TanhRate(1.0, 1.0), initial_law=UniformLaw(-1.0, 1.0))
        passed = 0
        for index in range(20):
            bundle = simulate_finite(spec, 100, 10.0, self.doa, self.replica(index), output_times=[10.0])
            s = transformed_event_times(bundle)
            passed += ks_statistic(np.diff(np.concatenate([[0.0], s])), "expon").pvalue > 0.01
        self.assertGreaterEqual(passed, 18)

    def test_time_changed_walk_reproduces_collateral_sum(self):
        bundle = simulate_finite(full_spec(), 25, 2.0, self.doa, self.seeds)
        walk = time_changed_walk(bundle)
        self.assertEqual(walk.times.size, bundle.events.n_accepted)
        J = decompose_trajectory(bundle, 0).J
        np.testing.assert_allclose(walk.collateral_sum(bundle.grid), J, rtol=0.0, atol=1e-9)


class CollateralFastPathTestCase(BaseParticlesTestCase):
    def test_shapes_and_determinism(self):
        times = [0.25, 0.5, 1.0]
        first = simulate_collateral_sum(64, 1.0, 1.0, self.doa, self.seeds, times)
        self.assertEqual(first.shape, (3,))
        np.testing.assert_array_equal(first, simulate_collateral_sum(64, 1.0, ConstantRate(1.0), self.doa, SeedTree(ROOT_SEED), times))

    def test_state_dependent_rate_rejected(self):
        with self.assertRaises(ValueError):
            simulate_collateral_sum(64, 1.0, TanhRate(1.0, 1.0), self.doa, self.seeds, [1.0])

    def test_matches_full_simulation_in_law(self):
        N, replicas = 32, 1000
        spec = ModelSpec(0.5, initial_law=PointMass(0.0))
        fast = np.array([simulate_collateral_sum(N, 1.0, 1.0, self.doa, self.replica(r), [1.0])[0] for r in range(replicas)])
        full = []
        for r in range(replicas):
            bundle = simulate_finite(spec, N, 1.0, self.doa, self.seeds.spawn("full", r), output_times=[1.0])
            full.append(decompose_trajectory(bundle, 0).J[-1])
        self.assertGreater(ks_statistic(fast, full).pvalue, 0.001)

    def test_zero_scale_for_single_time_zero(self):
        np.testing.assert_array_equal(simulate_collateral_sum(16, 1.0, 1.0, self.doa, self.seeds, [0.0]), [0.0])
