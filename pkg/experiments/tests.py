import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase

from .exports import export_result
from .models import ExperimentRun
from .serializers import ExperimentConfigSerializer, SimulationConfigSerializer
from .services import (
    COLUMNS,
    fan_out,
    run_chaos_sweep,
    run_collateral_limit,
    run_common_noise,
    run_conditional_iid,
    run_limit_selfcheck,
    run_stable_clt,
    run_time_change_poisson,
)
from noise.samplers import DoaKind, stable_target_of

PURE_COLLATERAL = {
    "alpha": 0.5,
    "rate": {"kind": "constant", "value": 1.0},
}

FULL_MODEL = {
    "alpha": 0.5,
    "drift": {"kind": "moment", "beta": 1.0, "statistic": "arctan"},
    "main_jump": {"kind": "tanh", "kappa": 0.3},
    "rate": {"kind": "tanh", "c0": 1.0, "c1": 1.0},
    "initial_law": {"kind": "uniform", "low": -1.0, "high": 1.0},
}

# collateral 점프가 float 범위를 넘도록 만든 설정
OVERFLOW_DOA = {"kind": "asymmetric_pareto", "alpha": 0.5, "p_plus": 1.0, "x0": 1e308}


def experiment_data(experiment, model=None, **overrides):
    data = {
        "experiment": experiment,
        "model": model or FULL_MODEL,
        "N_grid": [4, 16],
        "M": 20,
        "T": 1.0,
        "h": 0.05,
        "replicas": 20,
        "root_seed": 99,
    }
    data.update(overrides)
    return {key: value for key, value in data.items() if value is not None}


def temporary_dir(test_case):
    path = tempfile.mkdtemp()
    test_case.addCleanup(shutil.rmtree, path, ignore_errors=True)
    return Path(path)


class BaseExperimentTestCase(SimpleTestCase):
    def config(self, experiment, model=None, **overrides):
        serializer = ExperimentConfigSerializer(data=experiment_data(experiment, model, **overrides))
        self.assertTrue(serializer.is_valid(), serializer.errors)
        return serializer.save()

    def assertInvalid(self, field, experiment, model=None, **overrides):
        serializer = ExperimentConfigSerializer(data=experiment_data(experiment, model, **overrides))
        self.assertFalse(serializer.is_valid())
        self.assertIn(field, serializer.errors)


class ExperimentConfigSerializerTestCase(BaseExperimentTestCase):
    def test_defaults(self):
        cfg = self.config("chaos_sweep", h=0.001, M=None, threads=None)
        self.assertEqual(cfg.output_times, (1.0,))
        self.assertEqual(cfg.test_function, "arctan")
        self.assertEqual(cfg.thresholds["ks_cutoff"], 0.05)
        self.assertEqual(cfg.thresholds["pass_fraction"], 0.95)
        self.assertEqual(cfg.doa.kind, DoaKind.SYMMETRIC_PARETO)
        self.assertEqual(cfg.stable, stable_target_of(cfg.doa))

    def test_threshold_override(self):
        cfg = self.config("stable_clt", PURE_COLLATERAL, thresholds={"ks_cutoff": 0.1})
        self.assertEqual(cfg.thresholds["ks_cutoff"], 0.1)
        self.assertEqual(cfg.thresholds["ks_trend_slack"], 0.01)

    def test_unknown_threshold(self):
        self.assertInvalid("thresholds", "stable_clt", PURE_COLLATERAL, thresholds={"cutoff": 0.1})

    def test_unknown_experiment(self):
        self.assertInvalid("experiment", "stable_sweep")

    def test_step_must_be_below_horizon(self):
        self.assertInvalid("h", "chaos_sweep", h=1.0)
        self.assertInvalid("h", "chaos_sweep", h=0.0)

    def test_grid_must_increase(self):
        self.assertInvalid("N_grid", "chaos_sweep", N_grid=[16, 4])
        self.assertInvalid("N_grid", "chaos_sweep", N_grid=[])

    def test_output_times(self):
        self.assertInvalid("output_times", "chaos_sweep", output_times=[0.5, 2.0])
        self.assertInvalid("output_times", "chaos_sweep", output_times=[0.5, 0.5])

    def test_stable_clt_needs_pure_collateral(self):
        self.assertInvalid("model", "stable_clt")

    def test_pairs_need_replicas(self):
        self.assertInvalid("replicas", "conditional_iid", replicas=1)
        self.assertInvalid("replicas", "limit_selfcheck", replicas=1)
        self.assertInvalid("M", "conditional_iid", M=1)

    def test_alpha_mismatch(self):
        self.assertInvalid("doa", "chaos_sweep", doa={"kind": "symmetric_pareto", "alpha": 1.5})
        self.assertInvalid("stable", "chaos_sweep", stable={"alpha": 1.5, "a_plus": 1.0, "a_minus": 1.0})

    def test_main_jump_with_alpha_above_one(self):
        self.assertInvalid("model", "chaos_sweep", dict(FULL_MODEL, alpha=1.5))

    def test_seed_range(self):
        self.assertInvalid("root_seed", "chaos_sweep", root_seed=-1)
        self.assertInvalid("root_seed", "chaos_sweep", root_seed=1 << 64)
        self.assertEqual(self.config("chaos_sweep", root_seed=(1 << 64) - 1).root_seed, (1 << 64) - 1)

    def test_describe_round_trips(self):
        cfg = self.config("common_noise", doa={"kind": "asymmetric_pareto", "alpha": 0.5, "p_plus": 0.7})
        serializer = ExperimentConfigSerializer(data=cfg.describe())
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.save().describe(), cfg.describe())


class SimulationConfigSerializerTestCase(SimpleTestCase):
    def test_defaults(self):
        serializer = SimulationConfigSerializer(data={"model": FULL_MODEL})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        cfg = serializer.save()
        self.assertEqual(cfg.N, 100)
        self.assertEqual(cfg.collateral_scale, 1.0)
        self.assertIsNone(cfg.output_times)

    def test_negative_collateral_scale(self):
        serializer = SimulationConfigSerializer(data={"model": FULL_MODEL, "collateral_scale": -1.0})
        self.assertFalse(serializer.is_valid())
        self.assertIn("collateral_scale", serializer.errors)


class FanOutTestCase(SimpleTestCase):
    def test_keeps_key_order(self):
        self.assertEqual(fan_out(lambda k: k * k, range(10), threads=4), [k * k for k in range(10)])
        self.assertEqual(fan_out(lambda k: k * k, range(10), threads=1), [k * k for k in range(10)])


class RunExperimentTestCase(BaseExperimentTestCase):
    def test_stable_clt_converges(self):
        cfg = self.config("stable_clt", PURE_COLLATERAL, N_grid=[64, 512, 4096], replicas=5000)
        result = run_stable_clt(cfg)
        self.assertEqual(list(result.frame.columns), COLUMNS["stable_clt"])
        self.assertEqual(result.frame["N"].tolist(), [64, 512, 4096])
        self.assertLess(result.frame["ks_stat"].iloc[-1], 0.05)
        self.assertTrue(result.summary["flags"]["final_below_cutoff"])
        self.assertTrue(result.summary["flags"]["non_increasing"])

    def test_thread_count_does_not_change_results(self):
        single = run_stable_clt(self.config("stable_clt", PURE_COLLATERAL, threads=1))
        pooled = run_stable_clt(self.config("stable_clt", PURE_COLLATERAL, threads=4))
        self.assertTrue(single.frame.equals(pooled.frame))
        self.assertEqual(single.summary, pooled.summary)

    def test_time_change_poisson(self):
        cfg = self.config("time_change_poisson", N_grid=[20], T=2.0, h=0.5, replicas=20)
        result = run_time_change_poisson(cfg)
        self.assertEqual(result.frame["replica"].tolist(), list(range(20)))
        self.assertTrue(np.all(result.frame["n_events"] > 0))
        self.assertGreaterEqual(result.summary["flags"]["pass_fraction"], 0.8)

    def test_time_change_poisson_without_events_is_excluded(self):
        model = dict(FULL_MODEL, rate={"kind": "constant", "value": 1e-9})
        result = run_time_change_poisson(self.config("time_change_poisson", model, N_grid=[2], replicas=5))
        self.assertTrue(result.frame["ks_p"].isna().all())
        self.assertEqual(result.summary["flags"]["excluded"], 5)
        self.assertFalse(result.summary["flags"]["passed"])

    def test_collateral_limit(self):
        result = run_collateral_limit(self.config("collateral_limit", replicas=50))
        self.assertEqual(result.frame["N"].tolist(), [4, 16])
        self.assertTrue(np.all(result.frame["n_samples"] == 50))
        self.assertTrue(np.all((result.frame["ks_stat"] >= 0) & (result.frame["ks_stat"] <= 1)))

    def test_chaos_sweep(self):
        result = run_chaos_sweep(self.config("chaos_sweep", output_times=[0.5, 1.0]))
        self.assertEqual(list(zip(result.frame["N"], result.frame["t"])), [(4, 0.5), (4, 1.0), (16, 0.5), (16, 1.0)])
        self.assertTrue(np.all(result.frame["n_pooled"] == 20))
        self.assertTrue(np.all(result.frame["w1"] >= 0))
        self.assertEqual(result.summary["flags"]["final_time"], 1.0)
        self.assertEqual(result.summary["flags"]["q"], 0.25)
        self.assertEqual(len(result.summary["flags"]["final_dq"]), 2)
        self.assertTrue(np.all((result.frame["ks_stat"] >= 0) & (result.frame["ks_stat"] <= 1)))
        # d_q <= W1
        self.assertTrue(np.all(result.frame["dq"] <= result.frame["w1"] + 1e-12))

    def test_chaos_sweep_trend_with_main_jumps(self):
        # N = 1이면 collateral 점프가 없으므로 극한과의 차이가 큼
        cfg = self.config("chaos_sweep", N_grid=[1, 64], M=200, h=0.01, replicas=400)
        flags = run_chaos_sweep(cfg).summary["flags"]
        self.assertTrue(flags["dq_decreased"])
        self.assertTrue(flags["ks_decreased"])
        self.assertTrue(flags["converging"])

    def test_chaos_sweep_trend_alpha_above_one(self):
        model = {"alpha": 1.5, "rate": {"kind": "constant", "value": 2.0}}
        doa = {"kind": "asymmetric_pareto", "alpha": 1.5, "p_plus": 0.8}
        cfg = self.config("chaos_sweep", model, doa=doa, N_grid=[1, 64], M=200, h=0.01, replicas=500)
        flags = run_chaos_sweep(cfg).summary["flags"]
        self.assertEqual(flags["q"], 0.5)
        # 점질량에 머무는 N = 1 입자와 연속 분포인 극한 사이의 KS는 1/2 이상
        self.assertGreaterEqual(flags["final_ks"][0], 0.5)
        self.assertTrue(flags["converging"])

    def test_common_noise_control(self):
        result = run_common_noise(self.config("common_noise", replicas=2))
        self.assertTrue(result.summary["flags"]["low_precision"])
        control = result.extra["control"]
        self.assertEqual(control["N"].tolist(), [4, 16])
        self.assertTrue(np.all(control["var_limit_ref"] == 0.0))
        self.assertEqual(len(set(result.frame["var_limit_ref"])), 1)

    def test_common_noise_persists_and_control_decreases(self):
        cfg = self.config("common_noise", N_grid=[4, 16, 64], M=200, h=0.01, replicas=200)
        result = run_common_noise(cfg)
        self.assertFalse(result.summary["flags"]["low_precision"])
        self.assertTrue(result.summary["flags"]["persists"])
        self.assertTrue(result.summary["flags"]["control_decreasing"])

    def test_limit_selfcheck(self):
        result = run_limit_selfcheck(self.config("limit_selfcheck", replicas=20, bootstrap_resamples=50))
        rows = result.frame.set_index("knob")
        self.assertEqual(rows.loc["h", "value_b"], 0.025)
        self.assertEqual(rows.loc["M", "value_b"], 40)
        self.assertTrue(np.all(result.frame["mc_se"] > 0))

    def test_limit_selfcheck_closed_form(self):
        # f = c 이면 극한은 X0 + c^(1/alpha) S_t 이므로 h, M을 바꿔도 같은 경로에서 같은 값
        model = {"alpha": 0.5, "rate": {"kind": "constant", "value": 2.0}, "initial_law": {"kind": "uniform", "low": -1.0, "high": 1.0}}
        result = run_limit_selfcheck(self.config("limit_selfcheck", model, replicas=50, bootstrap_resamples=100))
        self.assertTrue(result.summary["flags"]["h_passed"])
        self.assertTrue(result.summary["flags"]["M_passed"])

    def test_conditional_iid(self):
        result = run_conditional_iid(self.config("conditional_iid", replicas=30, bootstrap_resamples=50))
        self.assertEqual(result.frame["mode"].tolist(), ["conditional", "unconditional"])
        self.assertTrue(np.all(result.frame["replicas"] == 30))
        self.assertTrue(np.all(np.abs(result.frame["correlation"]) <= 1.0))


class ExportTestCase(BaseExperimentTestCase):
    def test_files_and_determinism(self):
        outputs = []
        for _ in range(2):
            out_dir = temporary_dir(self)
            result = run_common_noise(self.config("common_noise", replicas=3))
            export_result(result, out_dir)
            outputs.append(out_dir)

        for name in ("common_noise.csv", "common_noise.control.csv"):
            first, second = ((out_dir / name).read_text().splitlines() for out_dir in outputs)
            self.assertTrue(first[0].startswith("# generated "))
            self.assertEqual(first[1], "N,var_finite,var_limit_ref")
            # 첫 줄의 timestamp를 제외하면 같은 seed의 결과는 byte 단위로 동일
            self.assertEqual(first[1:], second[1:])

        summaries = [(out_dir / "common_noise.summary.json").read_text() for out_dir in outputs]
        self.assertEqual(summaries[0], summaries[1])
        self.assertEqual(json.loads(summaries[0])["root_seed"], 99)
        dat = (outputs[0] / "common_noise.dat").read_text().splitlines()
        self.assertEqual(dat[0], "# N var_finite var_limit_ref")
        self.assertEqual(len(dat[1].split()), 3)

    def test_missing_p_values_are_empty(self):
        model = dict(FULL_MODEL, rate={"kind": "constant", "value": 1e-9})
        result = run_time_change_poisson(self.config("time_change_poisson", model, N_grid=[2], replicas=2))
        out_dir = temporary_dir(self)
        export_result(result, out_dir)
        self.assertEqual((out_dir / "time_change_poisson.csv").read_text().splitlines()[2], "0,0,")
        self.assertIn("NaN", (out_dir / "time_change_poisson.dat").read_text())


class BaseCommandTestCase(TestCase):
    def setUp(self):
        self.out_dir = temporary_dir(self)

    def write_config(self, data, name="config.json"):
        path = self.out_dir / name
        path.write_text(json.dumps(data))
        return str(path)


class ExperimentCommandTestCase(BaseCommandTestCase):
    def run_command(self, experiment, data, **options):
        call_command("experiment", experiment, config=self.write_config(data), out=str(self.out_dir), stdout=StringIO(), **options)

    def test_completed_run_is_recorded(self):
        self.run_command("stable_clt", experiment_data("stable_clt", PURE_COLLATERAL, replicas=50), seed=7)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, "completed")
        self.assertEqual(int(run.root_seed), 7)
        self.assertEqual(run.config["root_seed"], 7)
        self.assertIsNotNone(run.finished_at)
        self.assertEqual(run.output_path, str(self.out_dir / "stable_clt.csv"))
        self.assertIn("final_below_cutoff", run.summary["flags"])
        self.assertTrue((self.out_dir / "stable_clt.summary.json").exists())

    def test_unsigned_64_bit_seed(self):
        self.run_command("stable_clt", experiment_data("stable_clt", PURE_COLLATERAL, replicas=5), seed=(1 << 64) - 1)
        self.assertEqual(int(ExperimentRun.objects.get().root_seed), (1 << 64) - 1)

    def test_dry_run(self):
        self.run_command("chaos_sweep", experiment_data("chaos_sweep"), dry_run=True)
        self.assertFalse(ExperimentRun.objects.exists())
        self.assertFalse((self.out_dir / "chaos_sweep.csv").exists())

    def test_config_error_exit_code(self):
        with self.assertRaises(CommandError) as context:
            self.run_command("chaos_sweep", experiment_data("chaos_sweep", h=2.0))
        self.assertEqual(context.exception.returncode, 2)
        self.assertFalse(ExperimentRun.objects.exists())

    def test_unreadable_config(self):
        with self.assertRaises(CommandError) as context:
            call_command("experiment", "chaos_sweep", config=str(self.out_dir / "missing.json"))
        self.assertEqual(context.exception.returncode, 2)

    def test_numerical_abort_exit_code(self):
        data = experiment_data("collateral_limit", T=50.0, h=1.0, replicas=2, doa=OVERFLOW_DOA)
        with self.assertRaises(CommandError) as context:
            self.run_command("collateral_limit", data)
        self.assertEqual(context.exception.returncode, 3)
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, "failed")
        self.assertIn("NumericalAbort", run.error)

    def test_enqueue_runs_eagerly_without_broker(self):
        self.run_command("stable_clt", experiment_data("stable_clt", PURE_COLLATERAL, replicas=5), enqueue=True)
        self.assertEqual(ExperimentRun.objects.get().status, "completed")

    def test_enqueued_numerical_abort_exit_code(self):
        data = experiment_data("collateral_limit", T=50.0, h=1.0, replicas=2, doa=OVERFLOW_DOA)
        with self.assertRaises(CommandError) as context:
            self.run_command("collateral_limit", data, enqueue=True)
        self.assertEqual(context.exception.returncode, 3)
        self.assertEqual(ExperimentRun.objects.get().status, "failed")


class SimulateCommandTestCase(BaseCommandTestCase):
    def run_command(self, data, **options):
        call_command("simulate", config=self.write_config(data), out=str(self.out_dir), stdout=StringIO(), **options)

    def test_finite_bundle(self):
        self.run_command({"model": FULL_MODEL, "N": 8, "T": 1.0, "output_times": [0.5, 1.0]}, seed=3)
        events = (self.out_dir / "events.csv").read_text().splitlines()
        states = (self.out_dir / "states.csv").read_text().splitlines()
        self.assertEqual(events[1], "time,particle,accepted,u,main_jump")
        self.assertEqual(states[1], "time,particle,x")
        self.assertEqual(len(states), 2 + 2 * 8)

    def test_limit_bundle(self):
        self.run_command({"model": FULL_MODEL, "M": 5, "T": 1.0, "h": 0.1, "output_times": [1.0]}, limit=True)
        self.assertEqual(len((self.out_dir / "limit_states.csv").read_text().splitlines()), 2 + 5)
        self.assertEqual(len((self.out_dir / "stable_path.csv").read_text().splitlines()), 2 + 11)

    def test_numerical_abort_exit_code(self):
        with self.assertRaises(CommandError) as context:
            self.run_command({"model": {"alpha": 0.5}, "doa": OVERFLOW_DOA, "N": 4, "T": 50.0})
        self.assertEqual(context.exception.returncode, 3)

    def test_config_error_exit_code(self):
        with self.assertRaises(CommandError) as context:
            self.run_command({"model": {"alpha": 1.0}})
        self.assertEqual(context.exception.returncode, 2)
