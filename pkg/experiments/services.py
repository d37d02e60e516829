import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from django.utils import timezone

from limits.services import sample_stable_path, simulate_limit, conditional_iid_check
from measures.utils import bootstrap_se, empirical_apply, equalize, ks_statistic, wasserstein1_1d, wasserstein_dq
from noise.samplers import DoaLaw, StableParams, sample_stable_increment
from noise.streams import SeedTree
from particles.coefficients import ModelSpec
from particles.services import decompose_trajectory, simulate_collateral_sum, simulate_finite, transformed_event_times

logger = logging.getLogger(__name__)

EXPERIMENTS = [
    "stable_clt",
    "time_change_poisson",
    "collateral_limit",
    "chaos_sweep",
    "common_noise",
    "limit_selfcheck",
    "conditional_iid",
]

COLUMNS = {
    "stable_clt": ["N", "ks_stat", "n_samples"],
    "time_change_poisson": ["replica", "n_events", "ks_p"],
    "collateral_limit": ["N", "ks_stat", "n_samples"],
    "chaos_sweep": ["N", "t", "w1", "dq", "ks_stat", "n_pooled"],
    "common_noise": ["N", "var_finite", "var_limit_ref"],
    "limit_selfcheck": ["knob", "value_a", "value_b", "w1", "mc_se"],
    "conditional_iid": ["mode", "correlation", "std_error", "replicas"],
}

# 이보다 적은 replica로 구한 분산은 정밀도가 낮다고 표시
LOW_PRECISION_REPLICAS = 10


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelSpec
    doa: DoaLaw
    stable: StableParams
    N_grid: tuple
    M: int
    T: float
    h: float
    replicas: int
    output_times: tuple
    root_seed: int
    out_path: str
    drift_step: float
    test_function: str
    threads: int
    bootstrap_resamples: int
    thresholds: dict = field(default_factory=dict)

    @property
    def seeds(self) -> SeedTree:
        return SeedTree(self.root_seed)

    def describe(self) -> dict:
        """JSON form of the configuration; ``threads`` and ``out_path`` do not affect results."""
        return {
            "experiment": self.experiment,
            "model": self.model.describe(),
            "doa": {"kind": self.doa.kind.value, "alpha": self.doa.alpha, "p_plus": self.doa.p_plus, "x0": self.doa.x0},
            "stable": {"alpha": self.stable.alpha, "a_plus": self.stable.a_plus, "a_minus": self.stable.a_minus},
            "N_grid": list(self.N_grid),
            "M": self.M,
            "T": self.T,
            "h": self.h,
            "replicas": self.replicas,
            "output_times": list(self.output_times),
            "root_seed": self.root_seed,
            "drift_step": self.drift_step,
            "test_function": self.test_function,
            "bootstrap_resamples": self.bootstrap_resamples,
            "thresholds": dict(self.thresholds),
        }


@dataclass(frozen=True)
class SimulationConfig:
    model: ModelSpec
    doa: DoaLaw
    stable: StableParams
    N: int
    M: int
    T: float
    h: float
    drift_step: float
    collateral_scale: float
    root_seed: int
    output_times: tuple | None = None


@dataclass
class RunResult:
    experiment: str
    frame: pd.DataFrame
    summary: dict
    extra: dict = field(default_factory=dict)


def fan_out(task, keys, threads=1):
    """Evaluate ``task`` on every key, in a thread pool when threads > 1; results keep the key order."""
    keys = list(keys)
    if threads <= 1:
        return [task(key) for key in keys]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(task, keys))


def _frame(experiment, rows, sort_by):
    frame = pd.DataFrame(rows, columns=COLUMNS[experiment])
    return frame.sort_values(sort_by, kind="stable").reset_index(drop=True)


def _summary(cfg, **flags):
    return {
        "experiment": cfg.experiment,
        "root_seed": cfg.root_seed,
        "config": cfg.describe(),
        "thresholds": dict(cfg.thresholds),
        "flags": flags,
    }


def _non_increasing(values, slack):
    return bool(all(b <= a + slack for a, b in zip(values, values[1:])))


def _pooled_finite(cfg, label, N, times, collateral_scale=1.0):
    """One snapshot bundle per replica of the N-particle system, in replica order."""

    def replica(r):
        return simulate_finite(
            cfg.model,
            N,
            cfg.T,
            cfg.doa,
            cfg.seeds.spawn(f"{label}/N={N}", r),
            output_times=times,
            drift_step=cfg.drift_step,
            collateral_scale=collateral_scale,
        )

    return fan_out(replica, range(cfg.replicas), cfg.threads)


def _pooled_limit(cfg, label, times):
    def replica(r):
        return simulate_limit(cfg.model, cfg.M, cfg.T, cfg.h, cfg.stable, cfg.seeds.spawn(label, r), output_times=times)

    return fan_out(replica, range(cfg.replicas), cfg.threads)


def run_stable_clt(cfg: ExperimentConfig) -> RunResult:
    c = cfg.model.rate.value
    # J^N_T -> S^alpha(c T) 이므로 비교 대상은 (cT)^(1/alpha) S_1과 같은 분포
    target_time = c * cfg.T
    rows = []
    for N in cfg.N_grid:
        samples = fan_out(
            lambda r: simulate_collateral_sum(N, cfg.T, c, cfg.doa, cfg.seeds.spawn(f"stable_clt/N={N}", r), [cfg.T])[0],
            range(cfg.replicas),
            cfg.threads,
        )
        direct = sample_stable_increment(cfg.stable, target_time, cfg.seeds.stream("stable_clt/direct", N), size=cfg.replicas)
        stat = ks_statistic(samples, direct).stat
        logger.info("stable_clt N=%d: KS %.4f over %d samples", N, stat, cfg.replicas)
        rows.append((N, stat, cfg.replicas))

    frame = _frame(cfg.experiment, rows, ["N"])
    stats_by_n = frame["ks_stat"].tolist()
    summary = _summary(
        cfg,
        final_below_cutoff=bool(stats_by_n[-1] < cfg.thresholds["ks_cutoff"]),
        non_increasing=_non_increasing(stats_by_n, cfg.thresholds["ks_trend_slack"]),
    )
    return RunResult(cfg.experiment, frame, summary)


def run_time_change_poisson(cfg: ExperimentConfig) -> RunResult:
    N = cfg.N_grid[0]

    def replica(r):
        bundle = simulate_finite(cfg.model, N, cfg.T, cfg.doa, cfg.seeds.spawn("time_change_poisson", r), output_times=[cfg.T], drift_step=cfg.drift_step)
        s = transformed_event_times(bundle)
        if s.size < 1:
            return (r, 0, np.nan)
        spacings = np.diff(np.concatenate([[0.0], s]))
        return (r, s.size, ks_statistic(spacings, "expon").pvalue)

    frame = _frame(cfg.experiment, fan_out(replica, range(cfg.replicas), cfg.threads), ["replica"])
    counted = frame.dropna(subset=["ks_p"])
    fraction = float((counted["ks_p"] > cfg.thresholds["p_value_floor"]).mean()) if len(counted) else 0.0
    logger.info("time_change_poisson N=%d: %d/%d replicas counted, pass fraction %.3f", N, len(counted), len(frame), fraction)
    summary = _summary(
        cfg,
        counted=len(counted),
        excluded=len(frame) - len(counted),
        pass_fraction=fraction,
        passed=bool(len(counted) > 0 and fraction >= cfg.thresholds["pass_fraction"]),
    )
    return RunResult(cfg.experiment, frame, summary)


def run_collateral_limit(cfg: ExperimentConfig) -> RunResult:
    # 극한 J^infty_T 는 int mu(f)^(1/alpha) dS; stable path마다 새로 뽑아 풀링
    reference = np.array([bundle.common[-1] for bundle in _pooled_limit(cfg, "collateral_limit/limit", [cfg.T])])
    rows = []
    for N in cfg.N_grid:
        pooled = np.array([decompose_trajectory(bundle, 0).J[-1] for bundle in _pooled_finite(cfg, "collateral_limit", N, [cfg.T])])
        stat = ks_statistic(pooled, reference).stat
        logger.info("collateral_limit N=%d: KS %.4f", N, stat)
        rows.append((N, stat, pooled.size))

    frame = _frame(cfg.experiment, rows, ["N"])
    stats_by_n = frame["ks_stat"].tolist()
    summary = _summary(
        cfg,
        final_below_cutoff=bool(stats_by_n[-1] < cfg.thresholds["ks_cutoff"]),
        non_increasing=_non_increasing(stats_by_n, cfg.thresholds["ks_trend_slack"]),
    )
    return RunResult(cfg.experiment, frame, summary)


def run_chaos_sweep(cfg: ExperimentConfig) -> RunResult:
    times = list(cfg.output_times)
    # 같은 경로의 입자를 여러 개 쓰면 조건부 분포를 표본추출하게 되므로 경로마다 입자 하나만 사용
    reference = np.array([bundle.states[:, 0] for bundle in _pooled_limit(cfg, "chaos_sweep/limit", times)])
    # alpha < 1이면 주변분포의 1차 모멘트가 없으므로 추세는 d_q 거리와 KS로 판단
    q = min(cfg.model.alpha, 1.0) / 2.0
    rng = cfg.seeds.stream("chaos_sweep/equalize", 0)
    rows = []
    for N in cfg.N_grid:
        pooled = np.array([bundle.states[:, 0] for bundle in _pooled_finite(cfg, "chaos_sweep", N, times)])
        for k, t in enumerate(times):
            finite, limit = equalize(pooled[:, k], reference[:, k], rng)
            w1 = wasserstein1_1d(finite, limit)
            dq = wasserstein_dq(finite, limit, q, exact=False).bound
            ks = ks_statistic(finite, limit).stat
            logger.info("chaos_sweep N=%d t=%g: W1 %.5f, d_q %.5f, KS %.4f", N, t, w1, dq, ks)
            rows.append((N, t, w1, dq, ks, finite.size))

    frame = _frame(cfg.experiment, rows, ["N", "t"])
    final = frame[frame["t"] == times[-1]]

    def decreased(column):
        values = final[column].tolist()
        return bool(len(values) > 1 and values[-1] < values[0])

    summary = _summary(
        cfg,
        final_time=times[-1],
        q=q,
        final_w1=final["w1"].tolist(),
        final_dq=final["dq"].tolist(),
        final_ks=final["ks_stat"].tolist(),
        w1_decreased=decreased("w1"),
        dq_decreased=decreased("dq"),
        ks_decreased=decreased("ks_stat"),
        converging=decreased("dq") and decreased("ks_stat"),
    )
    return RunResult(cfg.experiment, frame, summary)


def run_common_noise(cfg: ExperimentConfig) -> RunResult:
    g = cfg.test_function

    def variance(values):
        return float(np.var(values, ddof=1)) if len(values) > 1 else 0.0

    limit_values = [empirical_apply(bundle.states[-1], g) for bundle in _pooled_limit(cfg, "common_noise/limit", [cfg.T])]
    var_limit = variance(limit_values)

    rows, control_rows = [], []
    for N in cfg.N_grid:
        finite = [empirical_apply(bundle.states[-1], g) for bundle in _pooled_finite(cfg, "common_noise", N, [cfg.T])]
        control = [empirical_apply(bundle.states[-1], g) for bundle in _pooled_finite(cfg, "common_noise", N, [cfg.T], collateral_scale=0.0)]
        rows.append((N, variance(finite), var_limit))
        control_rows.append((N, variance(control), 0.0))
        logger.info("common_noise N=%d: var %.5f (control %.5f, limit %.5f)", N, rows[-1][1], control_rows[-1][1], var_limit)

    frame = _frame(cfg.experiment, rows, ["N"])
    control = _frame(cfg.experiment, control_rows, ["N"])
    control_variances = control["var_finite"].tolist()
    summary = _summary(
        cfg,
        low_precision=cfg.replicas < LOW_PRECISION_REPLICAS,
        persists=bool(frame["var_finite"].iloc[-1] >= 0.5 * var_limit),
        control_decreasing=bool(all(b < a for a, b in zip(control_variances, control_variances[1:]))),
    )
    return RunResult(cfg.experiment, frame, summary, extra={"control": control})


def run_limit_selfcheck(cfg: ExperimentConfig) -> RunResult:
    half = cfg.h / 2.0

    def step_pair(r):
        seeds = cfg.seeds.spawn("limit_selfcheck/h", r)
        fine = sample_stable_path(cfg.stable, cfg.T, half, seeds.stream("stable_path", 0))
        coarse = fine.coarsen(2)
        a = simulate_limit(cfg.model, cfg.M, cfg.T, coarse.h, cfg.stable, seeds, path=coarse, output_times=[cfg.T])
        b = simulate_limit(cfg.model, cfg.M, cfg.T, half, cfg.stable, seeds, path=fine, output_times=[cfg.T])
        return a.states[-1, 0], b.states[-1, 0]

    def size_pair(r):
        seeds = cfg.seeds.spawn("limit_selfcheck/M", r)
        path = sample_stable_path(cfg.stable, cfg.T, cfg.h, seeds.stream("stable_path", 0))
        a = simulate_limit(cfg.model, cfg.M, cfg.T, cfg.h, cfg.stable, seeds, path=path, output_times=[cfg.T])
        b = simulate_limit(cfg.model, 2 * cfg.M, cfg.T, cfg.h, cfg.stable, seeds, path=path, output_times=[cfg.T])
        return a.states[-1, 0], b.states[-1, 0]

    rng = cfg.seeds.stream("limit_selfcheck/bootstrap", 0)
    rows, passed = [], {}
    for knob, pair, values in (("h", step_pair, (cfg.h, half)), ("M", size_pair, (cfg.M, 2 * cfg.M))):
        pooled = np.array(fan_out(pair, range(cfg.replicas), cfg.threads))
        a, b = pooled[:, 0], pooled[:, 1]
        w1 = wasserstein1_1d(a, b)
        mc_se = bootstrap_se(wasserstein1_1d, (a, b), rng, n_resamples=cfg.bootstrap_resamples)
        passed[knob] = bool(w1 <= cfg.thresholds["selfcheck_factor"] * mc_se)
        logger.info("limit_selfcheck %s: %g vs %g, W1 %.5f (se %.5f)", knob, values[0], values[1], w1, mc_se)
        rows.append((knob, values[0], values[1], w1, mc_se))

    frame = _frame(cfg.experiment, rows, ["knob"])
    return RunResult(cfg.experiment, frame, _summary(cfg, h_passed=passed["h"], M_passed=passed["M"]))


def run_conditional_iid(cfg: ExperimentConfig) -> RunResult:
    report = conditional_iid_check(
        cfg.model,
        cfg.M,
        cfg.T,
        cfg.h,
        cfg.stable,
        cfg.seeds.spawn("conditional_iid", 0),
        cfg.replicas,
        cfg.test_function,
        n_resamples=cfg.bootstrap_resamples,
    )
    rows = [
        ("conditional", report.conditional_corr, report.conditional_se, report.replicas),
        ("unconditional", report.unconditional_corr, report.unconditional_se, report.replicas),
    ]
    frame = _frame(cfg.experiment, rows, ["mode"])
    summary = _summary(cfg, conditionally_independent=report.conditionally_independent())
    return RunResult(cfg.experiment, frame, summary)


RUNNERS = {
    "stable_clt": run_stable_clt,
    "time_change_poisson": run_time_change_poisson,
    "collateral_limit": run_collateral_limit,
    "chaos_sweep": run_chaos_sweep,
    "common_noise": run_common_noise,
    "limit_selfcheck": run_limit_selfcheck,
    "conditional_iid": run_conditional_iid,
}


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    logger.info("running %s (seed %d, %d replicas, %d threads)", cfg.experiment, cfg.root_seed, cfg.replicas, cfg.threads)
    return RUNNERS[cfg.experiment](cfg)


def execute_run(run, cfg: ExperimentConfig, out_dir) -> RunResult:
    """Run one experiment, export it and keep the ledger row in sync."""
    from .exports import export_result

    run.status = "running"
    run.save(update_fields=["status"])
    try:
        result = run_experiment(cfg)
        paths = export_result(result, out_dir)
    except Exception as e:
        run.status = "failed"
        run.error = f"{type(e).__name__}: {e}"
        run.finished_at = timezone.now()
        run.save(update_fields=["status", "error", "finished_at"])
        logger.error("%s run %s failed: %s", cfg.experiment, run.pk, e)
        raise

    run.status = "completed"
    run.output_path = str(paths[0])
    run.summary = result.summary
    run.finished_at = timezone.now()
    run.save(update_fields=["status", "output_path", "summary", "finished_at"])
    return result
