import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from measures.utils import Sample, bootstrap_se, resolve_function
from noise.samplers import StableParams, sample_stable_increment
from noise.streams import SeedTree
from particles.coefficients import ModelSpec
from stablechaos.exceptions import NumericalAbort

logger = logging.getLogger(__name__)


def _step_count(T, h):
    # T/h가 정수에 아주 가까우면 부동소수점 오차로 한 칸이 더 생기지 않도록 반올림
    return max(1, math.ceil(round(T / h, 9)))


@dataclass(frozen=True)
class StablePathGrid:
    # 격자 0, h, 2h, ..., T 위의 S^alpha 증분 (마지막 구간은 h보다 짧을 수 있음)
    h: float
    T: float
    increments: np.ndarray

    def __post_init__(self):
        if self.increments.size != _step_count(self.T, self.h):
            raise ValueError(f"expected {_step_count(self.T, self.h)} increments, got {self.increments.size}")

    @property
    def times(self) -> np.ndarray:
        return np.minimum(np.arange(self.increments.size + 1) * self.h, self.T)

    @property
    def values(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])

    def coarsen(self, k: int) -> "StablePathGrid":
        # 같은 증분을 k개씩 묶어 간격 k h의 경로를 만듦
        if k < 1:
            raise ValueError(f"coarsening factor must be at least 1, got {k}")
        starts = np.arange(0, self.increments.size, k)
        return StablePathGrid(self.h * k, self.T, np.add.reduceat(self.increments, starts))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "S": self.values})


@dataclass(frozen=True)
class LimitBundle:
    # common, rate_means는 stable path 격자의 왼쪽 끝점마다 누적 공통항과 mu_t(f)를 저장
    spec: ModelSpec
    M: int
    path: StablePathGrid
    grid: np.ndarray
    states: np.ndarray
    initial: np.ndarray
    common: np.ndarray
    rate_means: np.ndarray
    output_times: np.ndarray | None = None

    @property
    def T(self):
        return self.path.T


@dataclass(frozen=True)
class CorrelationReport:
    conditional_corr: float
    conditional_se: float
    unconditional_corr: float
    unconditional_se: float
    replicas: int

    def conditionally_independent(self, k=3.0) -> bool:
        # 모든 replica에서 값이 같으면 상관계수와 표준오차가 모두 0
        return abs(self.conditional_corr) <= k * self.conditional_se


def sample_stable_path(params: StableParams, T: float, h: float, stream: np.random.Generator) -> StablePathGrid:
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    if T <= 0:
        raise ValueError(f"T must be positive, got {T}")
    n = _step_count(T, h)
    steps = np.diff(np.minimum(np.arange(n + 1) * h, T))
    # 자기상사성: S_dt 는 dt^(1/alpha) S_1 과 같은 분포
    increments = sample_stable_increment(params, 1.0, stream, size=n) * steps ** (1.0 / params.alpha)
    return StablePathGrid(h, T, increments)


def _rk4_frozen(drift, x, atoms, h):
    k1 = drift(x, atoms)
    k2 = drift(x + 0.5 * h * k1, atoms)
    k3 = drift(x + 0.5 * h * k2, atoms)
    k4 = drift(x + h * k3, atoms)
    return h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_limit(
    spec: ModelSpec,
    M: int,
    T: float,
    h: float,
    params: StableParams,
    seeds: SeedTree,
    *,
    path: StablePathGrid | None = None,
    initial=None,
    particle_keys=None,
    output_times=None,
) -> LimitBundle:
    # 각 step은 왼쪽 끝점의 empirical measure를 고정한 채 RK4 drift, 확률 1 - exp(-f h)의 main jump,
    # 공통 증분 mu(f)^(1/alpha) dS 순서로 적용. 입자 i는 stream ("particle", key_i)를 사용
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    if h >= T:
        raise ValueError(f"h must be smaller than T, got h={h}, T={T}")
    if params.alpha != spec.alpha:
        raise ValueError(f"alpha mismatch: model has {spec.alpha}, stable path has {params.alpha}")
    if spec.alpha > 1.0 and not spec.main_jump.is_zero:
        raise ValueError("main jumps must vanish (psi = 0) when alpha > 1")

    if path is None:
        path = sample_stable_path(params, T, h, seeds.stream("stable_path", 0))
    elif path.h != h or path.T != T:
        raise ValueError(f"path grid (h={path.h}, T={path.T}) does not match (h={h}, T={T})")
    times = path.times
    n = path.increments.size

    if particle_keys is None:
        particle_keys = range(M)
    particle_keys = list(particle_keys)
    if len(particle_keys) != M:
        raise ValueError(f"expected {M} particle keys, got {len(particle_keys)}")
    streams = [seeds.stream("particle", key) for key in particle_keys]
    if initial is None:
        X = np.array([spec.initial_law.sample(stream, 1)[0] for stream in streams], dtype=float)
    else:
        X = np.array(initial, dtype=float)
        if X.shape != (M,) or not np.all(np.isfinite(X)):
            raise ValueError(f"initial must be {M} finite positions")
    jumping = not spec.main_jump.is_zero
    uniforms = np.array([stream.random(n) for stream in streams]) if jumping else None

    if output_times is None:
        recorded = np.arange(n + 1)
    else:
        output_times = np.asarray(output_times, dtype=float)
        if np.any(output_times < 0) or np.any(output_times > T):
            raise ValueError(f"output_times must lie in [0, {T}]")
        recorded = np.searchsorted(times, output_times, side="right") - 1
    slots = {}
    for slot, index in enumerate(recorded):
        slots.setdefault(int(index), []).append(slot)
    states = np.empty((recorded.size, M))

    def record(index):
        for slot in slots.get(index, ()):
            states[slot] = X

    initial_positions = X.copy()
    common = np.zeros(n + 1)
    rate_means = np.empty(n)
    moving = not spec.drift.is_zero
    power = 1.0 / spec.alpha
    record(0)
    for k in range(n):
        dt = times[k + 1] - times[k]
        atoms = X.copy()
        rate_means[k] = spec.rate.mean(atoms)
        # 모든 입자에 같은 값을 더하는 공통 잡음 항 (왼쪽 끝점에서 평가)
        shared = rate_means[k] ** power * path.increments[k]
        step = np.zeros(M)
        if moving:
            step += _rk4_frozen(spec.drift, atoms, atoms, dt)
        if jumping:
            fires = uniforms[:, k] < -np.expm1(-spec.rate(atoms) * dt)
            step += np.where(fires, spec.main_jump(atoms, atoms), 0.0)
        X = atoms + step + shared
        common[k + 1] = common[k] + shared
        if not np.all(np.isfinite(X)):
            logger.error("non-finite limit state at step %d (t=%g, M=%d)", k, times[k + 1], M)
            raise NumericalAbort(f"non-finite limit state at step {k}", position=k)
        record(k + 1)

    logger.debug("limit system M=%d: %d steps of h=%g", M, n, h)
    return LimitBundle(
        spec=spec,
        M=M,
        path=path,
        grid=times[recorded],
        states=states,
        initial=initial_positions,
        common=common,
        rate_means=rate_means,
        output_times=output_times,
    )


def directing_measure_at(bundle: LimitBundle, t: float) -> Sample:
    if t > bundle.T:
        raise ValueError(f"t={t} lies beyond the horizon T={bundle.T}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    index = int(np.searchsorted(bundle.grid, t, side="right")) - 1
    if index < 0:
        raise ValueError(f"no recorded state at or before t={t}")
    return Sample(bundle.states[index])


def _pair_values(bundle, g):
    final = g(bundle.states[-1][:2])
    return final[0], final[1]


def conditional_iid_check(
    spec: ModelSpec,
    M: int,
    T: float,
    h: float,
    params: StableParams,
    seeds: SeedTree,
    R: int,
    g="arctan",
    n_resamples: int = 200,
) -> CorrelationReport:
    # stable path를 고정하면 입자들이 조건부 i.i.d.이므로 첫 번째 상관계수는 0에 가까워야 함
    if R < 2:
        raise ValueError(f"at least two replicas are needed, got {R}")
    if M < 2:
        raise ValueError(f"two particles are needed to correlate, got M={M}")
    g = resolve_function(g)
    frozen = sample_stable_path(params, T, h, seeds.stream("stable_path", 0))

    conditional, unconditional = [], []
    for r in range(R):
        bundle = simulate_limit(spec, M, T, h, params, seeds.spawn("conditional", r), path=frozen, output_times=[T])
        conditional.append(_pair_values(bundle, g))
        bundle = simulate_limit(spec, M, T, h, params, seeds.spawn("unconditional", r), output_times=[T])
        unconditional.append(_pair_values(bundle, g))

    def correlation(x, y):
        # 한쪽이 상수이면 공분산이 0이므로 상관계수도 0으로 둠
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            return 0.0
        return stats.pearsonr(x, y).statistic

    rng = seeds.stream("bootstrap", 0)
    results = []
    for values in (np.array(conditional), np.array(unconditional)):
        x, y = values[:, 0], values[:, 1]
        corr = float(correlation(x, y))
        se = bootstrap_se(correlation, (x, y), rng, n_resamples=n_resamples, paired=True)
        results.extend([corr, se])
    report = CorrelationReport(*results, replicas=R)
    logger.info(
        "conditional i.i.d. check R=%d: conditional corr %.4f (se %.4f), unconditional corr %.4f (se %.4f)",
        R,
        report.conditional_corr,
        report.conditional_se,
        report.unconditional_corr,
        report.unconditional_se,
    )
    return report
