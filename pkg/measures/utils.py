from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment

EXACT_DQ_MAX_ATOMS = 10

TEST_FUNCTIONS: dict[str, Callable] = {
    "one": np.ones_like,
    "identity": lambda x: np.asarray(x, dtype=float),
    "tanh": np.tanh,
    "arctan": np.arctan,
}


def empirical_mean(values) -> float:
    # 합산 순서에 따라 부동소수점 결과가 달라지므로 정렬 후 합산하여 입자 순서와 무관한 값을 보장
    values = np.asarray(values, dtype=float)
    return float(np.sort(values, axis=None).sum() / values.size)


@dataclass(frozen=True)
class Sample:
    """Uniformly weighted atoms of an empirical measure on the real line."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("a sample needs at least one atom")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample atoms must be finite")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def sorted(self) -> np.ndarray:
        return np.sort(self.values)


def as_sample(data) -> Sample:
    return data if isinstance(data, Sample) else Sample(data)


def resolve_function(g) -> Callable:
    if callable(g):
        return g
    try:
        return TEST_FUNCTIONS[g]
    except KeyError:
        raise ValueError(f"unknown test function {g!r}, expected one of {sorted(TEST_FUNCTIONS)}") from None


def _equal_sizes(a: Sample, b: Sample):
    if len(a) != len(b):
        raise ValueError(f"samples must have equal atom counts, got {len(a)} and {len(b)}")


def wasserstein1_1d(a, b) -> float:
    a, b = as_sample(a), as_sample(b)
    _equal_sizes(a, b)
    # 1차원에서는 정렬된 순서끼리 짝짓는 monotone coupling이 convex cost에 대해 최적
    return float(np.mean(np.abs(a.sorted() - b.sorted())))


def d_q(x, y, q: float):
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0,1), got {q}")
    gap = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    distance = np.minimum(gap, gap**q)
    return float(distance) if distance.ndim == 0 else distance


class DqDistance(NamedTuple):
    bound: float
    exact: float | None


def wasserstein_dq(a, b, q: float, exact: bool | None = None) -> DqDistance:
    # bound는 monotone coupling 비용으로 concave cost에서는 상계일 뿐.
    # exact는 최적 assignment이며 원자 10개 이하에서만 계산
    a, b = as_sample(a), as_sample(b)
    _equal_sizes(a, b)
    bound = float(np.mean(d_q(a.sorted(), b.sorted(), q)))
    small = len(a) <= EXACT_DQ_MAX_ATOMS
    if exact and not small:
        raise ValueError(f"exact W_dq is limited to {EXACT_DQ_MAX_ATOMS} atoms, got {len(a)}")
    if exact is False or not small:
        return DqDistance(bound, None)

    # 균등 가중치의 같은 크기 표본 사이 최적 수송은 assignment 문제와 같음 (Birkhoff)
    cost = d_q(a.values[:, None], b.values[None, :], q)
    rows, cols = linear_sum_assignment(cost)
    optimum = float(cost[rows, cols].sum() / len(a))
    return DqDistance(bound, optimum)


class KsResult(NamedTuple):
    stat: float
    pvalue: float


def ks_statistic(a, b) -> KsResult:
    # b는 두 번째 표본, CDF callable, 또는 scipy.stats 분포 이름
    a = as_sample(a)
    if callable(b) or isinstance(b, str):
        result = stats.kstest(a.values, b, method="asymp")
    else:
        result = stats.ks_2samp(a.values, as_sample(b).values, method="asymp")
    return KsResult(float(result.statistic), float(result.pvalue))


def empirical_apply(sample, g) -> float:
    sample = as_sample(sample)
    return empirical_mean(resolve_function(g)(sample.values))


def equalize(a, b, rng: np.random.Generator):
    """Subsample the larger of two samples without replacement so both have the same size."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.size > b.size:
        a = rng.choice(a, size=b.size, replace=False)
    elif b.size > a.size:
        b = rng.choice(b, size=a.size, replace=False)
    return a, b


def bootstrap_se(statistic, samples, rng: np.random.Generator, n_resamples=200, paired=False) -> float:
    result = stats.bootstrap(
        tuple(np.asarray(s, dtype=float) for s in samples),
        statistic,
        n_resamples=n_resamples,
        paired=paired,
        vectorized=False,
        method="percentile",
        random_state=rng,
    )
    return float(result.standard_error)
