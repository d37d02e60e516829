import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

logger = logging.getLogger(__name__)


def validate_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 2.0) or alpha == 1.0:
        raise ValueError(f"alpha must lie in (0,1) or (1,2), got {alpha}")
    return alpha


@dataclass(frozen=True)
class StableParams:
    # Levy 밀도 a_plus / z^(alpha+1) (z > 0), a_minus / |z|^(alpha+1) (z < 0). alpha > 1이면 보정된(중심화된) 분포
    alpha: float
    a_plus: float
    a_minus: float

    def __post_init__(self):
        validate_alpha(self.alpha)
        if self.a_plus < 0 or self.a_minus < 0:
            raise ValueError(f"Levy weights must be non-negative, got a_plus={self.a_plus}, a_minus={self.a_minus}")
        if self.a_plus + self.a_minus <= 0:
            raise ValueError("a_plus + a_minus must be strictly positive")

    @property
    def scale(self) -> float:
        # sigma^alpha = -(a+ + a-) Gamma(-alpha) cos(pi alpha / 2), 두 구간(alpha<1, alpha>1) 모두 양수
        total = self.a_plus + self.a_minus
        return (-total * gamma(-self.alpha) * math.cos(math.pi * self.alpha / 2.0)) ** (1.0 / self.alpha)

    @property
    def skewness(self) -> float:
        return (self.a_plus - self.a_minus) / (self.a_plus + self.a_minus)

    def levy_tail(self, eps: float) -> float:
        # [-eps, eps] 밖의 Levy measure 질량
        return (self.a_plus + self.a_minus) * eps ** (-self.alpha) / self.alpha


class DoaKind(str, enum.Enum):
    SYMMETRIC_PARETO = "symmetric_pareto"
    ASYMMETRIC_PARETO = "asymmetric_pareto"


@dataclass(frozen=True)
class DoaLaw:
    # P(|U| > x) = (x / x0)^(-alpha), 부호는 확률 p_plus로 양수. alpha > 1이면 center_shift만큼 이동해 평균 0
    kind: DoaKind
    alpha: float
    p_plus: float = 0.5
    x0: float = 1.0
    center_shift: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", DoaKind(self.kind))
        validate_alpha(self.alpha)
        if not 0.0 <= self.p_plus <= 1.0:
            raise ValueError(f"p_plus must lie in [0,1], got {self.p_plus}")
        if self.x0 <= 0:
            raise ValueError(f"x0 must be positive, got {self.x0}")
        if self.kind is DoaKind.SYMMETRIC_PARETO and self.p_plus != 0.5:
            raise ValueError("a symmetric Pareto law has p_plus = 0.5")
        shift = 0.0
        if self.alpha > 1.0:
            # 양의 Pareto(alpha, x0)의 평균은 alpha x0 / (alpha - 1)
            shift = (2.0 * self.p_plus - 1.0) * self.alpha * self.x0 / (self.alpha - 1.0)
        object.__setattr__(self, "center_shift", shift)

    @classmethod
    def symmetric(cls, alpha, x0=1.0):
        return cls(DoaKind.SYMMETRIC_PARETO, alpha, 0.5, x0)

    @classmethod
    def asymmetric(cls, alpha, p_plus, x0=1.0):
        return cls(DoaKind.ASYMMETRIC_PARETO, alpha, p_plus, x0)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= self.x0, (np.maximum(x, self.x0) / self.x0) ** (-self.alpha), 1.0)


def sample_stable_increment(params: StableParams, dt: float, stream: np.random.Generator, size=None):
    # Chambers-Mallows-Stuck 변환. Levy 가중치를 S_alpha(sigma, beta, 0)로 옮기고 자기상사성으로 dt^(1/alpha)배
    alpha = validate_alpha(params.alpha)
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    if dt == 0:
        return 0.0 if size is None else np.zeros(size)

    v = stream.uniform(-math.pi / 2.0, math.pi / 2.0, size)
    w = stream.standard_exponential(size)

    zeta = params.skewness * math.tan(math.pi * alpha / 2.0)
    shift = math.atan(zeta) / alpha
    factor = (1.0 + zeta * zeta) ** (1.0 / (2.0 * alpha))
    x = factor * np.sin(alpha * (v + shift)) / np.cos(v) ** (1.0 / alpha) * (np.cos(v - alpha * (v + shift)) / w) ** ((1.0 - alpha) / alpha)
    x = params.scale * dt ** (1.0 / alpha) * x
    return float(x) if size is None else x


def sample_doa(law: DoaLaw, stream: np.random.Generator, size=None):
    positive = stream.random(size) < law.p_plus
    # numpy의 pareto는 Lomax 분포이므로 1을 더하고 x0를 곱해 Pareto(alpha, x0)로 변환
    magnitude = law.x0 * (1.0 + stream.pareto(law.alpha, size))
    draws = np.where(positive, magnitude, -magnitude) - law.center_shift
    return float(draws) if size is None else draws


def stable_target_of(law: DoaLaw) -> StableParams:
    weight = law.alpha * law.x0**law.alpha
    return StableParams(law.alpha, law.p_plus * weight, (1.0 - law.p_plus) * weight)


def truncated_levy_sample(params: StableParams, dt: float, eps: float, stream: np.random.Generator, size: int):
    # |z| > eps인 점프만 남긴 compound Poisson 근사 (sample_stable_increment 검증용).
    # 작은 점프는 alpha < 1이면 평균으로, alpha > 1이면 같은 분산의 정규분포로 대체
    alpha = validate_alpha(params.alpha)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    counts = stream.poisson(dt * params.levy_tail(eps), size)
    total = int(counts.sum())
    p_plus = params.a_plus / (params.a_plus + params.a_minus)
    signs = np.where(stream.random(total) < p_plus, 1.0, -1.0)
    jumps = signs * eps * (1.0 + stream.pareto(alpha, total))
    owners = np.repeat(np.arange(size), counts)
    sums = np.bincount(owners, weights=jumps, minlength=size)

    drift = (params.a_plus - params.a_minus) * eps ** (1.0 - alpha) / abs(1.0 - alpha)
    if alpha > 1.0:
        drift = -drift
        variance = dt * (params.a_plus + params.a_minus) * eps ** (2.0 - alpha) / (2.0 - alpha)
        sums = sums + math.sqrt(variance) * stream.standard_normal(size)
    logger.debug("truncated Levy oracle: %d jumps over %d samples", total, size)
    return sums + dt * drift
