"""Coefficient families (b, psi, f) and initial laws of the particle systems.

Every descriptor records a sup-norm bound and a Lipschitz constant so that the
assumptions on the coefficients can be checked before a run. Drifts and main jumps are
evaluated as ``descriptor(x, atoms)`` where ``atoms`` are the positions carrying the
empirical measure; rates are evaluated as ``rate(x)``.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from measures.utils import empirical_mean
from noise.samplers import validate_alpha

STATISTICS = {"tanh": np.tanh, "arctan": np.arctan}


@dataclass(frozen=True)
class ZeroDrift:
    kind = "zero"
    bound = 0.0
    lipschitz = 0.0
    cost = "O(1)"
    is_zero = True

    def __call__(self, x, atoms):
        return np.zeros_like(x)


@dataclass(frozen=True)
class ConstantDrift:
    value: float
    kind = "constant"
    cost = "O(1)"
    lipschitz = 0.0

    @property
    def bound(self):
        return abs(self.value)

    @property
    def is_zero(self):
        return self.value == 0.0

    def __call__(self, x, atoms):
        return np.full_like(x, self.value)


@dataclass(frozen=True)
class MomentDrift:
    """b(x, m) = beta * tanh(m(phi) - x) with a bounded 1-Lipschitz statistic phi."""

    beta: float
    statistic: str = "arctan"
    kind = "moment"
    cost = "O(N)"
    is_zero = False

    def __post_init__(self):
        if self.statistic not in STATISTICS:
            raise ValueError(f"statistic must be one of {sorted(STATISTICS)}, got {self.statistic!r}")

    @property
    def bound(self):
        return abs(self.beta)

    @property
    def lipschitz(self):
        return 2.0 * abs(self.beta)

    def __call__(self, x, atoms):
        moment = empirical_mean(STATISTICS[self.statistic](atoms))
        return self.beta * np.tanh(moment - x)


@dataclass(frozen=True)
class ConvolutionDrift:
    """b(x, m) = int B(x - y) m(dy) with B a scaled tanh or a Gaussian bump."""

    kernel: str
    strength: float
    width: float = 1.0
    kind = "convolution"
    cost = "O(N^2)"
    is_zero = False

    def __post_init__(self):
        if self.kernel not in ("tanh", "gaussian"):
            raise ValueError(f"kernel must be 'tanh' or 'gaussian', got {self.kernel!r}")
        if self.width <= 0:
            raise ValueError(f"kernel width must be positive, got {self.width}")

    @property
    def bound(self):
        return abs(self.strength)

    @property
    def lipschitz(self):
        if self.kernel == "tanh":
            return abs(self.strength) / self.width
        return abs(self.strength) / (self.width * math.sqrt(math.e))

    def kernel_values(self, z):
        if self.kernel == "tanh":
            return self.strength * np.tanh(z / self.width)
        return self.strength * np.exp(-0.5 * (z / self.width) ** 2)

    def __call__(self, x, atoms):
        # atom 축을 정렬해 두면 행마다 합산 순서가 입자 번호와 무관해짐
        atoms = np.sort(np.asarray(atoms, dtype=float))
        return self.kernel_values(np.asarray(x, dtype=float)[..., None] - atoms).mean(axis=-1)


@dataclass(frozen=True)
class ZeroJump:
    kind = "zero"
    bound = 0.0
    lipschitz = 0.0
    is_zero = True

    def __call__(self, x, atoms):
        return np.zeros_like(x)


@dataclass(frozen=True)
class ConstantJump:
    delta: float
    kind = "constant"
    lipschitz = 0.0

    @property
    def bound(self):
        return abs(self.delta)

    @property
    def is_zero(self):
        return self.delta == 0.0

    def __call__(self, x, atoms):
        return np.full_like(x, self.delta)


@dataclass(frozen=True)
class TanhJump:
    """psi(x) = -kappa * tanh(x), a reset towards the origin after a main jump."""

    kappa: float
    kind = "tanh"
    is_zero = False

    @property
    def bound(self):
        return abs(self.kappa)

    @property
    def lipschitz(self):
        return abs(self.kappa)

    def __call__(self, x, atoms):
        return -self.kappa * np.tanh(x)


@dataclass(frozen=True)
class ConstantRate:
    value: float
    kind = "constant"
    lipschitz = 0.0
    is_constant = True

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError(f"a constant rate must be positive, got {self.value}")

    @property
    def lower(self):
        return self.value

    @property
    def upper(self):
        return self.value

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value)

    def mean(self, x):
        return self.value


@dataclass(frozen=True)
class TanhRate:
    """f(x) = c0 + c1 * (1 + tanh(x)) / 2, with values in [c0, c0 + c1]."""

    c0: float
    c1: float
    kind = "tanh"
    is_constant = False

    def __post_init__(self):
        if self.c0 <= 0:
            raise ValueError(f"c0 must be positive so that the rate is bounded below, got {self.c0}")
        if self.c1 < 0:
            raise ValueError(f"c1 must be non-negative, got {self.c1}")

    @property
    def lower(self):
        return self.c0

    @property
    def upper(self):
        return self.c0 + self.c1

    @property
    def lipschitz(self):
        return self.c1 / 2.0

    def __call__(self, x):
        return self.c0 + self.c1 * 0.5 * (1.0 + np.tanh(x))

    def mean(self, x):
        return min(max(empirical_mean(self(x)), self.lower), self.upper)


@dataclass(frozen=True)
class PointMass:
    at: float = 0.0
    kind = "point"

    def sample(self, stream, size):
        return np.full(size, float(self.at))


@dataclass(frozen=True)
class UniformLaw:
    low: float
    high: float
    kind = "uniform"

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"uniform law needs low < high, got [{self.low}, {self.high}]")

    def sample(self, stream, size):
        return stream.uniform(self.low, self.high, size)


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian restricted to mean +- width * std, a bounded-support stand-in for a normal law."""

    mean: float = 0.0
    std: float = 1.0
    width: float = 3.0
    kind = "truncated_gaussian"

    def __post_init__(self):
        if self.std <= 0 or self.width <= 0:
            raise ValueError("truncated Gaussian needs positive std and width")

    def sample(self, stream, size):
        return stats.truncnorm.rvs(-self.width, self.width, loc=self.mean, scale=self.std, size=size, random_state=stream)


DRIFTS = {"zero": ZeroDrift, "constant": ConstantDrift, "moment": MomentDrift, "convolution": ConvolutionDrift}
MAIN_JUMPS = {"zero": ZeroJump, "constant": ConstantJump, "tanh": TanhJump}
RATES = {"constant": ConstantRate, "tanh": TanhRate}
INITIAL_LAWS = {"point": PointMass, "uniform": UniformLaw, "truncated_gaussian": TruncatedGaussian}


def describe(descriptor) -> dict:
    return {"kind": descriptor.kind, **asdict(descriptor)}


@dataclass(frozen=True)
class ModelSpec:
    alpha: float
    drift: object = field(default_factory=ZeroDrift)
    main_jump: object = field(default_factory=ZeroJump)
    rate: object = field(default_factory=lambda: ConstantRate(1.0))
    initial_law: object = field(default_factory=PointMass)

    def __post_init__(self):
        validate_alpha(self.alpha)
        # alpha > 1이면 main jump가 존재하지 않는 모델만 다룸
        if self.alpha > 1.0 and not self.main_jump.is_zero:
            raise ValueError("main jumps must vanish (psi = 0) when alpha > 1")

    @property
    def f_lower(self):
        return self.rate.lower

    @property
    def f_upper(self):
        return self.rate.upper

    @property
    def is_pure_collateral(self):
        """b = 0, psi = 0 and f constant: only the collateral sum moves the particles."""
        return self.drift.is_zero and self.main_jump.is_zero and self.rate.is_constant

    def check_rate_bounds(self, stream, size=10_000):
        points = np.concatenate([stream.standard_cauchy(size), [0.0, -1e6, 1e6]])
        values = self.rate(points)
        if np.any(values < self.f_lower) or np.any(values > self.f_upper):
            raise ValueError(f"rate leaves [{self.f_lower}, {self.f_upper}] on sampled points")
        return True

    def describe(self) -> dict:
        return {
            "alpha": self.alpha,
            "drift": describe(self.drift),
            "main_jump": describe(self.main_jump),
            "rate": describe(self.rate),
            "initial_law": describe(self.initial_law),
        }
