import logging
import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .coefficients import ConstantRate, ModelSpec
from noise.samplers import DoaLaw, sample_doa
from noise.streams import SeedTree
from stablechaos.exceptions import NumericalAbort

logger = logging.getLogger(__name__)

DEFAULT_DRIFT_STEP = 1e-2


@dataclass(frozen=True)
class EventLog:
    # 기각된 후보는 u가 NaN
    time: np.ndarray
    particle: np.ndarray
    accepted: np.ndarray
    u: np.ndarray
    main_jump: np.ndarray

    @classmethod
    def from_columns(cls, time, particle, accepted, u, main_jump):
        return cls(
            np.asarray(time, dtype=float),
            np.asarray(particle, dtype=np.int64),
            np.asarray(accepted, dtype=bool),
            np.asarray(u, dtype=float),
            np.asarray(main_jump, dtype=float),
        )

    def __len__(self):
        return self.time.size

    @property
    def n_accepted(self) -> int:
        return int(self.accepted.sum())

    def accepted_events(self) -> "EventLog":
        mask = self.accepted
        return EventLog(self.time[mask], self.particle[mask], self.accepted[mask], self.u[mask], self.main_jump[mask])


@dataclass(frozen=True)
class TrajectoryBundle:
    # states[k], drift[k]: grid[k]에서의 위치와 누적 drift 변위 (grid[k]의 이벤트는 이미 반영)
    spec: ModelSpec
    N: int
    T: float
    grid: np.ndarray
    states: np.ndarray
    drift: np.ndarray
    initial: np.ndarray
    events: EventLog
    clock_knots: np.ndarray
    clock_deficit: np.ndarray
    scale: float
    snapshot: bool = False

    @property
    def f_upper(self):
        return self.spec.f_upper

    def state_at(self, t: float) -> np.ndarray:
        if t > self.T or t < 0:
            raise ValueError(f"t must lie in [0, {self.T}], got {t}")
        index = int(np.searchsorted(self.grid, t, side="right")) - 1
        if index < 0:
            raise ValueError(f"no grid point at or before t={t}")
        return self.states[index]


@dataclass(frozen=True)
class TimeChange:
    # A(t) = int_0^t mu_s(f) ds, knot 사이에서는 선형
    knots: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        values = np.interp(t, self.knots, self.values)
        return float(values) if np.ndim(values) == 0 else values

    def inverse(self, s):
        # A가 s에 처음 도달하는 시각
        if np.any(np.asarray(s) > self.values[-1]):
            raise ValueError(f"A only reaches {self.values[-1]} on the simulated horizon")
        times = np.interp(s, self.values, self.knots)
        return float(times) if np.ndim(times) == 0 else times

    def within_bounds(self, lower: float, upper: float, rtol: float = 1e-12) -> bool:
        # 구간별 증가량이 범위 안에 있으면 임의의 두 knot 사이에서도 성립 (부동소수점 오차만 허용)
        slack = rtol * max(1.0, upper * float(self.knots[-1]))
        gaps = np.diff(self.knots)
        increments = np.diff(self.values)
        if self.values[0] != 0.0:
            return False
        return bool(np.all(increments >= lower * gaps - slack) and np.all(increments <= upper * gaps + slack))


@dataclass(frozen=True)
class Decomposition:
    # X_t = X_0 + B_t + I_t + J_t - E_t
    grid: np.ndarray
    X: np.ndarray
    X0: float
    B: np.ndarray
    I: np.ndarray
    J: np.ndarray
    E: np.ndarray

    def residual(self) -> float:
        return float(np.max(np.abs(self.X - self.X0 - self.B - self.I - self.J + self.E)))


@dataclass(frozen=True)
class TimeChangedWalk:
    # 시계 N A(t)로 바꾼 collateral 합은 단위 rate compound Poisson
    times: np.ndarray
    marks: np.ndarray
    clock: TimeChange
    N: int
    scale: float

    def __call__(self, s):
        counts = np.searchsorted(self.times, s, side="right")
        cumulative = np.concatenate([[0.0], np.cumsum(self.marks)])
        return cumulative[counts]

    def collateral_sum(self, t):
        # J^N_t = N^(-1/alpha) * (s_k <= N A(t)인 mark의 합)
        return self.scale * self(self.N * np.asarray(self.clock(t)))


class _FiniteSystem:
    def __init__(self, spec, N, T, doa, seeds, output_times, initial, index_map, collateral_scale, drift_step):
        self.spec = spec
        self.N = N
        self.T = T
        self.doa = doa
        self.drift_step = drift_step
        self.rate_bound = spec.f_upper
        self.scale = collateral_scale * N ** (-1.0 / spec.alpha)

        self.events_stream = seeds.stream("events", 0)
        self.doa_stream = seeds.stream("doa", 0)
        if initial is None:
            initial = spec.initial_law.sample(seeds.stream("initial", 0), N)
        self.X = np.array(initial, dtype=float)
        self.initial_positions = self.X.copy()
        self.B = np.zeros(N)
        self.index_map = index_map
        self.t = 0.0

        self.deficit = 0.0
        self.knots = [0.0]
        self.deficits = [0.0]
        self.event_columns = ([], [], [], [], [])
        self.substeps = 0

        self.snapshot = output_times is not None
        self.pending = list(output_times) if self.snapshot else []
        self.grid, self.states, self.drifts = [], [], []
        if self.snapshot:
            self._take_snapshots(0.0)
        else:
            self._record(0.0)

    def _record(self, t):
        self.grid.append(t)
        self.states.append(self.X.copy())
        self.drifts.append(self.B.copy())

    def _take_snapshots(self, until):
        while self.pending and self.pending[0] <= until:
            self._record(self.pending.pop(0))

    def _check_finite(self, where):
        if not np.all(np.isfinite(self.X)):
            logger.error("non-finite particle state at event %d (t=%g, N=%d)", where, self.t, self.N)
            raise NumericalAbort(f"non-finite particle state at event {where}", position=where)

    def _rk4(self, h):
        drift = self.spec.drift
        x = self.X
        k1 = drift(x, x)
        y = x + 0.5 * h * k1
        k2 = drift(y, y)
        y = x + 0.5 * h * k2
        k3 = drift(y, y)
        y = x + h * k3
        k4 = drift(y, y)
        return h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def _advance(self, t_to):
        gap = t_to - self.t
        if gap <= 0:
            return
        moving = not self.spec.drift.is_zero
        steps = max(1, math.ceil(gap / self.drift_step)) if moving else 1
        bounds = self.t + gap * np.arange(1, steps + 1) / steps
        bounds[-1] = t_to
        stops = [t for t in self.pending if self.t < t < t_to]
        if stops:
            bounds = np.union1d(bounds, stops)

        rate = self.spec.rate
        for end in bounds:
            h = end - self.t
            before = rate.mean(self.X)
            if moving:
                increment = self._rk4(h)
                self.X += increment
                self.B += increment
                self.substeps += 1
            after = rate.mean(self.X) if moving else before
            # A = ||f|| t - deficit: f가 상수이면 deficit이 정확히 0으로 유지됨
            self.deficit += 0.5 * ((self.rate_bound - before) + (self.rate_bound - after)) * h
            self.t = float(end)
            self.knots.append(self.t)
            self.deficits.append(self.deficit)
            if end < t_to:
                if self.snapshot:
                    self._take_snapshots(self.t)
                else:
                    self._record(self.t)
        self._check_finite(len(self.event_columns[0]))

    def _candidate(self, t_next):
        times, particles, accepted, draws, main_jumps = self.event_columns
        drawn = int(self.events_stream.integers(self.N))
        i = int(self.index_map[drawn]) if self.index_map is not None else drawn
        z = self.events_stream.random()
        xi = self.X[i]
        accept = z <= float(self.spec.rate(xi)) / self.rate_bound

        times.append(t_next)
        particles.append(i)
        accepted.append(accept)
        if not accept:
            draws.append(math.nan)
            main_jumps.append(0.0)
            return

        u = sample_doa(self.doa, self.doa_stream)
        psi = float(self.spec.main_jump(self.X[i : i + 1], self.X)[0])
        collateral = u * self.scale
        # 모든 j != i에 같은 값을 더한 뒤 i만 점프 전 위치 + psi로 복원
        self.X += collateral
        self.X[i] = xi + psi
        draws.append(u)
        main_jumps.append(psi)

    def run(self) -> TrajectoryBundle:
        candidate_rate = self.N * self.rate_bound
        while True:
            t_next = self.t + self.events_stream.exponential(1.0 / candidate_rate)
            if t_next > self.T:
                break
            self._advance(t_next)
            self.t = t_next
            self._candidate(t_next)
            self._check_finite(len(self.event_columns[0]) - 1)
            if self.snapshot:
                self._take_snapshots(t_next)
            else:
                self._record(t_next)

        self._advance(self.T)
        if self.snapshot:
            self._take_snapshots(self.T)
        elif self.grid[-1] < self.T:
            self._record(self.T)

        events = EventLog.from_columns(*self.event_columns)
        logger.debug(
            "finite system N=%d T=%g: %d candidates, %d accepted, %d drift substeps",
            self.N,
            self.T,
            len(events),
            events.n_accepted,
            self.substeps,
        )
        return TrajectoryBundle(
            spec=self.spec,
            N=self.N,
            T=self.T,
            grid=np.array(self.grid),
            states=np.array(self.states).reshape(len(self.grid), self.N),
            drift=np.array(self.drifts).reshape(len(self.grid), self.N),
            initial=self.initial_positions,
            events=events,
            clock_knots=np.array(self.knots),
            clock_deficit=np.array(self.deficits),
            scale=self.scale,
            snapshot=self.snapshot,
        )


def _validate_times(times, T, name="output_times"):
    times = np.asarray(times, dtype=float).ravel()
    if times.size == 0:
        raise ValueError(f"{name} must not be empty")
    if np.any(np.diff(times) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if times[0] < 0 or times[-1] > T:
        raise ValueError(f"{name} must lie in [0, {T}]")
    return times


def simulate_finite(
    spec: ModelSpec,
    N: int,
    T: float,
    doa: DoaLaw,
    seeds: SeedTree,
    *,
    output_times=None,
    initial=None,
    index_map=None,
    collateral_scale: float = 1.0,
    drift_step: float = DEFAULT_DRIFT_STEP,
) -> TrajectoryBundle:
    # 후보는 rate N ||f||로 도착해 확률 f(X_i) / ||f||로 채택, 후보 사이의 drift는 RK4
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    if doa.alpha != spec.alpha:
        raise ValueError(f"alpha mismatch: model has {spec.alpha}, collateral law has {doa.alpha}")
    if drift_step <= 0:
        raise ValueError(f"drift_step must be positive, got {drift_step}")
    if collateral_scale < 0:
        raise ValueError(f"collateral_scale must be non-negative, got {collateral_scale}")
    if output_times is not None:
        output_times = _validate_times(output_times, T)
    if initial is not None:
        initial = np.asarray(initial, dtype=float)
        if initial.shape != (N,) or not np.all(np.isfinite(initial)):
            raise ValueError(f"initial must be {N} finite positions")
    if index_map is not None:
        index_map = np.asarray(index_map, dtype=np.int64)
        if not np.array_equal(np.sort(index_map), np.arange(N)):
            raise ValueError("index_map must be a permutation of range(N)")

    return _FiniteSystem(spec, N, T, doa, seeds, output_times, initial, index_map, collateral_scale, drift_step).run()


def simulate_collateral_sum(N: int, T: float, rate, doa: DoaLaw, seeds: SeedTree, times) -> np.ndarray:
    # f가 상수이면 모든 후보가 채택되므로 구간별 이벤트 수는 Poisson(N c dt)
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    if T < 0:
        raise ValueError(f"T must be non-negative, got {T}")
    if isinstance(rate, ConstantRate):
        rate = rate.value
    elif not getattr(rate, "is_constant", True):
        raise ValueError("the collateral fast path needs a constant rate")
    rate = float(rate)
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    times = _validate_times(times, T, name="times")

    widths = np.diff(np.concatenate([[0.0], times]))
    counts = seeds.stream("events", 0).poisson(N * rate * widths)
    draws = sample_doa(doa, seeds.stream("doa", 0), size=int(counts.sum()))
    owners = np.repeat(np.arange(times.size), counts)
    increments = np.bincount(owners, weights=draws, minlength=times.size)
    logger.debug("collateral fast path N=%d: %d events", N, int(counts.sum()))
    return N ** (-1.0 / doa.alpha) * np.cumsum(increments)


def cumulated_intensity(bundle: TrajectoryBundle) -> TimeChange:
    # 사다리꼴 적분으로 쌓은 deficit을 빼서 A(t)를 구성
    values = bundle.f_upper * bundle.clock_knots - bundle.clock_deficit
    return TimeChange(bundle.clock_knots, values)


def decompose_trajectory(bundle: TrajectoryBundle, i: int) -> Decomposition:
    if not 0 <= i < bundle.N:
        raise ValueError(f"particle index must lie in [0, {bundle.N}), got {i}")
    events = bundle.events.accepted_events()
    own = events.particle == i
    collateral = events.u * bundle.scale
    seen = np.searchsorted(events.time, bundle.grid, side="right")

    def running(values):
        return np.concatenate([[0.0], np.cumsum(values)])[seen]

    return Decomposition(
        grid=bundle.grid,
        X=bundle.states[:, i],
        X0=float(bundle.initial[i]),
        B=bundle.drift[:, i],
        I=running(np.where(own, events.main_jump, 0.0)),
        J=running(collateral),
        E=running(np.where(own, collateral, 0.0)),
    )


def transformed_event_times(bundle: TrajectoryBundle) -> np.ndarray:
    times = bundle.events.accepted_events().time
    if times.size == 0:
        return np.empty(0)
    return bundle.N * np.asarray(cumulated_intensity(bundle)(times))


def time_changed_walk(bundle: TrajectoryBundle) -> TimeChangedWalk:
    return TimeChangedWalk(
        times=transformed_event_times(bundle),
        marks=bundle.events.accepted_events().u,
        clock=cumulated_intensity(bundle),
        N=bundle.N,
        scale=bundle.scale,
    )


def export_events(bundle: TrajectoryBundle) -> pd.DataFrame:
    events = bundle.events
    return pd.DataFrame(
        {
            "time": events.time,
            "particle": events.particle,
            "accepted": events.accepted.astype(int),
            "u": events.u,
            "main_jump": events.main_jump,
        }
    )


def export_states(bundle: TrajectoryBundle, times=None) -> pd.DataFrame:
    if times is None:
        times, states = bundle.grid, bundle.states
    else:
        times = np.asarray(times, dtype=float)
        states = np.array([bundle.state_at(t) for t in times]).reshape(times.size, bundle.N)
    return pd.DataFrame(
        {
            "time": np.repeat(times, bundle.N),
            "particle": np.tile(np.arange(bundle.N), len(times)),
            "x": states.ravel(),
        }
    )
