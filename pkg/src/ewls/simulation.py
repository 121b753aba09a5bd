"""Scenario simulation: truth signals, delayed sensors, filter runs and metrics.

A :class:`Scenario` describes a scalar truth signal (its derivatives form the
truth state ``[pos, vel, acc, ...]``), the sensors observing it and the filters
to compare.  :func:`generate` draws a measurement stream, :func:`run` feeds it
to every configured filter in arrival order and scores position RMS.

Random draws come from :mod:`ewls.rng`; sensor ``i`` uses stream ``2 i`` for
measurement noise and ``2 i + 1`` for random delays.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.interpolate import CubicSpline

from . import rng
from .batch import BatchProblem, batch_solve
from .errors import ConfigInvalid
from .kalman import (
    KalmanState,
    ProcessNoise,
    RandomWalkNoise,
    WhiteNoiseAcceleration,
    ZeroNoise,
    kf_predict,
    kf_update,
)
from .model import (
    ExponentialWeight,
    KinematicModel,
    Measurement,
    StaticModel,
    TransitionModel,
)
from .recursive import FilterState, init_uninformative, predict, update_general

#: Variance floor applied to degenerate (zero) sensor noise.
NOISE_FLOOR = 1e-12


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FieldError(ValueError):
    """Validation failure attributed to ``path`` below the model being checked."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(message)


# ---------------------------------------------------------------------------
# Truth signals
# ---------------------------------------------------------------------------


class SineSignal(_Spec):
    kind: Literal["sine"] = "sine"
    amplitude: float = 1.0
    angular_frequency: float = 2.0 * math.pi / 10.0
    phase: float = 0.0

    def derivatives(self, t: np.ndarray, count: int) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        w = self.angular_frequency
        cols = [
            self.amplitude * w**k * np.sin(w * t + self.phase + k * math.pi / 2)
            for k in range(count)
        ]
        return np.column_stack(cols)


class PolynomialSignal(_Spec):
    """Polynomial with coefficients in ascending powers of t."""

    kind: Literal["polynomial"] = "polynomial"
    coefficients: list[float] = Field(min_length=1)

    def derivatives(self, t, count):
        p = np.polynomial.Polynomial(self.coefficients)
        return np.column_stack([p.deriv(k)(np.asarray(t, float)) for k in range(count)])


class SampledSignal(_Spec):
    """User trajectory samples, interpolated by a cubic spline."""

    kind: Literal["samples"] = "samples"
    times: list[float] = Field(min_length=2)
    values: list[float] = Field(min_length=2)

    @model_validator(mode="after")
    def _check(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have the same length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("times must be strictly increasing")
        return self

    def derivatives(self, t, count):
        spline = CubicSpline(self.times, self.values)
        t = np.asarray(t, float)
        return np.column_stack(
            [spline(t, k) if k <= 3 else np.zeros_like(t) for k in range(count)]
        )


Signal = Annotated[Union[SineSignal, PolynomialSignal, SampledSignal], Field(discriminator="kind")]


# ---------------------------------------------------------------------------
# Sensors and filters
# ---------------------------------------------------------------------------


class UniformDelay(_Spec):
    kind: Literal["uniform"] = "uniform"
    low: float = Field(ge=0)
    high: float = Field(ge=0)

    @model_validator(mode="after")
    def _order(self):
        if self.high < self.low:
            raise ValueError("high must be >= low")
        return self


class SensorSpec(_Spec):
    """A sensor sampling the truth state at ``rate`` Hz.

    ``H`` is row-major with one column per truth-state component.  ``R`` may be
    a scalar variance or a matrix.
    """

    name: str
    H: list[list[float]] = Field(default_factory=lambda: [[1.0]])
    R: Union[float, list[list[float]]]
    rate: float = Field(gt=0)
    delay: Union[float, UniformDelay] = 0.0
    first_sample_time: float = 0.0

    @field_validator("delay")
    @classmethod
    def _delay_nonneg(cls, v):
        if isinstance(v, float) and v < 0:
            raise ValueError("delay must be >= 0")
        return v

    @model_validator(mode="after")
    def _shapes(self):
        p = len(self.H)
        if p == 0 or any(len(row) != len(self.H[0]) for row in self.H):
            raise FieldError("H", "must be a non-empty rectangular matrix")
        if isinstance(self.R, list) and any(len(row) != len(self.R) for row in self.R):
            raise FieldError("R", "must be a square matrix")
        R = self.R_matrix_raw()
        if R.shape != (p, p):
            raise FieldError("R", f"must be {p}x{p} to match H, got {R.shape[0]}x{R.shape[1]}")
        if not np.allclose(R, R.T):
            raise FieldError("R", "must be symmetric")
        if np.linalg.eigvalsh(R)[0] < 0:
            raise FieldError("R", "must be positive semidefinite")
        return self

    def R_matrix_raw(self) -> np.ndarray:
        if isinstance(self.R, float):
            return np.array([[self.R]])
        return np.array(self.R, dtype=float)

    def noise_covariance(self) -> np.ndarray:
        """``R`` with degenerate directions lifted to :data:`NOISE_FLOOR`."""
        R = self.R_matrix_raw()
        if np.linalg.eigvalsh(R)[0] < NOISE_FLOOR:
            R = R + NOISE_FLOOR * np.eye(R.shape[0])
        return R

    def noise_factor(self) -> np.ndarray:
        """Square-root factor of the raw ``R`` used to draw noise.

        Degenerate directions get exactly zero noise; the floor only applies to
        the covariance handed to estimators.
        """
        R = self.R_matrix_raw()
        lam, vec = np.linalg.eigh(R)
        if lam[0] >= NOISE_FLOOR:
            return np.linalg.cholesky(R)
        return vec * np.sqrt(np.clip(lam, 0.0, None))

    @property
    def H_matrix(self) -> np.ndarray:
        return np.array(self.H, dtype=float)

    def sample_times(self, duration: float) -> np.ndarray:
        span = duration - self.first_sample_time
        count = max(0, math.ceil(span * self.rate - 1e-9))
        return self.first_sample_time + np.arange(count) / self.rate


MODEL_DIMS = {"static": 1, "random-walk": 1, "cv": 2, "ca": 3}


class FilterSpec(_Spec):
    """One estimator to run.

    ``kind`` is ``ewif`` (filter), ``ewis`` (fixed-lag smoother, needs ``lag``)
    or ``kf`` (reference Kalman filter, needs ``sigma_w`` or ``q``).
    """

    name: str
    kind: Literal["ewif", "ewis", "kf"]
    model: Literal["static", "random-walk", "cv", "ca"] = "static"
    tau: float | None = Field(default=None, gt=0)
    lag: float | None = Field(default=None, ge=0)
    sigma_w: float | None = Field(default=None, ge=0)
    q: float | None = Field(default=None, ge=0)
    use_oosm: bool = True
    prior_variance: float = Field(default=1e6, gt=0)

    @model_validator(mode="after")
    def _by_kind(self):
        if self.kind in ("ewif", "ewis") and self.tau is None:
            raise FieldError("tau", f"required for {self.kind} filters")
        if self.kind == "ewis" and self.lag is None:
            raise FieldError("lag", "required for ewis filters")
        if self.kind == "kf":
            if self.sigma_w is None and self.q is None:
                raise FieldError("sigma_w", "kf filters need sigma_w or q")
            if self.use_oosm:
                raise FieldError(
                    "use_oosm", "the reference Kalman filter has no out-of-sequence path; set it to false"
                )
        return self

    @property
    def dim(self) -> int:
        return MODEL_DIMS[self.model]

    def transition_model(self) -> TransitionModel:
        if self.model in ("static", "random-walk"):
            return StaticModel(1)
        return KinematicModel(dim=self.dim)

    def process_noise(self) -> ProcessNoise:
        if self.sigma_w is not None:
            return RandomWalkNoise(self.sigma_w)
        if self.q is not None:
            return WhiteNoiseAcceleration(self.q)
        return ZeroNoise()


class Scenario(_Spec):
    truth: Signal
    duration: float = Field(gt=0)
    state_dim: int = Field(default=3, ge=1)
    sensors: list[SensorSpec] = Field(min_length=1)
    filters: list[FilterSpec] = Field(default_factory=list)
    seed: int = 0
    burn_in: float = Field(default=2.0, ge=0)

    @model_validator(mode="after")
    def _consistency(self):
        names = [s.name for s in self.sensors]
        for i, n in enumerate(names):
            if n in names[:i]:
                raise FieldError(f"sensors.{i}.name", f"duplicate sensor name {n!r}")
        fnames = [f.name for f in self.filters]
        for j, n in enumerate(fnames):
            if n in fnames[:j]:
                raise FieldError(f"filters.{j}.name", f"duplicate filter name {n!r}")
        for i, s in enumerate(self.sensors):
            if len(s.H[0]) != self.state_dim:
                raise FieldError(
                    f"sensors.{i}.H", f"has {len(s.H[0])} columns, state_dim is {self.state_dim}"
                )
        for j, f in enumerate(self.filters):
            if f.dim > self.state_dim:
                raise FieldError(f"filters.{j}.model", f"{f.model!r} exceeds state_dim {self.state_dim}")
            for i, s in enumerate(self.sensors):
                if np.any(s.H_matrix[:, f.dim:] != 0):
                    raise FieldError(
                        f"sensors.{i}.H",
                        f"observes components beyond the {f.model!r} state of filter {f.name!r}",
                    )
        return self

    def sensor(self, name: str) -> SensorSpec:
        for s in self.sensors:
            if s.name == name:
                return s
        raise KeyError(name)

    def filter(self, name: str) -> FilterSpec:
        for f in self.filters:
            if f.name == name:
                return f
        raise KeyError(name)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Truth:
    times: np.ndarray
    states: np.ndarray  # (len(times), state_dim)


def generate(scenario: Scenario, seed: int | None = None) -> tuple[Truth, list[Measurement]]:
    """Draw truth samples and the arrival-ordered measurement stream.

    Measurement ``H`` and ``R`` keep the full truth-state width; filters trim
    them to their own state dimension.
    """
    seed = scenario.seed if seed is None else seed
    ordered = []
    all_times = []
    for i, s in enumerate(scenario.sensors):
        times = s.sample_times(scenario.duration)
        if times.size == 0:
            raise ConfigInvalid("sensor produces no samples within duration", f"sensors.{i}")
        all_times.append(times)
        states = scenario.truth.derivatives(times, scenario.state_dim)
        R = s.noise_covariance()
        H = s.H_matrix
        p = H.shape[0]
        low = s.noise_factor()
        noise = rng.normals(seed, 2 * i, times.size * p).reshape(times.size, p) @ low.T
        if isinstance(s.delay, UniformDelay):
            u = rng.uniforms(seed, 2 * i + 1, times.size)
            delays = s.delay.low + (s.delay.high - s.delay.low) * u
        else:
            delays = np.full(times.size, float(s.delay))
        ys = states @ H.T + noise
        for j, t in enumerate(times):
            m = Measurement(ys[j], H, R, float(t), float(t + delays[j]), s.name)
            ordered.append(((m.arrival_time, i, m.valid_time), m))
    ordered.sort(key=lambda item: item[0])
    grid = np.unique(np.concatenate(all_times))
    truth = Truth(grid, scenario.truth.derivatives(grid, scenario.state_dim))
    return truth, [m for _, m in ordered]


def trim_measurement(m: Measurement, dim: int) -> Measurement:
    """Restrict ``m.H`` to the first ``dim`` state components."""
    if m.H.shape[1] == dim:
        return m
    return Measurement(m.y, m.H[:, :dim], m.R, m.valid_time, m.arrival_time, m.sensor_id)


# ---------------------------------------------------------------------------
# Running filters
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class FilterTrace:
    """Position estimates of one filter, one entry per distinct arrival time."""

    name: str
    times: np.ndarray
    estimates: np.ndarray  # NaN where the estimate was still undefined
    errors: np.ndarray
    rms: float
    seconds: float


@dataclass(eq=False)
class RunReport:
    seed: int
    filters: dict[str, FilterTrace] = field(default_factory=dict)

    def rms(self, name: str) -> float:
        return self.filters[name].rms


def _group_by_arrival(measurements):
    group: list[Measurement] = []
    for m in measurements:
        if group and m.arrival_time != group[-1].arrival_time:
            yield group
            group = []
        group.append(m)
    if group:
        yield group


def _trace_ewls(spec: FilterSpec, measurements) -> tuple[list[float], list[float]]:
    model = spec.transition_model()
    fs: FilterState = init_uninformative(model, ExponentialWeight(spec.tau), 0.0)
    lag = spec.lag if spec.kind == "ewis" else 0.0
    last_arrival = -math.inf
    times, pos = [], []
    for group in _group_by_arrival(measurements):
        arrival = group[0].arrival_time
        target = arrival - lag
        for m in group:
            if not spec.use_oosm and m.valid_time < last_arrival:
                continue
            fs = update_general(fs, trim_measurement(m, model.dim), target)
        last_arrival = arrival
        times.append(target)
        if not fs.estimate.is_defined:
            pos.append(math.nan)
            continue
        shown = fs if fs.time == target else predict(fs, target)
        pos.append(float(shown.x_hat[0]))
    return times, pos


def _trace_kf(spec: FilterSpec, measurements, t0: float) -> tuple[list[float], list[float]]:
    n = spec.dim
    ks = KalmanState(np.zeros(n), spec.prior_variance * np.eye(n), t0,
                     spec.transition_model(), spec.process_noise())
    times, pos = [], []
    for group in _group_by_arrival(measurements):
        arrival = group[0].arrival_time
        for m in group:
            if m.valid_time < ks.time:
                continue  # out of sequence: the reference filter drops it
            ks = kf_update(kf_predict(ks, m.valid_time), trim_measurement(m, n))
        shown = kf_predict(ks, arrival) if arrival > ks.time else ks
        times.append(arrival)
        pos.append(float(shown.x_hat[0]))
    return times, pos


def run_filter_spec(spec: FilterSpec, truth_signal, measurements, burn_in: float) -> FilterTrace:
    start = _time.perf_counter()
    if spec.kind == "kf":
        t0 = measurements[0].valid_time if measurements else 0.0
        times, pos = _trace_kf(spec, measurements, t0)
    else:
        times, pos = _trace_ewls(spec, measurements)
    seconds = _time.perf_counter() - start
    times = np.asarray(times)
    pos = np.asarray(pos)
    truth_pos = truth_signal.derivatives(times, 1)[:, 0] if times.size else np.zeros(0)
    errors = pos - truth_pos
    scored = (times >= burn_in) & np.isfinite(errors)
    rms = float(np.sqrt(np.mean(errors[scored] ** 2))) if scored.any() else math.nan
    return FilterTrace(spec.name, times, pos, errors, rms, seconds)


def run(scenario: Scenario, seed: int | None = None) -> RunReport:
    """Generate one realisation and score every configured filter on it.

    RMS is taken over position errors at evaluation times ``>= burn_in``.
    """
    seed = scenario.seed if seed is None else seed
    _, measurements = generate(scenario, seed)
    report = RunReport(seed)
    trimmed: dict[int, list[Measurement]] = {}
    for spec in scenario.filters:
        if spec.dim not in trimmed:
            trimmed[spec.dim] = [trim_measurement(m, spec.dim) for m in measurements]
        report.filters[spec.name] = run_filter_spec(spec, scenario.truth, trimmed[spec.dim], scenario.burn_in)
    return report


# ---------------------------------------------------------------------------
# Monte Carlo calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    sample_covariance: np.ndarray
    covariance: np.ndarray
    bias: np.ndarray
    bias_standard_error: np.ndarray
    trials: int

    @property
    def frobenius_error(self) -> float:
        """Relative Frobenius distance between sample and computed covariance."""
        return float(
            np.linalg.norm(self.sample_covariance - self.covariance) / np.linalg.norm(self.covariance)
        )


def monte_carlo_calibration(problem: BatchProblem, truth_state, trials: int, seed: int = 0) -> CalibrationResult:
    """Re-solve ``problem`` on noise drawn from the weighted model.

    Measurement ``l`` is regenerated as ``H_l x_l + v_l / W_l`` with
    ``v_l ~ N(0, R_l)``, where ``x_l`` follows the dynamics from ``truth_state``
    and ``W_l`` is the weight of ``l`` at the target time.  Terms with zero weight
    are drawn without noise (they carry no information).
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    x_true = np.asarray(truth_state, dtype=float)
    terms = list(problem.terms())
    total_p = sum(m.dim for m, *_ in terms)
    z = rng.normals(seed, 0, trials * total_p).reshape(trials, total_p)
    means = [m.H @ (A @ x_true + b) for m, _, A, b in terms]
    lows = [np.linalg.cholesky(m.R) for m, *_ in terms]
    scales = [1.0 / math.sqrt(w2) if w2 > 0 else 0.0 for _, w2, _, _ in terms]

    estimates = np.empty((trials, problem.dim))
    for k in range(trials):
        col = 0
        ms = []
        for (m, _, _, _), mean, low, s in zip(terms, means, lows, scales):
            v = low @ z[k, col: col + m.dim]
            col += m.dim
            ms.append(Measurement(mean + s * v, m.H, m.R, m.valid_time, m.arrival_time))
        trial = BatchProblem(problem.target_time, ms, problem.model, problem.weight, problem.extra_weights)
        estimates[k] = batch_solve(trial).x_hat

    err = estimates - x_true
    bias = err.mean(axis=0)
    sample_cov = np.cov(err, rowvar=False).reshape(problem.dim, problem.dim)
    stderr = np.sqrt(np.diag(sample_cov) / trials)
    covariance = batch_solve(problem).covariance
    return CalibrationResult(sample_cov, np.array(covariance), bias, stderr, trials)
