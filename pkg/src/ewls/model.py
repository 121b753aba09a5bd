"""Domain types shared by every estimator.

Estimates are kept in information form: the information matrix ``Y = P^-1``
together with the information vector ``z = Y x``.  That makes the zero-information
start (``Y = 0``) representable and keeps every update additive.

Transition models map a state between two arbitrary times.  A model returns
``(A, b)`` such that ``x(t_to) = A @ x(t_from) + b``, where ``b`` collects the
effect of known deterministic inputs over the interval.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import expm

from .errors import InvalidMeasurement, SingularInformation, UndefinedEstimate

Timestamp = float

#: Condition number above which an information matrix is treated as singular.
CONDITION_LIMIT = 1e12


def check_time(t: float, name: str = "time") -> float:
    t = float(t)
    if not math.isfinite(t):
        raise ValueError(f"{name} must be finite, got {t!r}")
    return t


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def condition_number(info: np.ndarray) -> float:
    """Spectral condition number of a symmetric PSD matrix (inf if not PD)."""
    eig = np.linalg.eigvalsh(info)
    if eig[0] <= 0.0:
        return math.inf
    return float(eig[-1] / eig[0])


def solve_information(info: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Solve ``info @ x = vec`` through a Cholesky factor.

    Raises :class:`SingularInformation` when the condition number exceeds
    :data:`CONDITION_LIMIT`.
    """
    cond = condition_number(info)
    if cond > CONDITION_LIMIT:
        raise SingularInformation(cond)
    low = np.linalg.cholesky(info)
    return _cho_solve(low, vec)


def _cho_solve(low: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # numpy.linalg.solve on triangular factors; scipy's wrappers add noticeable
    # overhead on the 1x1..4x4 matrices used here.
    tmp = np.linalg.solve(low, rhs)
    return np.linalg.solve(low.T, tmp)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Weight functions
# ---------------------------------------------------------------------------


class WeightFunction(ABC):
    """Scalar weight ``W(t_l, t_k)`` with W >= 0, W(t, t) = 1 and the
    telescoping property ``W(a, c) = W(a, b) * W(b, c)``.

    The arguments are named after the usual ordering (measurement time, then
    estimation time) but any order is accepted.
    """

    @abstractmethod
    def evaluate(self, t_early: float, t_late: float) -> float: ...

    def squared(self, t_early: float, t_late: float) -> float:
        return self.evaluate(t_early, t_late) ** 2


@dataclass(frozen=True)
class ExponentialWeight(WeightFunction):
    """``W = exp(-(t_late - t_early) / (2 tau))``."""

    tau: float

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be positive and finite, got {self.tau!r}")

    def evaluate(self, t_early, t_late):
        return math.exp(-(t_late - t_early) / (2.0 * self.tau))

    def squared(self, t_early, t_late):
        return math.exp(-(t_late - t_early) / self.tau)


@dataclass(frozen=True)
class ConstantWeight(WeightFunction):
    """Uniform weighting, ``W = 1``."""

    def evaluate(self, t_early, t_late):
        return 1.0

    def squared(self, t_early, t_late):
        return 1.0


def weight_eval(w: WeightFunction, t_early: float, t_late: float) -> float:
    return w.evaluate(check_time(t_early, "t_early"), check_time(t_late, "t_late"))


# ---------------------------------------------------------------------------
# Transition models
# ---------------------------------------------------------------------------


class TransitionModel(ABC):
    """Deterministic dynamics between two arbitrary times."""

    dim: int

    @abstractmethod
    def transition(self, t_from: float, t_to: float) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(A, b)`` with ``x(t_to) = A x(t_from) + b``."""


@dataclass(frozen=True)
class StaticModel(TransitionModel):
    """Time-invariant state, ``A = I``."""

    dim: int = 1

    def transition(self, t_from, t_to):
        return np.eye(self.dim), np.zeros(self.dim)


def kinematic_matrix(order: int, dt: float) -> np.ndarray:
    """Upper-triangular Taylor matrix of a chain of ``order`` integrators."""
    a = np.eye(order)
    term = 1.0
    for k in range(1, order):
        term = term * dt / k
        idx = np.arange(order - k)
        a[idx, idx + k] = term
    return a


@dataclass(frozen=True)
class KinematicModel(TransitionModel):
    """Polynomial motion model: state is ``[pos, vel, acc, ...]`` of length ``dim``.

    ``drive`` is a known constant input on the highest derivative (e.g. a known
    jerk for the CA model); it enters only through ``b``.
    """

    dim: int = 3
    drive: float = 0.0

    def transition(self, t_from, t_to):
        dt = t_to - t_from
        if self.drive == 0.0:
            return kinematic_matrix(self.dim, dt), np.zeros(self.dim)
        ext = kinematic_matrix(self.dim + 1, dt)
        return ext[: self.dim, : self.dim], self.drive * ext[: self.dim, self.dim]


@dataclass(frozen=True)
class ConstantVelocityModel(KinematicModel):
    dim: int = 2


@dataclass(frozen=True)
class ConstantAccelerationModel(KinematicModel):
    dim: int = 3


def ca_transition(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Constant-acceleration transition over ``dt`` (no input)."""
    dt = check_time(dt, "dt")
    return kinematic_matrix(3, dt), np.zeros(3)


@dataclass(frozen=True, eq=False)
class LinearModel(TransitionModel):
    """Continuous-time LTI dynamics ``dx/dt = F x + g`` with constant forcing ``g``.

    ``A = expm(F dt)`` and ``b = int_0^dt expm(F s) ds g``, both read off one
    exponential of the augmented generator.
    """

    F: np.ndarray
    forcing: np.ndarray | None = None

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.F, dtype=float))
        if f.shape[0] != f.shape[1]:
            raise ValueError(f"F must be square, got shape {f.shape}")
        g = np.zeros(f.shape[0]) if self.forcing is None else np.asarray(self.forcing, float)
        if g.shape != (f.shape[0],):
            raise ValueError(f"forcing must have shape ({f.shape[0]},), got {g.shape}")
        object.__setattr__(self, "F", _frozen(f))
        object.__setattr__(self, "forcing", _frozen(g))

    @property
    def dim(self) -> int:
        return self.F.shape[0]

    def transition(self, t_from, t_to):
        n = self.dim
        gen = np.zeros((n + 1, n + 1))
        gen[:n, :n] = self.F
        gen[:n, n] = self.forcing
        e = expm(gen * (t_to - t_from))
        return e[:n, :n], e[:n, n]


# ---------------------------------------------------------------------------
# Measurements and estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Measurement:
    """Observation ``y = H x(valid_time) + v`` with ``v ~ N(0, R)``.

    ``arrival_time`` is when the measurement reaches the estimator; it defaults
    to ``valid_time`` and may lie on either side of it.
    """

    y: np.ndarray
    H: np.ndarray
    R: np.ndarray
    valid_time: float
    arrival_time: float | None = None
    sensor_id: str = ""

    def __post_init__(self):
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        H = np.asarray(self.H, dtype=float)
        if H.ndim < 2:
            H = H.reshape(y.shape[0], -1)
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        p = y.shape[0]
        if y.ndim != 1 or H.shape[0] != p or R.shape != (p, p):
            raise InvalidMeasurement(
                f"inconsistent shapes y{y.shape}, H{H.shape}, R{R.shape}"
            )
        if not (np.isfinite(y).all() and np.isfinite(H).all() and np.isfinite(R).all()):
            raise InvalidMeasurement("measurement contains non-finite values")
        if p > 1 and np.abs(R - R.T).max() > 1e-10 * np.abs(R).max():
            raise InvalidMeasurement("R is not symmetric")
        try:
            low = np.linalg.cholesky(R)
        except np.linalg.LinAlgError:
            raise InvalidMeasurement("R is not positive definite") from None
        valid = check_time(self.valid_time, "valid_time")
        arrival = valid if self.arrival_time is None else check_time(self.arrival_time, "arrival_time")
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "H", _frozen(H))
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "valid_time", valid)
        object.__setattr__(self, "arrival_time", arrival)
        object.__setattr__(self, "_chol", low)

    @property
    def dim(self) -> int:
        return self.y.shape[0]

    @cached_property
    def _whitened_H(self) -> np.ndarray:
        # L^-1 H, so that H^T R^-1 H = (L^-1 H)^T (L^-1 H)
        return np.linalg.solve(self._chol, self.H)

    @cached_property
    def _whitened_y(self) -> np.ndarray:
        return np.linalg.solve(self._chol, self.y)

    def information(self) -> np.ndarray:
        """``H^T R^-1 H``."""
        wh = self._whitened_H
        return wh.T @ wh

    def information_vector(self, offset: np.ndarray | None = None) -> np.ndarray:
        """``H^T R^-1 (y - H offset)``; ``offset`` is the known input term at valid time."""
        wy = self._whitened_y
        if offset is not None:
            wy = wy - self._whitened_H @ offset
        return self._whitened_H.T @ wy

    def with_covariance(self, R: np.ndarray) -> "Measurement":
        return Measurement(self.y, self.H, R, self.valid_time, self.arrival_time, self.sensor_id)


@dataclass(frozen=True, eq=False)
class StateEstimate:
    """State estimate in information form, valid at ``time``.

    ``info`` is ``Y = P^-1`` and ``info_vector`` is ``Y @ x_hat``.  ``x_hat`` and
    ``covariance`` are available only while ``info`` is well conditioned.
    """

    info: np.ndarray
    info_vector: np.ndarray
    time: float
    _solved: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        info = np.atleast_2d(np.asarray(self.info, dtype=float))
        vec = np.atleast_1d(np.asarray(self.info_vector, dtype=float))
        if info.shape != (vec.shape[0], vec.shape[0]):
            raise ValueError(f"info {info.shape} and info_vector {vec.shape} disagree")
        object.__setattr__(self, "info", _frozen(symmetrize(info)))
        object.__setattr__(self, "info_vector", _frozen(vec))
        object.__setattr__(self, "time", check_time(self.time))

    @classmethod
    def uninformative(cls, dim: int, time: float) -> "StateEstimate":
        return cls(np.zeros((dim, dim)), np.zeros(dim), time)

    @classmethod
    def from_mean(cls, x_hat, covariance, time: float) -> "StateEstimate":
        x = np.atleast_1d(np.asarray(x_hat, dtype=float))
        info = np.linalg.inv(np.atleast_2d(covariance))
        info = symmetrize(info)
        return cls(info, info @ x, time)

    @property
    def dim(self) -> int:
        return self.info_vector.shape[0]

    @property
    def condition(self) -> float:
        if "cond" not in self._solved:
            self._solved["cond"] = condition_number(self.info)
        return self._solved["cond"]

    @property
    def is_defined(self) -> bool:
        return self.condition <= CONDITION_LIMIT

    def _factor(self) -> np.ndarray:
        if "chol" not in self._solved:
            if not self.is_defined:
                raise UndefinedEstimate(
                    f"estimate at t={self.time} is undefined: information condition "
                    f"number {self.condition:.3e}"
                )
            self._solved["chol"] = np.linalg.cholesky(self.info)
        return self._solved["chol"]

    @property
    def x_hat(self) -> np.ndarray:
        if "x" not in self._solved:
            x = _cho_solve(self._factor(), self.info_vector)
            x.setflags(write=False)
            self._solved["x"] = x
        return self._solved["x"]

    @property
    def covariance(self) -> np.ndarray:
        """Computed covariance ``P = Y^-1``."""
        if "P" not in self._solved:
            p = symmetrize(_cho_solve(self._factor(), np.eye(self.dim)))
            p.setflags(write=False)
            self._solved["P"] = p
        return self._solved["P"]
