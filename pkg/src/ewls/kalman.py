"""Reference Kalman filter with additive process noise.

Covariance form (predict + Joseph update) and the equivalent one-step
information form.  The reference filter only handles in-sequence data; there is
deliberately no out-of-sequence path.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import InnovationSingular, SingularPropagation
from .model import Measurement, TransitionModel, check_time, symmetrize

_TIME_TOL = 1e-9


class ProcessNoise(ABC):
    """Provider of the process-noise covariance ``Q`` added over ``(t_from, t_to]``."""

    @abstractmethod
    def covariance(self, dim: int, t_from: float, t_to: float) -> np.ndarray: ...


@dataclass(frozen=True)
class ZeroNoise(ProcessNoise):
    def covariance(self, dim, t_from, t_to):
        return np.zeros((dim, dim))


@dataclass(frozen=True)
class RandomWalkNoise(ProcessNoise):
    """``x_k = x_{k-1} + w_k`` with ``w_k ~ N(0, sigma_w^2 I)`` per propagation step.

    The variance is added once per non-zero step, independent of its length.
    """

    sigma_w: float

    def covariance(self, dim, t_from, t_to):
        if t_to == t_from:
            return np.zeros((dim, dim))
        return self.sigma_w**2 * np.eye(dim)


@dataclass(frozen=True)
class WhiteNoiseAcceleration(ProcessNoise):
    """Continuous white noise of intensity ``q`` on the highest derivative of a
    kinematic chain, integrated exactly over the step.
    """

    q: float

    def covariance(self, dim, t_from, t_to):
        dt = abs(t_to - t_from)
        Q = np.empty((dim, dim))
        for i in range(dim):
            for j in range(dim):
                # row i holds the (dim-1-i)-th integral of the noise
                a, b = dim - 1 - i, dim - 1 - j
                Q[i, j] = dt ** (a + b + 1) / (math.factorial(a) * math.factorial(b) * (a + b + 1))
        return self.q * Q


@dataclass(frozen=True, eq=False)
class KalmanState:
    x_hat: np.ndarray
    P: np.ndarray
    time: float
    model: TransitionModel
    noise: ProcessNoise = ZeroNoise()

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x_hat, dtype=float))
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape != (x.shape[0], x.shape[0]):
            raise ValueError(f"P {P.shape} does not match x_hat {x.shape}")
        x.setflags(write=False)
        P = symmetrize(P)
        P.setflags(write=False)
        object.__setattr__(self, "x_hat", x)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "time", check_time(self.time))

    def _with(self, x, P, time) -> "KalmanState":
        return KalmanState(x, P, time, self.model, self.noise)


def kf_predict(ks: KalmanState, target_time: float) -> KalmanState:
    """``x <- A x + b``, ``P <- A P A^T + Q``."""
    target = check_time(target_time, "target_time")
    if target < ks.time:
        raise ValueError(f"cannot predict backwards from {ks.time} to {target}")
    if target == ks.time:
        return ks
    A, b = ks.model.transition(ks.time, target)
    Q = ks.noise.covariance(len(ks.x_hat), ks.time, target)
    return ks._with(A @ ks.x_hat + b, A @ ks.P @ A.T + Q, target)


def _check_in_sequence(ks: KalmanState, m: Measurement):
    if abs(m.valid_time - ks.time) > _TIME_TOL * max(1.0, abs(ks.time)):
        raise ValueError(
            f"reference Kalman filter only accepts measurements at its current time "
            f"({ks.time}), got valid_time {m.valid_time}"
        )


def kf_update(ks: KalmanState, m: Measurement, joseph: bool = True) -> KalmanState:
    """Measurement update at the current filter time.

    ``joseph=False`` uses the short form ``(I - K H) P``; both agree to
    rounding on well-conditioned problems.
    """
    _check_in_sequence(ks, m)
    P, H = ks.P, m.H
    S = H @ P @ H.T + m.R
    try:
        low = np.linalg.cholesky(symmetrize(S))
    except np.linalg.LinAlgError:
        raise InnovationSingular("innovation covariance is not positive definite") from None
    # K = P H^T S^-1
    K = np.linalg.solve(low.T, np.linalg.solve(low, H @ P)).T
    x = ks.x_hat + K @ (m.y - H @ ks.x_hat)
    IKH = np.eye(len(x)) - K @ H
    if joseph:
        P_new = IKH @ P @ IKH.T + K @ m.R @ K.T
    else:
        P_new = IKH @ P
    return ks._with(x, P_new, ks.time)


def kf_update_information(ks: KalmanState, m: Measurement) -> KalmanState:
    """Propagate to ``m.valid_time`` and update, in information form.

    ``Y_k = A^T (P + A Q A^T)^-1 A + H^T R^-1 H`` with ``A`` the backward
    transition (``x_{k-1} = A x_k + b``).
    """
    target = m.valid_time
    if target < ks.time:
        raise ValueError(f"cannot propagate backwards from {ks.time} to {target}")
    n = len(ks.x_hat)
    A, b = ks.model.transition(target, ks.time)
    Q = ks.noise.covariance(n, ks.time, target)
    M = symmetrize(ks.P + A @ Q @ A.T)
    try:
        low = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise SingularPropagation("P + A Q A^T is not positive definite") from None
    Minv_A = np.linalg.solve(low.T, np.linalg.solve(low, A))
    Minv_x = np.linalg.solve(low.T, np.linalg.solve(low, ks.x_hat - b))
    Y = symmetrize(A.T @ Minv_A + m.information())
    z = A.T @ Minv_x + m.information_vector()
    P = symmetrize(np.linalg.inv(Y))
    return ks._with(P @ z, P, target)
