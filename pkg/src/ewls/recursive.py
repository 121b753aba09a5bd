"""Recursive exponentially weighted information filter (EWIF).

Every operation here is one instance of a single update: carry the current
information ``(Y_m, z_m)`` from its time ``t_m`` to a target time ``t_k``,
discounted by ``W(t_m, t_k)^2``, and add the information of one measurement
valid at ``t_d``, discounted by ``W(t_d, t_k)^2``.  Because the weights telescope
and the dynamics compose exactly, the result equals the batch solution over
all measurements seen so far regardless of the order they arrived in or the
times involved.  Prediction, retrodiction, fixed-lag and fixed-point smoothing,
and out-of-sequence updates differ only in which times are plugged in.

States are immutable; each call returns a new :class:`FilterState`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonSPDPrior, UndefinedEstimate
from .model import (
    CONDITION_LIMIT,
    Measurement,
    StateEstimate,
    TransitionModel,
    WeightFunction,
    check_time,
    condition_number,
    symmetrize,
)


@dataclass(frozen=True, eq=False)
class FilterState:
    estimate: StateEstimate
    weight: WeightFunction
    model: TransitionModel

    @property
    def time(self) -> float:
        return self.estimate.time

    @property
    def info(self) -> np.ndarray:
        return self.estimate.info

    @property
    def x_hat(self) -> np.ndarray:
        return self.estimate.x_hat

    @property
    def covariance(self) -> np.ndarray:
        """Computed covariance.  Only a true error covariance when the noise
        actually follows the weighted model; otherwise an approximation."""
        return self.estimate.covariance

    def _with(self, info: np.ndarray, vec: np.ndarray, time: float) -> "FilterState":
        return FilterState(StateEstimate(info, vec, time), self.weight, self.model)


def init_uninformative(model: TransitionModel, weight: WeightFunction, t0: float) -> FilterState:
    """Zero-information start; the estimate is undefined until the state is observed."""
    return FilterState(StateEstimate.uninformative(model.dim, check_time(t0, "t0")), weight, model)


def init_prior(model: TransitionModel, weight: WeightFunction, t0: float, x0, P0) -> FilterState:
    """Start from a prior mean ``x0`` with covariance ``P0``.

    Raises :class:`NonSPDPrior` if ``P0`` is not symmetric positive definite or its
    condition number exceeds ``CONDITION_LIMIT``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    P0 = np.atleast_2d(np.asarray(P0, dtype=float))
    n = model.dim
    if x0.shape != (n,) or P0.shape != (n, n):
        raise NonSPDPrior(f"prior shapes x0{x0.shape}, P0{P0.shape} do not match state dim {n}")
    if not np.allclose(P0, P0.T, rtol=1e-10, atol=0.0):
        raise NonSPDPrior("P0 is not symmetric")
    cond = condition_number(P0)
    if cond > CONDITION_LIMIT:
        raise NonSPDPrior(f"P0 is not positive definite or is ill-conditioned (condition {cond:.3e})")
    info = symmetrize(np.linalg.inv(P0))
    return FilterState(StateEstimate(info, info @ x0, check_time(t0, "t0")), weight, model)


def _propagated(fs: FilterState, target: float) -> tuple[np.ndarray, np.ndarray]:
    """Information of the current estimate expressed at ``target``."""
    est = fs.estimate
    if target == est.time:
        return est.info, est.info_vector
    w2 = fs.weight.squared(est.time, target)
    # x_m = A x_k + b
    A, b = fs.model.transition(target, est.time)
    info = w2 * (A.T @ est.info @ A)
    vec = w2 * (A.T @ (est.info_vector - est.info @ b))
    return info, vec


def _measurement_term(fs: FilterState, m: Measurement, target: float) -> tuple[np.ndarray, np.ndarray]:
    w2 = fs.weight.squared(m.valid_time, target)
    if m.valid_time == target:
        return w2 * m.information(), w2 * m.information_vector()
    A, b = fs.model.transition(target, m.valid_time)
    return w2 * (A.T @ m.information() @ A), w2 * (A.T @ m.information_vector(b))


def update_general(fs: FilterState, m: Measurement, target_time: float) -> FilterState:
    """Fuse ``m`` and express the result at ``target_time``.

    ``target_time``, the current filter time and ``m.valid_time`` may be in any
    order: this covers filtering, out-of-sequence updates, fixed-point and
    fixed-lag smoothing.
    """
    target = check_time(target_time, "target_time")
    info, vec = _propagated(fs, target)
    d_info, d_vec = _measurement_term(fs, m, target)
    return fs._with(info + d_info, vec + d_vec, target)


def update_insequence(fs: FilterState, m: Measurement) -> FilterState:
    """Standard recursive step for a measurement valid at its arrival time."""
    if m.valid_time != m.arrival_time:
        raise ValueError(
            f"in-sequence update needs valid_time == arrival_time, got {m.valid_time} != {m.arrival_time}"
        )
    if m.arrival_time < fs.time:
        raise ValueError(f"measurement at {m.arrival_time} precedes filter time {fs.time}")
    return update_general(fs, m, m.arrival_time)


def update_oosm(fs: FilterState, m: Measurement) -> FilterState:
    """Fuse a measurement with arbitrary validity time at its arrival time."""
    if m.arrival_time < fs.time:
        raise ValueError(f"arrival time {m.arrival_time} precedes filter time {fs.time}")
    return update_general(fs, m, m.arrival_time)


def predict(fs: FilterState, target_time: float) -> FilterState:
    """Propagate the estimate to ``target_time`` (forward or backward) without new data.

    The mean follows the dynamics exactly; the covariance is inflated by
    ``1 / W^2`` on top of ``A P A^T``.
    """
    if not fs.estimate.is_defined:
        raise UndefinedEstimate(f"cannot predict from an undefined estimate at t={fs.time}")
    target = check_time(target_time, "target_time")
    info, vec = _propagated(fs, target)
    return fs._with(info, vec, target)


def smooth_fixed_lag(fs: FilterState, m: Measurement, lag: float) -> FilterState:
    """Fuse ``m`` and return the estimate ``lag`` seconds before its arrival time."""
    lag = float(lag)
    if not lag >= 0:
        raise ValueError(f"lag must be non-negative, got {lag}")
    if lag == 0:
        return update_oosm(fs, m)
    return update_general(fs, m, m.arrival_time - lag)


def run_filter(fs: FilterState, measurements, target=None) -> FilterState:
    """Apply :func:`update_oosm` for each measurement in order.

    When ``target`` is given the final state is predicted to it (without the
    observability check, so it also works for a still-singular state).
    """
    for m in measurements:
        fs = update_oosm(fs, m)
    if target is not None:
        info, vec = _propagated(fs, check_time(target))
        fs = fs._with(info, vec, float(target))
    return fs
