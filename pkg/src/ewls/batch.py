"""Direct solution of the exponentially weighted least-squares problem.

For a target time ``t_k`` every measurement is mapped back onto ``x_k`` through
the deterministic dynamics, ``x_l = A_lk x_k + b_lk``, and weighted by
``W(t_l, t_k)^2 R_l^-1``.  The normal equations then give the estimate and its
information matrix in one shot.

Besides the closed form this module exports the raw cost, its analytic
gradient, the Gaussian log-likelihood of the weighted noise model, and a
derivative-free minimiser of the cost.  The last three never touch the normal
equations and serve as independent checks on every other estimator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import multivariate_normal

from .errors import SingularInformation
from .model import (
    ConstantAccelerationModel,
    ConstantWeight,
    Measurement,
    StateEstimate,
    TransitionModel,
    WeightFunction,
    check_time,
    condition_number,
    CONDITION_LIMIT,
    symmetrize,
)


@dataclass(frozen=True, eq=False)
class BatchProblem:
    """Estimate ``x(target_time)`` from ``measurements``.

    ``extra_weights`` optionally multiplies the weight of each measurement by a
    fixed scalar (the per-term ``W`` of the general cost that is not generated by
    a weight function).
    """

    target_time: float
    measurements: Sequence[Measurement]
    model: TransitionModel
    weight: WeightFunction = ConstantWeight()
    extra_weights: Sequence[float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "target_time", check_time(self.target_time, "target_time"))
        object.__setattr__(self, "measurements", tuple(self.measurements))
        if not self.measurements:
            raise ValueError("a batch problem needs at least one measurement")
        if self.extra_weights is not None:
            ew = tuple(float(w) for w in self.extra_weights)
            if len(ew) != len(self.measurements) or any(w < 0 for w in ew):
                raise ValueError("extra_weights must be non-negative, one per measurement")
            object.__setattr__(self, "extra_weights", ew)

    @property
    def dim(self) -> int:
        return self.model.dim

    def terms(self):
        """Yield ``(measurement, w2, A, b)`` with ``x_l = A x_k + b`` and ``w2 = W^2``."""
        tk = self.target_time
        for i, m in enumerate(self.measurements):
            w2 = self.weight.squared(m.valid_time, tk)
            if self.extra_weights is not None:
                w2 *= self.extra_weights[i] ** 2
            A, b = self.model.transition(tk, m.valid_time)
            yield m, w2, A, b


def batch_information(p: BatchProblem) -> tuple[np.ndarray, np.ndarray]:
    """Information matrix and information vector of the stacked problem."""
    n = p.dim
    info = np.zeros((n, n))
    vec = np.zeros(n)
    for m, w2, A, b in p.terms():
        if w2 == 0.0:
            continue
        info += w2 * (A.T @ m.information() @ A)
        vec += w2 * (A.T @ m.information_vector(b))
    return symmetrize(info), vec


def batch_solve(p: BatchProblem) -> StateEstimate:
    """Weighted least-squares estimate of the state at ``p.target_time``.

    Raises
    ------
    SingularInformation
        If the measurements do not observe the full state (condition number
        above ``CONDITION_LIMIT``).
    """
    info, vec = batch_information(p)
    cond = condition_number(info)
    if cond > CONDITION_LIMIT:
        raise SingularInformation(cond)
    est = StateEstimate(info, vec, p.target_time)
    return est


def _residuals(p: BatchProblem, x: np.ndarray):
    for m, w2, A, b in p.terms():
        yield m, w2, A, m.H @ (A @ x + b) - m.y


def cost_eval(p: BatchProblem, x) -> float:
    """Weighted sum of squared residuals at state ``x``."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for m, w2, _, r in _residuals(p, x):
        wr = np.linalg.solve(m._chol, r)
        total += w2 * float(wr @ wr)
    return total


def batch_gradient(p: BatchProblem, x) -> np.ndarray:
    """Analytic gradient of :func:`cost_eval` with respect to ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.zeros(p.dim)
    for m, w2, A, r in _residuals(p, x):
        g += 2.0 * w2 * (A.T @ (m.H.T @ np.linalg.solve(m.R, r)))
    return g


def log_likelihood(p: BatchProblem, x) -> float:
    """Gaussian log-likelihood of ``x`` when measurement ``l`` has covariance ``R_l / W^2``.

    Terms with zero weight carry no information and are skipped.
    """
    x = np.asarray(x, dtype=float)
    total = 0.0
    for m, w2, A, b in p.terms():
        if w2 == 0.0:
            continue
        mean = m.H @ (A @ x + b)
        total += multivariate_normal.logpdf(m.y, mean=mean, cov=m.R / w2)
    return float(total)


def minimize_cost(
    p: BatchProblem,
    x0=None,
    method: str = "newton-fd",
    bracket: tuple[float, float] | None = None,
    iterations: int = 3,
) -> np.ndarray:
    """Minimise :func:`cost_eval` numerically, without the normal equations.

    ``"newton-fd"`` takes Newton steps with gradient and Hessian from central
    differences of the cost.  The cost is quadratic, so central differences are
    exact for any step and a wide step keeps round-off small.

    ``"golden"`` runs a golden-section search over ``bracket`` (scalar states only).
    """
    if method == "golden":
        if p.dim != 1:
            raise ValueError("golden-section search needs a scalar state")
        lo, hi = bracket if bracket is not None else (-1.0, 1.0)
        return np.array([_golden_section(p, float(lo), float(hi))])
    if method != "newton-fd":
        raise ValueError(f"unknown method {method!r}")

    x = np.zeros(p.dim) if x0 is None else np.array(x0, dtype=float)
    f = lambda v: cost_eval(p, v)  # noqa: E731
    for _ in range(iterations):
        h = max(1.0, float(np.max(np.abs(x))))
        g, hess = _fd_derivatives(f, x, h)
        x = x - np.linalg.solve(hess, g)
    return x


def cost_difference(p: BatchProblem, a, b) -> float:
    """``cost_eval(p, a) - cost_eval(p, b)`` without the cancellation of subtracting
    two large costs: each term is expanded as ``(r_a - r_b)^T R^-1 (r_a + r_b)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    total = 0.0
    for m, w2, A, off in p.terms():
        ra = m.H @ (A @ a + off) - m.y
        rb = m.H @ (A @ b + off) - m.y
        diff = m.H @ (A @ (a - b))
        total += w2 * float(np.linalg.solve(m.R, diff) @ (ra + rb))
    return total


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_section(p: BatchProblem, lo: float, hi: float, max_iter: int = 400) -> float:
    # Widen the bracket until the minimiser is inside it.
    while cost_difference(p, [lo], [0.5 * (lo + hi)]) < 0 or cost_difference(p, [hi], [0.5 * (lo + hi)]) < 0:
        width = hi - lo
        lo, hi = lo - width, hi + width
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    for _ in range(max_iter):
        if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi)):
            break
        if cost_difference(p, [c], [d]) < 0:
            hi, d = d, c
            c = hi - _INV_PHI * (hi - lo)
        else:
            lo, c = c, d
            d = lo + _INV_PHI * (hi - lo)
    return 0.5 * (lo + hi)


def _fd_derivatives(f: Callable[[np.ndarray], float], x: np.ndarray, h: float):
    n = x.shape[0]
    eye = np.eye(n) * h
    g = np.array([(f(x + eye[i]) - f(x - eye[i])) / (2 * h) for i in range(n)])
    hess = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            v = (
                f(x + eye[i] + eye[j])
                - f(x + eye[i] - eye[j])
                - f(x - eye[i] + eye[j])
                + f(x - eye[i] - eye[j])
            ) / (4 * h * h)
            hess[i, j] = hess[j, i] = v
    return g, hess


def savitzky_golay_fit(times, values, target_time: float, variance: float = 1.0) -> StateEstimate:
    """Quadratic least-squares fit of ``values`` evaluated at ``target_time``.

    Returns position, first and second derivative as a constant-acceleration
    state with uniform weights.  Needs at least three distinct times.
    """
    times = [check_time(t) for t in times]
    values = list(values)
    if len(times) != len(values):
        raise ValueError("times and values must have the same length")
    if len(set(times)) < 3:
        raise SingularInformation(float("inf"), "a quadratic fit needs three distinct times")
    H = np.array([[1.0, 0.0, 0.0]])
    ms = [Measurement([v], H, [[variance]], t) for t, v in zip(times, values)]
    return batch_solve(BatchProblem(target_time, ms, ConstantAccelerationModel(), ConstantWeight()))
