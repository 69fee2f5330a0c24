"""Weighted local loss, its gradient, projection, and the noiseless solvers.

The local loss of an explanation ``phi`` at a query point ``z`` is

    L(phi) = (1/m) * sum_x alpha(|x - z|) * (phi . (x - z) - f(x))**2

and explanations live in the closed unit Euclidean ball.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq

Weight = Callable[[np.ndarray], np.ndarray]

BALL_TOL = 1e-9


@dataclass(frozen=True)
class ExplanationDataset:
    """Points with black-box labels.

    Args:
        points: array of shape ``(m, n)``.
        labels: array of shape ``(m,)``.
        label_bound: labels must lie in ``[-label_bound, label_bound]``;
            ``None`` disables the check (used for proxy datasets).
    """

    points: np.ndarray
    labels: np.ndarray
    label_bound: float | None = 1.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        lab = np.array(self.labels, dtype=float, copy=True).reshape(-1)
        if pts.ndim == 1:
            pts = pts.reshape(1, -1) if lab.size == 1 else pts.reshape(-1, 1)
        if pts.ndim != 2:
            raise ValueError("points must be a 2-d array")
        if pts.shape[0] == 0:
            raise ValueError("empty dataset")
        if pts.shape[1] == 0:
            raise ValueError("points must have at least one feature")
        if pts.shape[0] != lab.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {lab.shape[0]} labels")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(lab)):
            raise ValueError("points and labels must be finite")
        if self.label_bound is not None:
            bad = np.flatnonzero(np.abs(lab) > self.label_bound)
            if bad.size:
                i = int(bad[0])
                raise ValueError(
                    f"label {lab[i]} at index {i} is outside [-{self.label_bound}, {self.label_bound}]"
                )
        pts.setflags(write=False)
        lab.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "ExplanationDataset":
        return ExplanationDataset(self.points[idx], self.labels[idx], self.label_bound)


def _check_query(z, data: ExplanationDataset) -> np.ndarray:
    z = np.asarray(z, dtype=float).reshape(-1)
    if z.shape[0] != data.n:
        raise ValueError(f"query has dimension {z.shape[0]}, dataset has {data.n}")
    if not np.all(np.isfinite(z)):
        raise ValueError("query point must be finite")
    return z


def _check_phi(phi, n: int) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).reshape(-1)
    if phi.shape[0] != n:
        raise ValueError(f"explanation has dimension {phi.shape[0]}, dataset has {n}")
    return phi


def _terms(phi, z, data: ExplanationDataset, w: Weight):
    z = _check_query(z, data)
    phi = _check_phi(phi, data.n)
    diffs = data.points - z
    alpha = np.asarray(w(np.linalg.norm(diffs, axis=1)), dtype=float)
    resid = diffs @ phi - data.labels
    return diffs, alpha, resid


def loss_eval(phi, z, data: ExplanationDataset, w: Weight, normalizer: float | None = None) -> float:
    """Weighted local loss of ``phi`` at ``z``.

    ``normalizer`` defaults to the dataset size ``m``.
    """
    _, alpha, resid = _terms(phi, z, data, w)
    norm = data.m if normalizer is None else normalizer
    return float(np.sum(alpha * resid**2) / norm)


def loss_gradient(
    phi, z, data: ExplanationDataset, w: Weight, normalizer: float | None = None
) -> np.ndarray:
    """Gradient of :func:`loss_eval` with respect to ``phi``."""
    diffs, alpha, resid = _terms(phi, z, data, w)
    norm = data.m if normalizer is None else normalizer
    return 2.0 * np.sum((alpha * resid)[:, None] * diffs, axis=0) / norm


class LocalLoss:
    """The local loss at a fixed query, reduced to a quadratic form.

    Since the loss is quadratic in ``phi`` it equals
    ``0.5 phi' A phi - b' phi + offset``; building ``A`` and ``b`` once makes
    each later gradient an ``O(n^2)`` operation instead of ``O(m n)``.
    """

    def __init__(self, z, data: ExplanationDataset, w: Weight, normalizer: float | None = None):
        self.z = _check_query(z, data)
        self.data = data
        self.w = w
        self.normalizer = float(data.m if normalizer is None else normalizer)
        diffs = data.points - self.z
        self.alpha = np.asarray(w(np.linalg.norm(diffs, axis=1)), dtype=float)
        weighted = self.alpha[:, None] * diffs
        self.A = 2.0 * (weighted.T @ diffs) / self.normalizer
        self.A = 0.5 * (self.A + self.A.T)
        self.b = 2.0 * (weighted.T @ data.labels) / self.normalizer
        self.offset = float(np.sum(self.alpha * data.labels**2) / self.normalizer)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def gradient(self, phi) -> np.ndarray:
        return self.A @ phi - self.b

    def value(self, phi) -> float:
        phi = np.asarray(phi, dtype=float)
        v = 0.5 * phi @ (self.A @ phi) - self.b @ phi + self.offset
        return max(float(v), 0.0)

    def exact_value(self, phi) -> float:
        """Direct summation; slower but free of cancellation."""
        return loss_eval(phi, self.z, self.data, self.w, self.normalizer)


def project_ball(v) -> np.ndarray:
    """Euclidean projection onto the unit ball."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    norm = float(np.linalg.norm(v))
    if norm <= 1.0:
        return v.copy()
    return v / norm


def pgd_step(phi: np.ndarray, direction: np.ndarray, eta: float) -> np.ndarray:
    """One projected step ``project(phi - eta * direction)``."""
    return project_ball(phi - eta * direction)


def solve_optimal(
    z,
    data: ExplanationDataset,
    w: Weight,
    oracle_iters: int = 50_000,
    eta_c: float = 1.0,
    init=None,
    trace: list | None = None,
    normalizer: float | None = None,
) -> np.ndarray:
    """Noiseless projected gradient descent with step ``eta_c / sqrt(t)``.

    Runs ``oracle_iters`` updates and returns the last iterate.  When
    ``trace`` is a list, every iterate (starting with ``init``) is appended.
    """
    if oracle_iters < 1:
        raise ValueError("oracle_iters must be >= 1")
    if not eta_c > 0:
        raise ValueError("eta_c must be positive")
    loss = LocalLoss(z, data, w, normalizer)
    phi = np.zeros(loss.n) if init is None else project_ball(_check_phi(init, loss.n))
    if trace is not None:
        trace.append(phi.copy())
    for t in range(1, oracle_iters + 1):
        phi = pgd_step(phi, loss.gradient(phi), eta_c / math.sqrt(t))
        if trace is not None:
            trace.append(phi.copy())
    return phi


def minimize_quadratic_on_ball(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact minimizer of ``0.5 x'Ax - b'x`` over the unit ball, ``A`` symmetric PSD.

    Uses the eigendecomposition and a root find on the secular equation
    ``sum (q_i'b)^2 / (lam_i + mu)^2 = 1`` for the KKT multiplier ``mu``.
    """
    lam, Q = np.linalg.eigh(A)
    lam = np.maximum(lam, 0.0)
    coef = Q.T @ b
    scale = max(float(lam[-1]), float(np.abs(coef).max()), 1e-300)
    tiny = 1e-13 * scale
    # Components of b that vanish do not enter the minimizer (when the ball
    # constraint binds) or may be left at zero (when it does not).
    active = np.abs(coef) > tiny
    if not np.any(active):
        return np.zeros_like(b)
    lam_a, coef_a = lam[active], coef[active]

    def excess_norm(mu):
        return math.sqrt(float(np.sum((coef_a / (lam_a + mu)) ** 2))) - 1.0

    if np.all(lam_a > tiny) and excess_norm(0.0) <= 0.0:
        x = np.zeros_like(coef)
        x[active] = coef_a / lam_a
        return Q @ x
    lo = 0.0 if np.all(lam_a > tiny) else tiny
    while excess_norm(lo) <= 0.0:
        lo *= 0.5
    hi = float(np.linalg.norm(coef_a)) + 1.0
    mu = brentq(excess_norm, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=1000)
    x = np.zeros_like(coef)
    x[active] = coef_a / (lam_a + mu)
    return project_ball(Q @ x)


def solve_exact(z, data: ExplanationDataset, w: Weight, normalizer: float | None = None) -> np.ndarray:
    """Optimal explanation computed from the KKT conditions instead of iterating."""
    loss = LocalLoss(z, data, w, normalizer)
    return minimize_quadratic_on_ball(loss.A, loss.b)


def utility_loss(phi, z, data: ExplanationDataset, w: Weight, reference) -> float:
    """Excess loss of ``phi`` over the reference explanation at the same query."""
    return loss_eval(phi, z, data, w) - loss_eval(reference, z, data, w)
