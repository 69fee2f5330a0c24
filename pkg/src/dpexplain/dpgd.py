"""Noisy projected gradient descent and the non-adaptive private explainer."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ExplanationDataset, LocalLoss, Weight, _check_phi, pgd_step, project_ball
from .mechanisms import PrivacyParams, gaussian_sigma, sample_gaussian


@dataclass(frozen=True)
class GDConfig:
    """Settings for one run of :func:`dp_grad`.

    Args:
        T: iteration parameter; the run performs ``T - 1`` updates.
        sigma: standard deviation of the per-coordinate gradient noise.
        eta_c: step scale, the step at update ``t`` is ``eta_c / sqrt(t)``.
        init: starting explanation, the origin when omitted.
    """

    T: int
    sigma: float
    eta_c: float = 1.0
    init: np.ndarray | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if not self.eta_c > 0:
            raise ValueError("eta_c must be positive")
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")


def dp_grad(
    z,
    data: ExplanationDataset,
    w: Weight,
    cfg: GDConfig,
    rng: np.random.Generator | None,
    trace: list | None = None,
    loss: LocalLoss | None = None,
) -> np.ndarray:
    """Projected gradient descent with Gaussian noise added to every gradient.

    Performs updates ``t = 1 .. T-1`` and returns the final iterate.  With
    ``sigma == 0`` no random numbers are drawn and the path coincides with
    :func:`solve_optimal` run for ``T - 1`` iterations.  ``trace`` collects
    every iterate when given; ``loss`` lets callers reuse a prebuilt
    :class:`LocalLoss` for the same query.
    """
    if loss is None:
        loss = LocalLoss(z, data, w)
    n = loss.n
    phi = np.zeros(n) if cfg.init is None else project_ball(_check_phi(cfg.init, n))
    if trace is not None:
        trace.append(phi.copy())
    noisy = cfg.sigma > 0
    if noisy and rng is None:
        raise ValueError("a random generator is required when sigma > 0")
    for t in range(1, cfg.T):
        direction = loss.gradient(phi)
        if noisy:
            direction = direction + sample_gaussian(n, cfg.sigma, rng)
        phi = pgd_step(phi, direction, cfg.eta_c / math.sqrt(t))
        if trace is not None:
            trace.append(phi.copy())
    return phi


def t_max_bound(m: int, n: int, eps: float, delta: float) -> int:
    """Largest iteration count covered by the utility guarantee; 0 if none is."""
    if m < 1 or n < 1 or not eps > 0 or not 0 < delta < 1:
        raise ValueError("invalid parameters")
    bound = (m * eps) ** 2 / (32.0 * n * math.log(math.e + 1.0 / delta) ** 2)
    return int(math.floor(min(bound, 1.0 / delta)))


def learning_rate_c(n: int, sigma: float, beta: float, T: int) -> float:
    """Step scale minimizing the expected-suboptimality bound of noisy descent.

    ``c^2 = 2 / (s + sqrt(s^2 + 12 n sigma^2 ln T))`` with ``s = n sigma^2 + beta^2``.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    if sigma < 0 or beta < 0:
        raise ValueError("sigma and beta must be >= 0")
    noise = n * sigma * sigma
    s = noise + beta * beta
    denom = s + math.sqrt(s * s + 12.0 * noise * math.log(T))
    if denom == 0:
        raise ValueError("step scale is unbounded when sigma and beta are both zero")
    return math.sqrt(2.0 / denom)


def explain_nonadaptive(
    z,
    data: ExplanationDataset,
    w: Weight,
    eps: float,
    delta: float,
    T: int,
    rng: np.random.Generator,
    init=None,
    beta: float = 1.0,
    trace: list | None = None,
    loss: LocalLoss | None = None,
) -> tuple[np.ndarray, PrivacyParams]:
    """One private explanation that spends exactly ``(eps, delta)``.

    The noise is calibrated for gradient sensitivity ``c / m`` where ``c`` is
    taken from ``w`` (1 for plain callables).  ``beta`` bounds the noiseless
    gradient norm in the step-size rule.
    """
    if T < 2:
        raise ValueError("T must be >= 2")
    c = float(getattr(w, "c", 1.0))
    sigma = c * gaussian_sigma(data.m, eps, delta, T)
    cap = t_max_bound(data.m, data.n, eps, delta)
    if T > cap:
        warnings.warn(
            f"T={T} exceeds the iteration cap {cap} of the utility guarantee",
            RuntimeWarning,
            stacklevel=2,
        )
    eta_c = learning_rate_c(data.n, sigma, beta, T)
    cfg = GDConfig(T=T, sigma=sigma, eta_c=eta_c, init=init)
    phi = dp_grad(z, data, w, cfg, rng, trace=trace, loss=loss)
    return phi, PrivacyParams(eps, delta)
