"""Privacy of the model's training data under private explanations."""

from __future__ import annotations

import math
from dataclasses import dataclass

# Past this point erf(u / sqrt(2)) differs from 1 by less than 1e-15.
_SATURATION_U = 8.0


@dataclass(frozen=True)
class AmplificationReport:
    """Contraction of the training-data delta.

    Attributes:
        gamma: upper bound on the factor multiplying the training delta.
        eps_train: epsilon with respect to the training data, ``2 m eps``.
        u: the normal-tail argument ``gamma`` is computed from.
    """

    gamma: float
    eps_train: float
    u: float


def gamma_amplification(m: int, eps: float, delta: float, T: int) -> AmplificationReport:
    """Amplification factor ``gamma = min(1, erf(u / sqrt 2))``.

    ``u = m eps / (16 sqrt(2) ln(2T / delta))``; ``erf(u / sqrt 2)`` is
    ``2 (Phi(u) - 1/2)`` for the standard normal CDF ``Phi``.
    """
    if m < 1 or T < 1:
        raise ValueError("m and T must be >= 1")
    if not (eps >= 0 and math.isfinite(eps)):
        raise ValueError("eps must be finite and >= 0")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    ratio = 2.0 * T / delta
    if ratio <= 1:
        raise ValueError("2T / delta must exceed 1")
    u = m * eps / (16.0 * math.sqrt(2.0) * math.log(ratio))
    gamma = 1.0 if u >= _SATURATION_U else min(1.0, math.erf(u / math.sqrt(2.0)))
    return AmplificationReport(gamma, training_epsilon_naive(m, eps), u)


def training_epsilon_naive(m: int, eps: float) -> float:
    """Training-data epsilon ``2 m eps``: a training record can move all ``m`` labels."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if not eps >= 0:
        raise ValueError("eps must be >= 0")
    return 2.0 * m * eps
