"""Noise calibration, the exponential mechanism, and budget accounting."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np


@dataclass(frozen=True)
class PrivacyParams:
    """An ``(eps, delta)`` pair.  Zero is allowed for free operations."""

    eps: float
    delta: float

    def __post_init__(self):
        if not (self.eps >= 0 and math.isfinite(self.eps)):
            raise ValueError(f"eps must be finite and >= 0, got {self.eps}")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")


def _check_budget(eps: float, delta: float) -> None:
    if not (eps > 0 and math.isfinite(eps)):
        raise ValueError(f"eps must be positive and finite, got {eps}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def gaussian_sigma(m: int, eps: float, delta: float, T: int) -> float:
    """Noise scale for ``T`` noisy gradient steps on a dataset of size ``m``.

    ``sigma = sqrt(16 T ln(e + sqrt(T) eps / delta) ln(T / delta)) / (m eps)``.
    """
    _check_budget(eps, delta)
    if m < 1 or T < 1:
        raise ValueError("m and T must be >= 1")
    if T / delta <= 1:
        raise ValueError("T / delta must exceed 1")
    inner = 16.0 * T * math.log(math.e + math.sqrt(T) * eps / delta) * math.log(T / delta)
    return math.sqrt(inner) / (m * eps)


def eps_per_iteration(eps_min: float, delta_min: float, T: int) -> float:
    """Per-iteration epsilon so that ``T`` iterations compose to about ``eps_min``."""
    _check_budget(eps_min, delta_min)
    if T < 1:
        raise ValueError("T must be >= 1")
    return eps_min / math.sqrt(8.0 * T * math.log(2.0 / delta_min))


def sigma_min(m: int, eps_ite: float, delta_min: float, T: int) -> float:
    """Smallest noise scale giving ``(eps_ite, delta_min / (2T))`` per iteration."""
    _check_budget(eps_ite, delta_min)
    if m < 1 or T < 1:
        raise ValueError("m and T must be >= 1")
    return math.sqrt(2.0 * math.log(2.5 * T / delta_min)) / (m * eps_ite)


def sample_gaussian(n: int, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """``n`` i.i.d. normal draws with standard deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return np.zeros(n)
    return rng.normal(0.0, sigma, size=n)


def exp_mech_probabilities(scores, m: int, eps_para: float, c: float = 1.0) -> np.ndarray:
    """Selection probabilities ``p_j ~ exp(-m eps_para scores_j / (2c))``.

    The scores are gradient norms whose sensitivity is ``c / m``; with the
    default ``c = 1`` this is the textbook exponential mechanism.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    if s.size == 0:
        raise ValueError("exp_mech_select needs at least one candidate")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite and non-negative")
    if not eps_para > 0:
        raise ValueError("eps_para must be positive")
    logits = -m * eps_para * s / (2.0 * c)
    logits -= logits.max()
    p = np.exp(logits)
    return p / p.sum()


def exp_mech_select(scores, m: int, eps_para: float, rng: np.random.Generator, c: float = 1.0, size=None):
    """Sample a candidate index (or ``size`` indices) from the exponential mechanism."""
    p = exp_mech_probabilities(scores, m, eps_para, c)
    if p.size == 1:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    # inverse-CDF sampling keeps the draw count at one uniform per selection
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    return int(idx) if size is None else idx


# --- composition ---------------------------------------------------------


@dataclass
class CompositionStats:
    """Running sums over the non-zero charges of a log."""

    count: int = 0
    sum_eps: float = 0.0
    sum_eps_sq: float = 0.0
    sum_eps_growth: float = 0.0  # sum of eps * (exp(eps) - 1)
    sum_delta: float = 0.0
    max_eps: float = 0.0

    def add(self, eps: float, delta: float) -> None:
        self.count += 1
        self.sum_eps += eps
        self.sum_eps_sq += eps * eps
        self.sum_eps_growth += eps * math.expm1(eps)
        self.sum_delta += delta
        self.max_eps = max(self.max_eps, eps)

    @classmethod
    def of(cls, charges: Sequence) -> "CompositionStats":
        stats = cls()
        for ch in charges:
            eps, delta = _as_pair(ch)
            if eps > 0 or delta > 0:
                stats.add(eps, delta)
        return stats


def _as_pair(ch) -> tuple[float, float]:
    if isinstance(ch, PrivacyParams):
        return ch.eps, ch.delta
    eps, delta = ch
    return float(eps), float(delta)


class CompositionRule(Protocol):
    def compose(self, stats: CompositionStats, delta_slack: float) -> PrivacyParams: ...


class HeterogeneousAdvanced:
    """Advanced composition for charges with differing epsilons.

    ``eps' = sqrt(2 ln(1/slack) sum eps_i^2) + sum eps_i (e^eps_i - 1)`` and
    ``delta' = sum delta_i + slack``.  For identical charges this is the usual
    ``sqrt(2k ln(1/slack)) eps + k eps (e^eps - 1)``.
    """

    name = "heterogeneous"

    def compose(self, stats: CompositionStats, delta_slack: float) -> PrivacyParams:
        if stats.count == 0:
            return PrivacyParams(0.0, 0.0)
        eps = math.sqrt(2.0 * math.log(1.0 / delta_slack) * stats.sum_eps_sq) + stats.sum_eps_growth
        return PrivacyParams(eps, min(stats.sum_delta + delta_slack, 1.0 - 1e-300))


class MaxEpsAdvanced:
    """Homogeneous advanced composition applied to the largest epsilon."""

    name = "max_eps"

    def compose(self, stats: CompositionStats, delta_slack: float) -> PrivacyParams:
        if stats.count == 0:
            return PrivacyParams(0.0, 0.0)
        k, e = stats.count, stats.max_eps
        eps = math.sqrt(2.0 * k * math.log(1.0 / delta_slack)) * e + k * e * math.expm1(e)
        return PrivacyParams(eps, min(stats.sum_delta + delta_slack, 1.0 - 1e-300))


COMPOSITION_RULES = {"heterogeneous": HeterogeneousAdvanced, "max_eps": MaxEpsAdvanced}


def advanced_composition(charges: Sequence, delta_slack: float, rule: CompositionRule | None = None) -> PrivacyParams:
    """Compose a list of ``(eps, delta)`` charges.

    Zero charges are ignored; an all-zero or empty list composes to ``(0, 0)``.
    """
    if not 0 < delta_slack < 1:
        raise ValueError("delta_slack must lie in (0, 1)")
    rule = rule or HeterogeneousAdvanced()
    return rule.compose(CompositionStats.of(charges), delta_slack)


# --- accountant -----------------------------------------------------------


class ChargeStatus(enum.Enum):
    COMMITTED = "committed"
    EXHAUSTED = "exhausted"


class BudgetExhausted(RuntimeError):
    """Raised by callers that treat exhaustion as an exception."""


@dataclass
class BudgetAccountant:
    """Tracks composed spend against a total budget.

    A charge that would push the composed epsilon above ``eps_total`` (or the
    composed delta to ``delta_total`` or beyond) is refused, not recorded, and
    puts the accountant into a permanent exhausted state.

    Args:
        eps_total: total epsilon budget.
        delta_total: total delta budget.
        eps_min: per-query epsilon floor, kept for callers.
        delta_min: per-query delta floor.
        delta_slack: slack delta of the composition; defaults to half of
            ``delta_total``.
        rule: composition rule, :class:`HeterogeneousAdvanced` by default.
    """

    eps_total: float
    delta_total: float
    eps_min: float | None = None
    delta_min: float | None = None
    delta_slack: float | None = None
    rule: CompositionRule = field(default_factory=HeterogeneousAdvanced)
    query_log: list[PrivacyParams] = field(default_factory=list, init=False)
    exhausted: bool = field(default=False, init=False)

    def __post_init__(self):
        _check_budget(self.eps_total, self.delta_total)
        if self.delta_slack is None:
            self.delta_slack = self.delta_total / 2.0
        if not 0 < self.delta_slack < self.delta_total:
            raise ValueError("delta_slack must lie in (0, delta_total)")
        if self.eps_min is not None and self.eps_min > self.eps_total:
            raise ValueError("eps_min cannot exceed eps_total")
        self._stats = CompositionStats()
        self._spent = PrivacyParams(0.0, 0.0)

    @property
    def eps_spent(self) -> float:
        return self._spent.eps

    @property
    def delta_spent(self) -> float:
        return self._spent.delta

    @property
    def spent(self) -> PrivacyParams:
        return self._spent

    def _compose_with(self, eps: float, delta: float) -> tuple[CompositionStats, PrivacyParams]:
        stats = CompositionStats(**vars(self._stats))
        stats.add(eps, delta)
        return stats, self.rule.compose(stats, self.delta_slack)

    def can_afford(self, eps: float, delta: float) -> bool:
        if self.exhausted:
            return False
        if eps == 0 and delta == 0:
            return True
        _, total = self._compose_with(eps, delta)
        return total.eps <= self.eps_total and total.delta < self.delta_total

    def charge(self, eps: float, delta: float) -> ChargeStatus:
        """Commit a charge, or refuse it and become exhausted."""
        params = PrivacyParams(float(eps), float(delta))
        if self.exhausted:
            return ChargeStatus.EXHAUSTED
        if params.eps == 0 and params.delta == 0:
            self.query_log.append(params)
            return ChargeStatus.COMMITTED
        stats, total = self._compose_with(params.eps, params.delta)
        if total.eps > self.eps_total or total.delta >= self.delta_total:
            self.exhausted = True
            return ChargeStatus.EXHAUSTED
        self._stats = stats
        self._spent = total
        self.query_log.append(params)
        return ChargeStatus.COMMITTED
