"""Adaptive explanation sessions: reuse, warm starts, and shortened runs.

A session answers a stream of queries against one dataset.  A query close
enough to an earlier freshly computed query reuses that explanation for free.
Otherwise a warm start is picked from the history with the exponential
mechanism, the run length is shortened when the warm start is already good,
and the query is charged to the budget accountant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import BALL_TOL, ExplanationDataset, LocalLoss, Weight
from .dpgd import GDConfig, dp_grad, explain_nonadaptive, learning_rate_c
from .mechanisms import (
    BudgetAccountant,
    ChargeStatus,
    CompositionRule,
    PrivacyParams,
    eps_per_iteration,
    exp_mech_select,
    sigma_min as sigma_min_formula,
)

Mode = Literal["adaptive", "enhanced"]
ModeTag = Literal["full", "reused", "exhausted"]


@dataclass(frozen=True)
class HistoryEntry:
    """A past query, its released explanation, and whether it may be reused."""

    query: np.ndarray
    explanation: np.ndarray
    reusable: bool


class History:
    """Append-only store of released explanations.

    Keeps the queries in a growing array so nearest-neighbour scans stay
    vectorized.
    """

    def __init__(self, n: int | None = None):
        self._entries: list[HistoryEntry] = []
        self._n = n
        self._q = np.empty((0, n or 0))
        self._phi = np.empty((0, n or 0))
        self._flag = np.empty(0, dtype=bool)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def __getitem__(self, i) -> HistoryEntry:
        return self._entries[i]

    @property
    def queries(self) -> np.ndarray:
        return self._q[: len(self)]

    @property
    def explanations(self) -> np.ndarray:
        return self._phi[: len(self)]

    @property
    def reusable(self) -> np.ndarray:
        return self._flag[: len(self)]

    def append(self, entry: HistoryEntry) -> None:
        query = np.array(entry.query, dtype=float).reshape(-1)
        phi = np.array(entry.explanation, dtype=float).reshape(-1)
        if query.shape != phi.shape:
            raise ValueError("query and explanation dimensions differ")
        if self._n is not None and query.shape[0] != self._n:
            raise ValueError(f"expected dimension {self._n}, got {query.shape[0]}")
        if not np.all(np.isfinite(phi)) or np.linalg.norm(phi) > 1.0 + BALL_TOL:
            raise ValueError("explanation must lie in the unit ball")
        self._n = query.shape[0]
        h = len(self)
        if h == self._q.shape[0]:
            cap = max(16, 2 * h)
            self._q = _grow(self._q, cap, self._n)
            self._phi = _grow(self._phi, cap, self._n)
            self._flag = np.concatenate([self._flag, np.zeros(cap - h, dtype=bool)])
        self._q[h] = query
        self._phi[h] = phi
        self._flag[h] = bool(entry.reusable)
        self._entries.append(HistoryEntry(query, phi, bool(entry.reusable)))

    def nearest_reusable(self, z, d: float) -> HistoryEntry | None:
        if not len(self):
            return None
        idx = np.flatnonzero(self.reusable)
        if idx.size == 0:
            return None
        z = np.asarray(z, dtype=float).reshape(-1)
        dist = np.linalg.norm(self._q[idx] - z, axis=1)
        j = int(np.argmin(dist))  # first minimum, i.e. earliest insertion
        return self._entries[int(idx[j])] if dist[j] <= d else None


def _grow(arr: np.ndarray, cap: int, n: int) -> np.ndarray:
    out = np.empty((cap, n))
    out[: arr.shape[0]] = arr
    return out


def reuse_lookup(z, history: History, d: float) -> HistoryEntry | None:
    """Nearest reusable entry within distance ``d`` of ``z``, if any."""
    return history.nearest_reusable(z, d)


def history_append(history: History, entry: HistoryEntry) -> History:
    history.append(entry)
    return history


def distance_threshold(T: float) -> float:
    """Reuse radius ``ln T / sqrt(T)``."""
    if T < 2:
        raise ValueError("T must be >= 2")
    return math.log(T) / math.sqrt(T)


def shortened_iterations(scale: float, T: int) -> int:
    """Run length for a warm start whose effective gradient scale is ``scale``.

    With ``a = ln(1/scale) / ln ln T``, runs shorten to
    ``ceil(scale^(1 - 1/(2a)) T)`` when ``a > 1/2`` and stay at ``T``
    otherwise.  A shortened run is clamped to ``[2, T - 1]`` so that it is
    strictly shorter even when the ceiling rounds up to ``T``.
    """
    if T <= 2:
        return T
    loglog = math.log(math.log(T))
    if loglog <= 0 or scale >= 1:
        return T
    if scale <= 0:
        return 2
    a = math.log(1.0 / scale) / loglog
    if a <= 0.5:
        return T
    t_prime = math.ceil(scale ** (1.0 - 1.0 / (2.0 * a)) * T)
    return int(min(max(t_prime, 2), T - 1))


@dataclass(frozen=True)
class ParamSelection:
    """Warm start and run settings for one fresh computation.

    ``beta`` is the gradient norm at the warm start; ``selected`` indexes the
    history entry it came from (``None`` for a cold start).
    """

    init: np.ndarray
    sigma: float
    T_prime: int
    beta: float | None = None
    selected: int | None = None


def select_parameters(
    z,
    history: History,
    eps_para: float,
    sigma_min: float,
    data: ExplanationDataset,
    w: Weight,
    T: int,
    mode: Mode,
    rng: np.random.Generator,
    loss: LocalLoss | None = None,
) -> ParamSelection:
    """Choose a warm start from the history and the matching noise and run length."""
    if not eps_para > 0:
        raise ValueError("eps_para must be positive")
    if mode not in ("adaptive", "enhanced"):
        raise ValueError(f"unknown mode {mode!r}")
    if loss is None:
        loss = LocalLoss(z, data, w)
    if not len(history):
        return ParamSelection(np.zeros(loss.n), sigma_min, T)
    c = float(getattr(w, "c", 1.0))
    grads = history.explanations @ loss.A.T - loss.b
    scores = np.linalg.norm(grads, axis=1)
    j = exp_mech_select(scores, data.m, eps_para, rng, c=c)
    beta = float(scores[j])
    root_n = math.sqrt(loss.n)
    sigma = max(beta / root_n, sigma_min)
    if mode == "enhanced":
        t_prime = shortened_iterations(beta, T)
    else:
        t_prime = shortened_iterations(root_n * sigma, T)
    return ParamSelection(history.explanations[j].copy(), sigma, t_prime, beta, int(j))


def per_query_charge(T_prime: int, eps_ite: float, delta_min: float, with_selection: bool) -> PrivacyParams:
    """Charge of one fresh computation.

    ``T_prime - 1`` noisy steps and, when a warm start was selected, one
    exponential-mechanism draw, each at ``eps_ite``, composed with slack
    ``delta_min / 2``.  The per-step deltas add up to at most ``delta_min / 2``.
    """
    k = (T_prime - 1) + (1 if with_selection else 0)
    if k <= 0:
        return PrivacyParams(0.0, 0.0)
    eps = math.sqrt(2.0 * k * math.log(2.0 / delta_min)) * eps_ite + k * eps_ite * math.expm1(eps_ite)
    return PrivacyParams(eps, delta_min)


@dataclass(frozen=True)
class AdaptiveConfig:
    """Budget and protocol settings of an adaptive session.

    ``d`` defaults to :func:`distance_threshold` of ``T``.
    """

    T: int = 300
    eps_min: float = 0.01
    delta_min: float = 1e-7
    eps_total: float = 1.0
    delta_total: float = 1e-5
    d: float | None = None
    mode: Mode = "adaptive"
    delta_slack: float | None = None

    def __post_init__(self):
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.mode not in ("adaptive", "enhanced"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 < self.eps_min <= self.eps_total:
            raise ValueError("need 0 < eps_min <= eps_total")
        if not 0 < self.delta_min < 1 or not 0 < self.delta_total < 1:
            raise ValueError("deltas must lie in (0, 1)")
        if self.d is None:
            object.__setattr__(self, "d", distance_threshold(self.T))
        if self.d < 0:
            raise ValueError("d must be >= 0")


@dataclass
class ExplainOutcome:
    """Result of one query.

    ``explanation`` is ``None`` when the budget is exhausted.  ``iterations``
    counts noisy gradient steps; ``trace`` holds the iterates when requested.
    """

    explanation: np.ndarray | None
    mode_tag: ModeTag
    charge: PrivacyParams
    iterations: int = 0
    beta: float | None = None
    sigma: float | None = None
    T_prime: int | None = None
    trace: list | None = None


def _session_rngs(rng) -> tuple[np.random.Generator, np.random.Generator]:
    # independent streams: gradient noise first, mechanism selections second
    seq = rng if isinstance(rng, np.random.SeedSequence) else np.random.SeedSequence(rng)
    noise, select = seq.spawn(2)
    return np.random.default_rng(noise), np.random.default_rng(select)


@dataclass
class AdaptiveSession:
    """A sequential session answering queries with reuse and warm starts.

    Args:
        data: the private explanation dataset.
        w: weight function; its ``c`` scales the noise.
        config: budget and protocol settings.
        seed: integer seed or ``SeedSequence`` for the session's streams.
        rule: composition rule of the accountant.
    """

    data: ExplanationDataset
    w: Weight
    config: AdaptiveConfig
    seed: int | np.random.SeedSequence | None = None
    rule: CompositionRule | None = None
    history: History = field(init=False)
    accountant: BudgetAccountant = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.history = History(self.data.n)
        kwargs = {} if self.rule is None else {"rule": self.rule}
        self.accountant = BudgetAccountant(
            cfg.eps_total, cfg.delta_total, cfg.eps_min, cfg.delta_min, cfg.delta_slack, **kwargs
        )
        self.c = float(getattr(self.w, "c", 1.0))
        self.eps_ite = eps_per_iteration(cfg.eps_min, cfg.delta_min, cfg.T)
        self.sigma_min = self.c * sigma_min_formula(self.data.m, self.eps_ite, cfg.delta_min, cfg.T)
        self.noise_rng, self.select_rng = _session_rngs(self.seed)

    @property
    def d(self) -> float:
        return self.config.d

    def explain(self, z, trace: bool = False) -> ExplainOutcome:
        cfg = self.config
        z = np.asarray(z, dtype=float).reshape(-1)
        if self.accountant.exhausted:
            return ExplainOutcome(None, "exhausted", PrivacyParams(0.0, 0.0))
        near = reuse_lookup(z, self.history, cfg.d)
        if near is not None:
            self.accountant.charge(0.0, 0.0)
            phi = near.explanation.copy()
            self.history.append(HistoryEntry(z, phi, False))
            return ExplainOutcome(phi, "reused", PrivacyParams(0.0, 0.0))

        with_selection = len(self.history) > 0
        # Exhaustion is decided on the worst-case charge, before any data is touched.
        worst = per_query_charge(cfg.T, self.eps_ite, cfg.delta_min, with_selection)
        if not self.accountant.can_afford(worst.eps, worst.delta):
            self.accountant.charge(worst.eps, worst.delta)
            return ExplainOutcome(None, "exhausted", PrivacyParams(0.0, 0.0))

        loss = LocalLoss(z, self.data, self.w)
        sel = select_parameters(
            z, self.history, self.eps_ite, self.sigma_min, self.data, self.w,
            cfg.T, cfg.mode, self.select_rng, loss=loss,
        )
        charge = per_query_charge(sel.T_prime, self.eps_ite, cfg.delta_min, with_selection)
        status = self.accountant.charge(charge.eps, charge.delta)
        if status is ChargeStatus.EXHAUSTED:  # pragma: no cover - guarded above
            return ExplainOutcome(None, "exhausted", PrivacyParams(0.0, 0.0))
        beta_bound = sel.beta if sel.beta is not None else 1.0
        eta_c = learning_rate_c(self.data.n, sel.sigma, beta_bound, sel.T_prime)
        iterates = [] if trace else None
        phi = dp_grad(
            z, self.data, self.w, GDConfig(sel.T_prime, sel.sigma, eta_c, sel.init),
            self.noise_rng, trace=iterates, loss=loss,
        )
        self.history.append(HistoryEntry(z, phi, True))
        return ExplainOutcome(
            phi, "full", charge, sel.T_prime - 1, sel.beta, sel.sigma, sel.T_prime, iterates
        )


@dataclass
class NonAdaptiveSession:
    """Each query is a fresh private run charged ``(eps_min, delta_min)``."""

    data: ExplanationDataset
    w: Weight
    config: AdaptiveConfig
    seed: int | np.random.SeedSequence | None = None
    rule: CompositionRule | None = None
    accountant: BudgetAccountant = field(init=False)

    def __post_init__(self):
        cfg = self.config
        kwargs = {} if self.rule is None else {"rule": self.rule}
        self.accountant = BudgetAccountant(
            cfg.eps_total, cfg.delta_total, cfg.eps_min, cfg.delta_min, cfg.delta_slack, **kwargs
        )
        self.noise_rng, _ = _session_rngs(self.seed)
        self.history = History(self.data.n)

    def explain(self, z, trace: bool = False) -> ExplainOutcome:
        cfg = self.config
        status = self.accountant.charge(cfg.eps_min, cfg.delta_min)
        if status is ChargeStatus.EXHAUSTED:
            return ExplainOutcome(None, "exhausted", PrivacyParams(0.0, 0.0))
        iterates = [] if trace else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            phi, charge = explain_nonadaptive(
                z, self.data, self.w, cfg.eps_min, cfg.delta_min, cfg.T, self.noise_rng, trace=iterates
            )
        self.history.append(HistoryEntry(np.asarray(z, dtype=float), phi, True))
        return ExplainOutcome(phi, "full", charge, cfg.T - 1, None, None, cfg.T, iterates)
