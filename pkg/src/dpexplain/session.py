"""Session orchestration: sharding, protocol switching, and result records."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .adaptive import AdaptiveConfig, AdaptiveSession, ExplainOutcome, History, HistoryEntry, NonAdaptiveSession
from .core import ExplanationDataset, LocalLoss, loss_eval, solve_optimal
from .data import DataError, load_dataset, load_queries
from .dpgd import t_max_bound
from .noninteractive import ProxyDataset, build_proxy, noninteractive_explain
from .weights import WeightSpec

Protocol = Literal["nonadaptive", "adaptive", "enhanced", "noninteractive"]
PROTOCOLS = ("nonadaptive", "adaptive", "enhanced", "noninteractive")
PLOT_KINDS = ("privacy_curve", "loss_histogram", "iteration_histogram", "convergence_trace")
HIST_BINS = 30

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_EXHAUSTED = 4


@dataclass(frozen=True)
class SessionConfig:
    """Everything that defines a session run.

    Args:
        protocol: ``nonadaptive``, ``adaptive``, ``enhanced`` or
            ``noninteractive``.
        eps, delta: total budget.
        eps_min, delta_min: per-query budget.
        T: iteration parameter.
        c: weight scale of the stable weight.
        seed: session seed.
        shards: number of disjoint dataset shards.
        then_noninteractive: answer from the released history once the
            budget runs out instead of stopping.
        oracle: also report the loss excess over a noiseless solution.
        oracle_iters: iterations of the noiseless reference solver.
        trace: record the loss after every gradient step.
    """

    protocol: Protocol = "adaptive"
    eps: float = 1.0
    delta: float = 1e-5
    eps_min: float = 0.01
    delta_min: float = 1e-7
    T: int = 300
    c: float = 1.0
    seed: int = 0
    shards: int = 1
    then_noninteractive: bool = False
    oracle: bool = False
    oracle_iters: int = 50_000
    trace: bool = False

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if self.shards < 1:
            raise ValueError("shards must be >= 1")
        if self.oracle_iters < 1:
            raise ValueError("oracle_iters must be >= 1")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.protocol != "noninteractive":
            self.adaptive_config()

    def adaptive_config(self) -> AdaptiveConfig:
        mode = "enhanced" if self.protocol == "enhanced" else "adaptive"
        return AdaptiveConfig(self.T, self.eps_min, self.delta_min, self.eps, self.delta, mode=mode)


@dataclass
class QueryResult:
    """One line of the results file.

    ``phi`` is ``None`` on the terminal record written when the budget runs
    out.  ``loss`` and ``utility_loss`` are diagnostics evaluated on the
    private data and are not covered by the privacy guarantee.
    """

    query_id: int
    shard: int
    query: list[float]
    phi: list[float] | None
    mode_tag: str
    iterations_used: int
    eps_spent_cumulative: float
    delta_spent_cumulative: float
    loss: float | None = None
    utility_loss: float | None = None
    loss_trace: list[float] | None = None

    def to_json(self) -> str:
        rec = {k: v for k, v in asdict(self).items() if v is not None or k in ("phi", "loss")}
        return json.dumps(rec, separators=(",", ":"))


class _Shard:
    """One shard's protocol state."""

    def __init__(self, index: int, data: ExplanationDataset, w: WeightSpec, cfg: SessionConfig, seed_seq):
        self.index = index
        self.data = data
        self.w = w
        self.proxy: ProxyDataset | None = None
        self.session = None
        if cfg.protocol == "nonadaptive":
            self.session = NonAdaptiveSession(data, w, cfg.adaptive_config(), seed_seq)
        elif cfg.protocol in ("adaptive", "enhanced"):
            self.session = AdaptiveSession(data, w, cfg.adaptive_config(), seed_seq)

    @property
    def spent(self) -> tuple[float, float]:
        if self.session is None:
            return 0.0, 0.0
        acc = self.session.accountant
        return acc.eps_spent, acc.delta_spent

    @property
    def history(self) -> History:
        return self.session.history


class SessionRunner:
    """Routes queries to shards and turns outcomes into result records.

    Query ``i`` goes to shard ``i mod shards``; shard ``k`` holds the points
    with index ``k mod shards``.  Reported spend is the maximum over shards.
    """

    def __init__(self, config: SessionConfig, data: ExplanationDataset | None, history: History | None = None):
        self.config = config
        self.w = WeightSpec(config.c)
        self.data = data
        self.finished = False
        self.next_id = 0
        self.exhausted_before_first = False
        if config.protocol == "noninteractive":
            if history is None or not len(history):
                raise ValueError("the noninteractive protocol needs a non-empty history")
            self.shards = []
            self.proxy = build_proxy(history)
            return
        if data is None:
            raise ValueError(f"protocol {config.protocol} needs a dataset")
        if data.m < config.shards:
            raise ValueError("more shards than data points")
        seeds = np.random.SeedSequence(config.seed).spawn(config.shards)
        self.shards = [
            _Shard(k, data.subset(np.arange(k, data.m, config.shards)), self.w, config, seeds[k])
            for k in range(config.shards)
        ]
        if config.protocol == "nonadaptive":
            sub = self.shards[0].data
            cap = t_max_bound(sub.m, sub.n, config.eps_min, config.delta_min)
            if config.T > cap:
                warnings.warn(
                    f"T={config.T} exceeds the iteration cap {cap} of the utility guarantee",
                    RuntimeWarning,
                    stacklevel=2,
                )

    def spent(self) -> tuple[float, float]:
        if not self.shards:
            return 0.0, 0.0
        eps = max(s.spent[0] for s in self.shards)
        delta = max(s.spent[1] for s in self.shards)
        return eps, delta

    def _diagnostics(self, rec: QueryResult, z, data: ExplanationDataset | None, phi) -> None:
        if data is None or phi is None:
            return
        rec.loss = loss_eval(phi, z, data, self.w)
        if self.config.oracle:
            ref = solve_optimal(z, data, self.w, oracle_iters=self.config.oracle_iters)
            rec.utility_loss = rec.loss - loss_eval(ref, z, data, self.w)

    def _record(self, qid, shard, z, outcome: ExplainOutcome, data) -> QueryResult:
        eps, delta = self.spent()
        phi = None if outcome.explanation is None else outcome.explanation
        rec = QueryResult(
            qid, shard, [float(v) for v in z],
            None if phi is None else [float(v) for v in phi],
            outcome.mode_tag, int(outcome.iterations), eps, delta,
        )
        self._diagnostics(rec, z, data, phi)
        if outcome.trace:
            loss = LocalLoss(z, data, self.w)
            rec.loss_trace = [loss.value(p) for p in outcome.trace]
        return rec

    def _noninteractive(self, qid, shard_index, z, proxy, data) -> QueryResult:
        phi = noninteractive_explain(z, proxy, self.w, oracle_iters=self.config.oracle_iters)
        eps, delta = self.spent()
        rec = QueryResult(qid, shard_index, [float(v) for v in z], [float(v) for v in phi], "noninteractive", 0, eps, delta)
        self._diagnostics(rec, z, data, phi)
        return rec

    def submit(self, z) -> list[QueryResult]:
        """Answer one query; returns the records it produced (possibly none)."""
        z = np.asarray(z, dtype=float).reshape(-1)
        qid = self.next_id
        self.next_id += 1
        if self.finished:
            return []
        if self.config.protocol == "noninteractive":
            return [self._noninteractive(qid, 0, z, self.proxy, self.data)]
        shard = self.shards[qid % len(self.shards)]
        if shard.proxy is not None:
            return [self._noninteractive(qid, shard.index, z, shard.proxy, shard.data)]
        outcome = shard.session.explain(z, trace=self.config.trace)
        if outcome.mode_tag != "exhausted":
            return [self._record(qid, shard.index, z, outcome, shard.data)]
        if qid == 0:
            self.exhausted_before_first = True
        out = [self._record(qid, shard.index, z, outcome, None)]
        if self.config.then_noninteractive and len(shard.history):
            shard.proxy = build_proxy(shard.history)
            out.append(self._noninteractive(qid, shard.index, z, shard.proxy, shard.data))
        else:
            self.finished = True
        return out

    def run(self, queries: Iterable) -> list[QueryResult]:
        records = []
        for z in queries:
            if self.finished:
                break
            records.extend(self.submit(z))
        return records


# --- files ----------------------------------------------------------------


def write_results(path, records: Iterable[QueryResult]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_results(path) -> list[dict]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from exc
    return out


def history_from_results(records: Iterable[dict]) -> History:
    """Rebuild a history from result records that carry an explanation."""
    hist = None
    for rec in records:
        if rec.get("phi") is None:
            continue
        if hist is None:
            hist = History(len(rec["query"]))
        hist.append(HistoryEntry(np.array(rec["query"]), np.array(rec["phi"]), rec.get("mode_tag") == "full"))
    return hist if hist is not None else History()


def run_session(config: SessionConfig, dataset_path, queries_path, out_path, history_path=None) -> int:
    """Run a whole session from files; returns a process exit status.

    Raises :class:`dpexplain.data.DataError` for unreadable inputs and
    ``ValueError`` for invalid configurations.
    """
    data = load_dataset(dataset_path) if dataset_path is not None else None
    queries = load_queries(queries_path)
    if data is not None and queries.shape[0] and queries.shape[1] != data.n:
        raise DataError(f"queries have {queries.shape[1]} features, dataset has {data.n}")
    history = None
    if config.protocol == "noninteractive":
        if history_path is None:
            raise ValueError("the noninteractive protocol needs --history")
        history = history_from_results(read_results(history_path))
    runner = SessionRunner(config, data, history)
    records = runner.run(queries)
    write_results(out_path, records)
    return EXIT_EXHAUSTED if runner.exhausted_before_first else EXIT_OK


# --- plot data ------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def _histogram(values) -> list[tuple[float, float]]:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        hi = lo + 1.0
    counts, edges = np.histogram(values, bins=HIST_BINS, range=(lo, hi))
    freq = counts / counts.sum()
    return list(zip(edges[:-1], freq))


def plot_rows(records: list[dict], kind: str) -> list[str]:
    """Two-column text rows for one plot kind."""
    answered = [r for r in records if r.get("phi") is not None]
    if kind == "privacy_curve":
        return [f"{r['query_id'] + 1} {_fmt(r['eps_spent_cumulative'])}" for r in answered]
    if kind == "loss_histogram":
        vals = [r["loss"] for r in answered if r.get("loss") is not None]
        return [f"{_fmt(a)} {_fmt(b)}" for a, b in _histogram(vals)]
    if kind == "iteration_histogram":
        return [f"{_fmt(a)} {_fmt(b)}" for a, b in _histogram([r["iterations_used"] for r in answered])]
    if kind == "convergence_trace":
        rows = []
        for r in answered:
            trace = r.get("loss_trace")
            if not trace:
                continue
            if rows:
                rows.append("")
            rows.extend(f"{t} {_fmt(v)}" for t, v in enumerate(trace))
        return rows
    raise ValueError(f"unknown plot kind {kind!r}")


def emit_plot_data(results_path, kind: str, out_path) -> int:
    rows = plot_rows(read_results(results_path), kind)
    Path(out_path).write_text("".join(row + "\n" for row in rows), encoding="utf-8")
    return EXIT_OK
