"""Zero-cost explanations fitted to previously released explanations.

Every earlier query ``z_j`` with released explanation ``phi_j`` becomes a
proxy record labelled ``phi_j . z_j``.  New queries are answered by fitting
the local loss on these proxy records only, so the private dataset is never
touched again and no budget is spent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adaptive import History, HistoryEntry
from .core import ExplanationDataset, Weight, solve_exact, solve_optimal


@dataclass(frozen=True)
class ProxyDataset:
    """Past queries relabelled by their own released explanations."""

    points: np.ndarray
    labels: np.ndarray

    def as_dataset(self) -> ExplanationDataset:
        # proxy labels are bounded by |z_j|, not by 1
        return ExplanationDataset(self.points, self.labels, label_bound=None)


def build_proxy(history: History | list[HistoryEntry]) -> ProxyDataset:
    """One proxy record per history entry, whatever its reuse flag."""
    entries = list(history)
    if not entries:
        raise ValueError("cannot build a proxy dataset from an empty history")
    points = np.array([np.asarray(e.query, dtype=float) for e in entries])
    phis = np.array([np.asarray(e.explanation, dtype=float) for e in entries])
    labels = np.einsum("ij,ij->i", phis, points)
    if not np.all(np.isfinite(labels)):
        raise ValueError("proxy labels must be finite")
    return ProxyDataset(points, labels)


def noninteractive_explain(
    z, proxy: ProxyDataset, w: Weight, oracle_iters: int = 50_000, exact: bool = False
) -> np.ndarray:
    """Explain ``z`` from the proxy records alone.

    The loss is averaged over the proxy records.  ``exact`` swaps the
    iterative solver for the closed-form KKT solution.
    """
    data = proxy.as_dataset()
    if exact:
        return solve_exact(z, data, w)
    return solve_optimal(z, data, w, oracle_iters=oracle_iters)
