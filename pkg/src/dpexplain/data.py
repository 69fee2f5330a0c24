"""CSV ingestion, synthetic datasets, and query streams."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.spatial.distance import pdist

from .core import ExplanationDataset
from .weights import radius_r

ModelKind = Literal["linear", "logistic_sign", "forest_stub"]
StreamKind = Literal["random", "dense_cluster", "sparse_cross_cluster", "clustered_within_d"]


class DataError(ValueError):
    """Malformed or out-of-range input data."""


# --- CSV ------------------------------------------------------------------


def _read_rows(path, with_label: bool):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise DataError("empty dataset")
        header = [h.strip() for h in header]
        n = len(header) - (1 if with_label else 0)
        expected = [f"f{i + 1}" for i in range(n)] + (["label"] if with_label else [])
        if n < 1 or header != expected:
            raise DataError(f"row 1: header must be {','.join(expected[:3])}...{expected[-1]}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise DataError(f"row {lineno}: {exc}") from exc
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"row {lineno}: non-finite value")
            if with_label and abs(vals[-1]) > 1.0:
                raise DataError(f"row {lineno}: label {vals[-1]} outside [-1, 1]")
            rows.append(vals)
    if not rows:
        raise DataError("empty dataset")
    return np.array(rows, dtype=float)


def load_dataset(path) -> ExplanationDataset:
    """Read ``f1,...,fn,label`` CSV into a validated dataset."""
    arr = _read_rows(path, with_label=True)
    return ExplanationDataset(arr[:, :-1], arr[:, -1])


def load_queries(path) -> np.ndarray:
    """Read ``f1,...,fn`` CSV into an ``(h, n)`` array.  A header-only file gives zero rows."""
    try:
        return _read_rows(path, with_label=False)
    except DataError as exc:
        if str(exc) == "empty dataset" and Path(path).read_text(encoding="utf-8").strip():
            header = Path(path).read_text(encoding="utf-8").splitlines()[0].split(",")
            return np.empty((0, len(header)))
        raise


def write_dataset(path, data: ExplanationDataset) -> None:
    header = [f"f{i + 1}" for i in range(data.n)] + ["label"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for x, y in zip(data.points, data.labels):
            out.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def write_queries(path, queries) -> None:
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow([f"f{i + 1}" for i in range(queries.shape[1])])
        for q in queries:
            out.writerow([repr(float(v)) for v in q])


def check_scale(data: ExplanationDataset, c: float = 1.0, sample: int = 1000, seed: int = 0) -> float:
    """Warn when points are so spread out that the weights nearly vanish.

    Returns the (sampled) median pairwise distance.
    """
    pts = data.points
    if pts.shape[0] < 2:
        return 0.0
    if pts.shape[0] > sample:
        idx = np.random.default_rng(seed).choice(pts.shape[0], sample, replace=False)
        pts = pts[idx]
    med = float(np.median(pdist(pts)))
    if med > 10.0 * radius_r(c):
        warnings.warn(
            f"median pairwise distance {med:.3g} exceeds 10 r = {10 * radius_r(c):.3g}; "
            "standardize the features",
            RuntimeWarning,
            stacklevel=2,
        )
    return med


# --- synthetic data -------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian-mixture dataset labelled by a built-in black box.

    ``center_scale`` is the standard deviation of the cluster centers around
    the origin, ``cluster_std`` the per-coordinate spread inside a cluster.
    """

    n: int = 10
    m: int = 10_000
    clusters: int = 5
    cluster_std: float = 0.1
    model: ModelKind = "linear"
    seed: int = 0
    center_scale: float = 0.5

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.m >= self.clusters >= 1:
            raise ValueError("need m >= clusters >= 1")
        if self.cluster_std < 0 or self.center_scale < 0:
            raise ValueError("scales must be >= 0")
        if self.model not in ("linear", "logistic_sign", "forest_stub"):
            raise ValueError(f"unknown model {self.model!r}")


@dataclass(frozen=True)
class SyntheticModel:
    """Ground truth behind a synthetic dataset.

    ``g`` is the linear direction used by ``linear`` and ``logistic_sign``;
    ``stumps`` holds ``(feature, threshold, vote)`` rows for ``forest_stub``.
    """

    kind: ModelKind
    g: np.ndarray
    centers: np.ndarray
    assignments: np.ndarray
    stumps: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "linear":
            return np.clip(x @ self.g, -1.0, 1.0)
        if self.kind == "logistic_sign":
            # sign(sigmoid(s) - 1/2) is sign(s); ties go to +1
            return np.where(x @ self.g >= 0, 1.0, -1.0)
        feat = self.stumps[:, 0].astype(int)
        votes = np.where(x[:, feat] > self.stumps[:, 1], self.stumps[:, 2], -self.stumps[:, 2])
        return votes.mean(axis=1)


def gen_synthetic(spec: SyntheticSpec, stumps: int = 25) -> tuple[ExplanationDataset, SyntheticModel]:
    """Sample a labelled mixture; identical output for identical specs.

    Cluster sizes are balanced (they differ by at most one point).
    """
    rng = np.random.default_rng(spec.seed)
    centers = rng.normal(0.0, spec.center_scale, size=(spec.clusters, spec.n))
    assignments = rng.permutation(np.arange(spec.m) % spec.clusters)
    points = centers[assignments] + rng.normal(0.0, spec.cluster_std, size=(spec.m, spec.n))
    g = rng.normal(size=spec.n)
    g /= np.linalg.norm(g)
    table = np.empty((0, 3))
    if spec.model == "forest_stub":
        feat = rng.integers(spec.n, size=stumps)
        thresh = rng.choice(points.shape[0], size=stumps)
        table = np.column_stack([feat, points[thresh, feat], rng.choice([-1.0, 1.0], size=stumps)])
    model = SyntheticModel(spec.model, g, centers, assignments, table)
    return ExplanationDataset(points, model.predict(points)), model


# --- query streams --------------------------------------------------------


@dataclass(frozen=True)
class QueryStream:
    """How to draw a sequence of query points.

    ``radius`` is used by ``clustered_within_d`` (queries are uniform in the
    ball of that radius around one dataset point); ``clusters`` is used when
    no cluster assignment is passed to :func:`gen_queries`.
    """

    kind: StreamKind = "random"
    count: int = 100
    seed: int = 0
    radius: float = 0.0
    clusters: int = 5

    def __post_init__(self):
        if self.kind not in ("random", "dense_cluster", "sparse_cross_cluster", "clustered_within_d"):
            raise ValueError(f"unknown stream kind {self.kind!r}")
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")


def _uniform_ball(rng: np.random.Generator, count: int, n: int, radius: float) -> np.ndarray:
    dirs = rng.normal(size=(count, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = radius * rng.random(count) ** (1.0 / n)
    return dirs * radii[:, None]


def cluster_labels(data: ExplanationDataset, clusters: int, seed: int = 0) -> np.ndarray:
    """K-means cluster index of every point."""
    _, labels = kmeans2(data.points, clusters, seed=seed, minit="++")
    return labels


def gen_queries(stream: QueryStream, data: ExplanationDataset, assignments=None) -> np.ndarray:
    """Draw ``stream.count`` query points from or around the dataset.

    Args:
        stream: stream description.
        data: dataset the queries are drawn from.
        assignments: cluster index per data point, e.g.
            ``SyntheticModel.assignments``; k-means is used when omitted.
    """
    rng = np.random.default_rng(stream.seed)
    pts = data.points
    if stream.kind == "random":
        return pts[rng.integers(data.m, size=stream.count)].copy()
    if stream.kind == "clustered_within_d":
        anchor = pts[rng.integers(data.m)]
        return anchor + _uniform_ball(rng, stream.count, data.n, stream.radius)
    if assignments is None:
        assignments = cluster_labels(data, stream.clusters, stream.seed)
    assignments = np.asarray(assignments)
    ids = np.unique(assignments)
    members = [np.flatnonzero(assignments == k) for k in ids]
    if stream.kind == "dense_cluster":
        spreads = [np.mean(np.linalg.norm(pts[mem] - pts[mem].mean(axis=0), axis=1)) for mem in members]
        # most points first, tighter spread breaks ties
        k = min(range(len(ids)), key=lambda i: (-members[i].size, spreads[i]))
        return pts[rng.choice(members[k], size=stream.count)].copy()
    order = [members[i % len(members)] for i in range(stream.count)]
    return np.array([pts[rng.choice(mem)] for mem in order])
