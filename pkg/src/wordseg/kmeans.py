"""Seeded, deterministic K-means over segment embeddings.

Plain Lloyd iterations from k-means++ initialization.  All randomness flows
through an explicit seed; a fixed seed gives a bit-identical codebook across
runs.  Empty clusters are repaired by reseeding with the point currently
farthest from its centroid, which keeps K effective clusters even when K is
large relative to N.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .boundaries import frames_to_seconds
from .embed import SegmentRef
from .types import ClassFile, FeatureMatrix, Manifest, Segment

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 25
_CHUNK_ROWS = 8192


@dataclass
class Codebook:
    """K x M matrix of cluster centroids."""

    centroids: np.ndarray

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2 or self.centroids.shape[0] < 1:
            raise ValueError(f"centroids must be a K x M matrix with K >= 1, got {self.centroids.shape}")
        if not np.all(np.isfinite(self.centroids)):
            raise ValueError("centroids contain non-finite values")

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


@dataclass
class AssignmentTable:
    """Per-point cluster label and squared Euclidean distance to its centroid."""

    labels: np.ndarray
    sqdists: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.sqdists = np.asarray(self.sqdists, dtype=np.float64)
        if self.labels.shape != self.sqdists.shape:
            raise ValueError("labels and sqdists must have the same length")
        if len(self.labels) and (self.labels.min() < 0 or self.sqdists.min() < 0):
            raise ValueError("labels must be >= 0 and distances >= 0")


@dataclass
class KMeansResult:
    codebook: Codebook
    assignments: AssignmentTable
    iters_run: int
    objective: float


def _pairwise_sqdist(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances via the expansion form, clamped at zero."""
    p2 = np.einsum("ij,ij->i", points, points)
    c2 = np.einsum("ij,ij->i", centroids, centroids)
    d = p2[:, None] - 2.0 * (points @ centroids.T) + c2[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def assign(points: np.ndarray, codebook: Codebook) -> AssignmentTable:
    """Assign each point to its nearest centroid; ties go to the lowest index."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    labels = np.empty(n, dtype=np.int64)
    sqdists = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS, n)
        d = _pairwise_sqdist(points[lo:hi], codebook.centroids)
        labels[lo:hi] = np.argmin(d, axis=1)
        sqdists[lo:hi] = d[np.arange(hi - lo), labels[lo:hi]]
    return AssignmentTable(labels=labels, sqdists=sqdists)


def objective(points: np.ndarray, codebook: Codebook, assignments: AssignmentTable) -> float:
    """Sum of squared distances of each point to its assigned centroid."""
    points = np.asarray(points, dtype=np.float64)
    diff = points - codebook.centroids[assignments.labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++ (D^2 sampling).

    When every remaining point has zero distance to the chosen set (K > N,
    or mass duplicates), further centroids duplicate uniformly chosen points.
    """
    n = len(points)
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    d2 = np.einsum("ij,ij->i", points - centroids[0], points - centroids[0])
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            probs = d2 / total
            idx = int(rng.choice(n, p=probs))
        else:
            idx = int(rng.integers(n))
        centroids[j] = points[idx]
        np.minimum(d2, np.einsum("ij,ij->i", points - centroids[j], points - centroids[j]), out=d2)
    return centroids


def _update_centroids(
    points: np.ndarray,
    labels: np.ndarray,
    k: int,
    old_centroids: np.ndarray,
    weights: np.ndarray | None,
) -> np.ndarray:
    """(Weighted) mean per cluster; empty clusters keep their old centroid."""
    if weights is None:
        w = np.ones(len(points), dtype=np.float64)
        wp = points
    else:
        w = np.asarray(weights, dtype=np.float64)
        wp = points * w[:, None]
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    uniq, starts = np.unique(sorted_labels, return_index=True)
    sums = np.add.reduceat(wp[order], starts, axis=0)
    wsums = np.add.reduceat(w[order], starts)
    centroids = old_centroids.copy()
    centroids[uniq] = sums / wsums[:, None]
    return centroids


def _repair_empty(
    centroids: np.ndarray, labels: np.ndarray, sqdists: np.ndarray, points: np.ndarray, k: int
) -> bool:
    """Reseed empty clusters with the farthest point from its centroid.

    Mutates centroids/labels/sqdists in place; returns True if anything
    changed.  Stops early when no point with positive distance remains
    (every point already sits on a centroid).
    """
    counts = np.bincount(labels, minlength=k)
    changed = False
    for empty in np.flatnonzero(counts == 0):
        far = int(np.argmax(sqdists))
        if sqdists[far] <= 0:
            break
        counts[labels[far]] -= 1
        labels[far] = empty
        counts[empty] += 1
        centroids[empty] = points[far]
        sqdists[far] = 0.0
        changed = True
    return changed


def lloyd_steps(
    points: np.ndarray,
    codebook: Codebook,
    max_iters: int,
    weights: np.ndarray | None = None,
    half_step_objectives: list[float] | None = None,
) -> KMeansResult:
    """Run Lloyd iterations from an existing codebook (warm start).

    Stops on assignment fixpoint or after max_iters.  With weights, the
    update step takes weighted means, so the weighted objective is
    non-increasing as well.  If half_step_objectives is a list, the exact
    objective after every update and every assignment half-step is appended
    to it (the recorded sequence is non-increasing).
    """
    points = np.asarray(points, dtype=np.float64)
    if len(points) == 0:
        raise ValueError("cannot run K-means on zero points")
    if not np.all(np.isfinite(points)):
        raise ValueError("input points contain non-finite values")
    w = None if weights is None else np.asarray(weights, dtype=np.float64)

    def record(centroids: np.ndarray, labels: np.ndarray) -> None:
        if half_step_objectives is None:
            return
        diff = points - centroids[labels]
        sq = np.einsum("ij,ij->i", diff, diff)
        half_step_objectives.append(float(sq.sum() if w is None else (sq * w).sum()))

    k = codebook.n_clusters
    centroids = codebook.centroids.copy()
    prev_labels = None
    iters = 0
    table = assign(points, Codebook(centroids))
    for _ in range(max_iters):
        iters += 1
        old_labels = table.labels
        centroids = _update_centroids(points, table.labels, k, centroids, w)
        record(centroids, old_labels)
        table = assign(points, Codebook(centroids))
        _repair_empty(centroids, table.labels, table.sqdists, points, k)
        record(centroids, table.labels)
        if prev_labels is not None and np.array_equal(table.labels, prev_labels):
            break
        prev_labels = table.labels.copy()
    final = Codebook(centroids)
    table = assign(points, final)
    return KMeansResult(
        codebook=final,
        assignments=table,
        iters_run=iters,
        objective=float(table.sqdists.sum() if w is None else (table.sqdists * w).sum()),
    )


def kmeans_fit(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> KMeansResult:
    """Fit K-means with seeded k-means++ initialization and Lloyd iterations.

    If K > N, the K - N extra centroids duplicate randomly chosen points.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ValueError(f"need a nonempty N x M matrix, got shape {points.shape}")
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")
    if not np.all(np.isfinite(points)):
        raise ValueError("input points contain non-finite values")
    rng = np.random.default_rng(seed)
    init = Codebook(_kmeanspp_init(points, k, rng))
    return lloyd_steps(points, init, max_iters=max_iters)


def build_lexicon(
    manifest: Manifest, segments: list[SegmentRef], assignments: AssignmentTable
) -> ClassFile:
    """Group segments by cluster id, converting frame spans to seconds.

    segments must be the refs that were actually embedded (degenerate
    segments having been dropped), aligned row-for-row with assignments.
    """
    if len(segments) != len(assignments.labels):
        raise ValueError(
            f"{len(segments)} segments vs {len(assignments.labels)} assignments"
        )
    rates = {e.utt_id: e.frame_rate_hz for e in manifest.entries}
    classfile = ClassFile()
    for ref, label in zip(segments, assignments.labels):
        rate = rates[ref.utt_id]
        classfile.add(
            int(label),
            Segment(
                utt_id=ref.utt_id,
                onset_s=frames_to_seconds(ref.start_frame, rate),
                offset_s=frames_to_seconds(ref.end_frame, rate),
            ),
        )
    return classfile


def save_codebook(
    codebook: Codebook, out_dir: str | os.PathLike, seed: int, iters_run: int, objective_value: float
) -> None:
    out_dir = Path(out_dir)
    io.save_features(
        FeatureMatrix(utt_id="codebook", frame_rate_hz=1.0, data=codebook.centroids),
        out_dir / "codebook.ftpk",
    )
    sidecar = {
        "K": codebook.n_clusters,
        "seed": seed,
        "iters_run": iters_run,
        "objective": objective_value,
    }
    with open(out_dir / "codebook.json", "w", encoding="utf-8") as f:
        json.dump(sidecar, f, indent=2)
        f.write("\n")


def load_codebook(out_dir: str | os.PathLike) -> tuple[Codebook, dict]:
    out_dir = Path(out_dir)
    with open(out_dir / "codebook.json", encoding="utf-8") as f:
        sidecar = json.load(f)
    centroids = io.load_features(out_dir / "codebook.ftpk").data
    return Codebook(centroids), sidecar
