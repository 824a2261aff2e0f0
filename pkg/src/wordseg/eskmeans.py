"""Iterative DP re-segmentation with K-means refitting over candidate boundaries.

Starting from a high-recall candidate boundary set, the corpus is segmented
by dynamic programming against a fixed codebook, then the codebook is refit
on the chosen segments (Lloyd steps warm-started from the previous one), and
the two steps alternate until the segmentation stops changing.  Segment
costs are duration-weighted by default, so the joint objective

    J = sum over segments of duration * min_k ||z - mu_k||^2

is non-increasing across both steps.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import io
from ._parallel import parallel_map
from .embed import PCAModel, SegmentRef, apply_pca, embed_boundary_segments
from .kmeans import (
    AssignmentTable,
    Codebook,
    KMeansResult,
    assign,
    build_lexicon,
    kmeans_fit,
    lloyd_steps,
)
from .types import BoundarySet, ClassFile, FeatureMatrix, Manifest

logger = logging.getLogger(__name__)

STAGES = ("boundary_detection", "pca", "embedding", "kmeans", "dp")


@dataclass
class ESKMeansConfig:
    n_clusters: int
    max_outer_iters: int = 10
    max_span: int = 6
    seed: int = 0
    duration_weighting: bool = True
    init_kmeans_iters: int = 25
    inner_kmeans_iters: int = 5
    batch_size: int | None = None

    def __post_init__(self):
        if self.n_clusters < 1:
            raise ValueError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if self.max_span < 1:
            raise ValueError(f"max_span must be >= 1, got {self.max_span}")
        if self.max_outer_iters < 0:
            raise ValueError(f"max_outer_iters must be >= 0, got {self.max_outer_iters}")


@dataclass
class SegmentationState:
    """Chosen boundary subsets plus convergence bookkeeping."""

    chosen: dict[str, BoundarySet]
    outer_iters_run: int = 0
    joint_objective: float = float("nan")
    converged: bool = False
    j_after_dp: list[float] = field(default_factory=list)
    j_after_refit: list[float] = field(default_factory=list)
    fallback_utts: list[str] = field(default_factory=list)


@dataclass
class DPResult:
    boundaries: BoundarySet
    cost: float
    fell_back: bool = False


class StageTimer:
    """Accumulates wall-clock seconds per pipeline stage."""

    def __init__(self):
        self.seconds = {name: 0.0 for name in STAGES}

    @contextmanager
    def stage(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start


def runtime_report(timer: StageTimer) -> dict:
    """Machine-readable per-stage wall-clock table."""
    stages = {name: timer.seconds.get(name, 0.0) for name in STAGES}
    stages.update({k: v for k, v in timer.seconds.items() if k not in STAGES})
    return {"stages": stages, "total_s": sum(stages.values())}


def segment_cost(
    z: np.ndarray, duration_frames: int, codebook: Codebook, duration_weighting: bool = True
) -> float:
    """Cost of one segment: w * min_k ||z - mu_k||^2, w = duration or 1."""
    diff = codebook.centroids - np.asarray(z, dtype=np.float64)
    best = float(np.einsum("ij,ij->i", diff, diff).min())
    return (duration_frames if duration_weighting else 1.0) * best


def _candidate_segment_costs(
    projected: FeatureMatrix, candidates: BoundarySet, codebook: Codebook, config: ESKMeansConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cost of every candidate segment spanning at most max_span intervals.

    Returns (starts, ends, costs) as flat arrays over candidate-index pairs
    i < j <= i + max_span.  Zero-norm (degenerate) segments get infinite cost.
    """
    b = np.asarray(candidates.frames, dtype=np.int64)
    m = len(b) - 1
    starts_list = []
    ends_list = []
    for j in range(1, m + 1):
        lo = max(0, j - config.max_span)
        starts_list.extend(range(lo, j))
        ends_list.extend([j] * (j - lo))
    starts = np.asarray(starts_list, dtype=np.int64)
    ends = np.asarray(ends_list, dtype=np.int64)

    prefix = np.zeros((projected.n_frames + 1, projected.dim), dtype=np.float64)
    np.cumsum(projected.data.astype(np.float64), axis=0, out=prefix[1:])
    durations = (b[ends] - b[starts]).astype(np.float64)
    means = (prefix[b[ends]] - prefix[b[starts]]) / durations[:, None]
    norms = np.linalg.norm(means, axis=1)
    ok = norms > 0
    embeds = np.zeros_like(means)
    embeds[ok] = means[ok] / norms[ok, None]

    p2 = np.einsum("ij,ij->i", embeds, embeds)
    c2 = np.einsum("ij,ij->i", codebook.centroids, codebook.centroids)
    dists = p2[:, None] - 2.0 * (embeds @ codebook.centroids.T) + c2[None, :]
    best = np.maximum(dists.min(axis=1), 0.0)
    costs = best * durations if config.duration_weighting else best
    costs[~ok] = np.inf
    return starts, ends, costs


def dp_segment(
    projected: FeatureMatrix,
    candidates: BoundarySet,
    codebook: Codebook,
    config: ESKMeansConfig,
) -> DPResult:
    """Select the cost-minimal boundary subset by dynamic programming.

    Over candidate indices b_0=0 < ... < b_m=T, computes
    alpha[j] = min_{max(0, j-max_span) <= i < j} alpha[i] + cost(b_i, b_j)
    and backtracks the optimal subset.  Ties prefer the smaller i (the longer
    final segment, hence fewer boundaries).  If no finite path exists, falls
    back to the full candidate set and flags the utterance.
    """
    m = candidates.n_segments
    starts, ends, costs = _candidate_segment_costs(projected, candidates, codebook, config)
    cost_of = {}
    for i, j, c in zip(starts, ends, costs):
        cost_of[(int(i), int(j))] = float(c)

    alpha = np.full(m + 1, np.inf)
    alpha[0] = 0.0
    back = np.full(m + 1, -1, dtype=np.int64)
    for j in range(1, m + 1):
        best = np.inf
        best_i = -1
        for i in range(max(0, j - config.max_span), j):
            v = alpha[i] + cost_of[(i, j)]
            if v < best:
                best = v
                best_i = i
        alpha[j] = best
        back[j] = best_i

    if not np.isfinite(alpha[m]):
        logger.warning("%s: no finite DP path; keeping all candidate boundaries", candidates.utt_id)
        total = sum(cost_of[(i, i + 1)] for i in range(m))
        return DPResult(boundaries=candidates, cost=float(total), fell_back=True)

    idx = [m]
    while idx[-1] != 0:
        idx.append(int(back[idx[-1]]))
    idx.reverse()
    frames = tuple(candidates.frames[i] for i in idx)
    chosen = BoundarySet(utt_id=candidates.utt_id, frames=frames, total_frames=candidates.total_frames)
    return DPResult(boundaries=chosen, cost=float(alpha[m]))


def _embed_chosen(
    manifest: Manifest,
    projected_by_utt: dict[str, FeatureMatrix],
    chosen: dict[str, BoundarySet],
) -> tuple[list[SegmentRef], np.ndarray, np.ndarray]:
    """Embeddings of the chosen segments in manifest order (degenerates dropped)."""
    refs: list[SegmentRef] = []
    vecs = []
    for entry in manifest.entries:
        for emb in embed_boundary_segments(projected_by_utt[entry.utt_id], chosen[entry.utt_id]):
            refs.append(emb.ref)
            vecs.append(emb.z)
    if not vecs:
        raise ValueError("no embeddable segments in the corpus")
    z = np.vstack(vecs)
    durations = np.asarray([r.duration_frames for r in refs], dtype=np.float64)
    return refs, z, durations


def _weighted_objective(
    z: np.ndarray, durations: np.ndarray, codebook: Codebook, config: ESKMeansConfig
) -> tuple[float, AssignmentTable]:
    table = assign(z, codebook)
    w = durations if config.duration_weighting else np.ones_like(durations)
    return float((table.sqdists * w).sum()), table


def eskmeans_fit(
    manifest: Manifest,
    candidates: dict[str, BoundarySet],
    pca: PCAModel,
    config: ESKMeansConfig,
    threads: int = 1,
    timer: StageTimer | None = None,
) -> tuple[SegmentationState, Codebook, ClassFile]:
    """Alternate DP re-segmentation and K-means refitting over the corpus.

    The initial segmentation keeps all candidate boundaries and is clustered
    exactly like the plain pipeline (with max_outer_iters=0 the resulting
    lexicon is identical to it).  Each outer iteration re-segments every
    utterance against the fixed codebook, then warm-starts Lloyd steps on
    the new segment embeddings.
    """
    if not manifest.entries:
        raise ValueError("empty manifest")
    for utt in manifest.utt_ids:
        if utt not in candidates:
            raise KeyError(f"no candidate boundaries for utterance {utt!r}")
    timer = timer or StageTimer()

    n_candidates = sum(len(c.frames) - 2 for c in candidates.values())
    logger.info(
        "candidate boundaries: %d interior over %d utterances (%.2f/utt)",
        n_candidates,
        len(candidates),
        n_candidates / len(candidates),
    )

    with timer.stage("embedding"):
        projected = {fm.utt_id: apply_pca(pca, fm) for fm in io.load_corpus_features(manifest)}
        chosen = dict(candidates)
        refs, z, durations = _embed_chosen(manifest, projected, chosen)

    with timer.stage("kmeans"):
        km: KMeansResult = kmeans_fit(
            z, config.n_clusters, seed=config.seed, max_iters=config.init_kmeans_iters
        )
    codebook = km.codebook
    state = SegmentationState(chosen=chosen)

    entries = manifest.entries
    if config.batch_size is None or config.batch_size >= len(entries):
        batches = [entries]
    else:
        bs = max(1, config.batch_size)
        batches = [entries[i : i + bs] for i in range(0, len(entries), bs)]

    for outer in range(1, config.max_outer_iters + 1):
        state.outer_iters_run = outer
        iter_changed = False
        dp_cost_total = 0.0
        for batch in batches:
            with timer.stage("dp"):
                results = parallel_map(
                    lambda e: dp_segment(projected[e.utt_id], candidates[e.utt_id], codebook, config),
                    batch,
                    threads=threads,
                )
            batch_changed = False
            for entry, res in zip(batch, results):
                dp_cost_total += res.cost
                if res.fell_back and entry.utt_id not in state.fallback_utts:
                    state.fallback_utts.append(entry.utt_id)
                if not set(res.boundaries.frames) <= set(candidates[entry.utt_id].frames):
                    raise AssertionError(f"{entry.utt_id}: chosen boundaries escaped the candidate set")
                if res.boundaries != chosen[entry.utt_id]:
                    batch_changed = True
                    chosen[entry.utt_id] = res.boundaries
            if batch_changed:
                iter_changed = True
                with timer.stage("embedding"):
                    refs, z, durations = _embed_chosen(manifest, projected, chosen)
                with timer.stage("kmeans"):
                    weights = durations if config.duration_weighting else None
                    km = lloyd_steps(z, codebook, max_iters=config.inner_kmeans_iters, weights=weights)
                codebook = km.codebook

        if len(batches) == 1:
            state.j_after_dp.append(dp_cost_total)
        else:
            j_now, _ = _weighted_objective(z, durations, codebook, config)
            state.j_after_dp.append(j_now)
        if iter_changed:
            j_refit, _ = _weighted_objective(z, durations, codebook, config)
            state.j_after_refit.append(j_refit)
        logger.info(
            "outer iteration %d: J=%.6g changed=%s", outer, state.j_after_dp[-1], iter_changed
        )
        if not iter_changed:
            state.converged = True
            break

    state.chosen = chosen
    with timer.stage("kmeans"):
        final_j, table = _weighted_objective(z, durations, codebook, config)
    state.joint_objective = final_j
    classfile = build_lexicon(manifest, refs, table)
    return state, codebook, classfile
