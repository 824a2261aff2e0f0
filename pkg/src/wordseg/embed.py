"""PCA projection and fixed-dimensional segment embeddings.

A variable-length segment of projected frames is embedded by averaging the
frames and normalizing the result to the unit sphere.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from ._parallel import parallel_map
from .types import BoundarySet, FeatureMatrix, Manifest

logger = logging.getLogger(__name__)

DEFAULT_PCA_DIM = 250
DEFAULT_SAMPLE_CAP = 500_000


@dataclass
class PCAModel:
    """Linear projection onto the top principal components.

    components has shape (D, M) with orthonormal columns ordered by
    descending singular value.
    """

    mean: np.ndarray
    components: np.ndarray
    dim: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.components = np.asarray(self.components, dtype=np.float64)
        d, m = self.components.shape
        if m != self.dim:
            raise ValueError(f"components have {m} columns, expected M={self.dim}")
        if m > d:
            raise ValueError(f"M={m} exceeds input dimensionality D={d}")
        gram = self.components.T @ self.components
        err = np.abs(gram - np.eye(m)).max()
        if err >= 1e-4:
            raise ValueError(f"components are not orthonormal (max deviation {err:.2e})")


@dataclass(frozen=True)
class SegmentRef:
    """Half-open frame span [start_frame, end_frame) in one utterance."""

    utt_id: str
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if not 0 <= self.start_frame < self.end_frame:
            raise ValueError(
                f"{self.utt_id}: invalid segment [{self.start_frame}, {self.end_frame})"
            )

    @property
    def duration_frames(self) -> int:
        return self.end_frame - self.start_frame


@dataclass
class SegmentEmbedding:
    ref: SegmentRef
    z: np.ndarray


class DegenerateSegmentError(ValueError):
    """The segment average has zero norm and cannot be normalized."""


def fit_pca(frames: np.ndarray, dim: int) -> PCAModel:
    """Fit a PCA model on an N x D frame sample via SVD.

    Requires N > M and data of rank >= M.  The sign of each component is
    fixed so its largest-magnitude entry is positive, making the model
    deterministic across runs.
    """
    frames = np.asarray(frames, dtype=np.float64)
    n, d = frames.shape
    if dim > d:
        raise ValueError(f"M={dim} exceeds feature dimensionality D={d}")
    if n <= dim:
        raise ValueError(f"need more than M={dim} frames to fit PCA, got {n}")
    mean = frames.mean(axis=0)
    centered = frames - mean
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[dim - 1] <= s[0] * 1e-10:
        raise ValueError(f"data rank is below M={dim}; not enough variation to fit")
    components = vt[:dim].T
    flips = np.sign(components[np.abs(components).argmax(axis=0), np.arange(dim)])
    components = components * flips
    return PCAModel(mean=mean, components=components, dim=dim)


def singular_values(frames: np.ndarray) -> np.ndarray:
    """Singular values of the centered frame sample (diagnostics/tests)."""
    frames = np.asarray(frames, dtype=np.float64)
    centered = frames - frames.mean(axis=0)
    return np.linalg.svd(centered, compute_uv=False)


def fit_pca_on_corpus(
    manifest: Manifest,
    dim: int = DEFAULT_PCA_DIM,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
    seed: int = 0,
) -> tuple[PCAModel, int]:
    """Fit PCA on the corpus, subsampling frames uniformly above sample_cap.

    Returns the model and the number of frames it was fitted on.
    """
    mats = io.load_corpus_features(manifest)
    if not mats:
        raise ValueError("empty manifest")
    frames = np.concatenate([fm.data for fm in mats], axis=0)
    total = len(frames)
    if total > sample_cap:
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(total, size=sample_cap, replace=False))
        frames = frames[idx]
        logger.info("PCA sample: %d of %d corpus frames (seed %d)", sample_cap, total, seed)
    return fit_pca(frames, dim), len(frames)


def apply_pca(model: PCAModel, matrix: FeatureMatrix) -> FeatureMatrix:
    """Project a feature matrix to T x M: x_t = components^T (y_t - mean)."""
    if matrix.dim != model.mean.shape[0]:
        raise ValueError(
            f"{matrix.utt_id}: feature dimension {matrix.dim} != PCA input dimension {model.mean.shape[0]}"
        )
    projected = (matrix.data.astype(np.float64) - model.mean) @ model.components
    return FeatureMatrix(utt_id=matrix.utt_id, frame_rate_hz=matrix.frame_rate_hz, data=projected)


def embed_segment(projected: FeatureMatrix, ref: SegmentRef) -> SegmentEmbedding:
    """Average the segment's frames and normalize to the unit sphere.

    Raises DegenerateSegmentError when the average has zero norm; callers
    drop such segments and log them.
    """
    if ref.end_frame > projected.n_frames:
        raise ValueError(f"{ref.utt_id}: segment end {ref.end_frame} > T={projected.n_frames}")
    z = projected.data[ref.start_frame : ref.end_frame].astype(np.float64).mean(axis=0)
    norm = np.linalg.norm(z)
    if norm == 0:
        raise DegenerateSegmentError(
            f"{ref.utt_id}: segment [{ref.start_frame}, {ref.end_frame}) averages to zero"
        )
    return SegmentEmbedding(ref=ref, z=z / norm)


def embed_boundary_segments(
    projected: FeatureMatrix, boundary_set: BoundarySet
) -> list[SegmentEmbedding]:
    """One embedding per consecutive boundary pair; degenerate segments are dropped."""
    out = []
    for start, end in boundary_set.segments():
        ref = SegmentRef(utt_id=projected.utt_id, start_frame=start, end_frame=end)
        try:
            out.append(embed_segment(projected, ref))
        except DegenerateSegmentError:
            logger.warning("dropping degenerate segment %s [%d, %d)", ref.utt_id, start, end)
    return out


def embed_all(
    manifest: Manifest,
    boundary_sets: list[BoundarySet],
    model: PCAModel,
    projected_by_utt: dict[str, FeatureMatrix] | None = None,
    threads: int = 1,
) -> list[SegmentEmbedding]:
    """Embed every segment of the corpus in deterministic order.

    Order is manifest order, then start_frame within each utterance,
    independent of the thread count.  Pass projected_by_utt to reuse
    already-projected features (the arithmetic is identical to loading and
    projecting here).
    """
    by_utt = {bs.utt_id: bs for bs in boundary_sets}
    for entry in manifest.entries:
        if entry.utt_id not in by_utt:
            raise KeyError(f"no boundary set for utterance {entry.utt_id!r}")

    def embed_one(entry) -> list[SegmentEmbedding]:
        if projected_by_utt is None:
            projected = apply_pca(model, io.load_features(entry.path, utt_id=entry.utt_id))
        else:
            projected = projected_by_utt[entry.utt_id]
        return embed_boundary_segments(projected, by_utt[entry.utt_id])

    out = []
    for chunk in parallel_map(embed_one, manifest.entries, threads=threads):
        out.extend(chunk)
    return out


def save_pca(model: PCAModel, out_dir: str | os.PathLike, frames_sampled: int, seed: int) -> None:
    """Serialize as a feature-format file pair plus a JSON sidecar."""
    out_dir = Path(out_dir)
    io.save_features(
        FeatureMatrix(utt_id="pca.mean", frame_rate_hz=1.0, data=model.mean[None, :]),
        out_dir / "pca.mean.ftpk",
    )
    io.save_features(
        FeatureMatrix(utt_id="pca.components", frame_rate_hz=1.0, data=model.components),
        out_dir / "pca.components.ftpk",
    )
    with open(out_dir / "pca.json", "w", encoding="utf-8") as f:
        json.dump({"M": model.dim, "frames_sampled": frames_sampled, "seed": seed}, f, indent=2)
        f.write("\n")


def load_pca(out_dir: str | os.PathLike) -> PCAModel:
    out_dir = Path(out_dir)
    with open(out_dir / "pca.json", encoding="utf-8") as f:
        sidecar = json.load(f)
    mean = io.load_features(out_dir / "pca.mean.ftpk").data[0]
    components = io.load_features(out_dir / "pca.components.ftpk").data
    return PCAModel(mean=mean, components=components, dim=int(sidecar["M"]))
