"""Word boundary detection from frame features.

The pipeline: cosine dissimilarity between adjacent frames, moving-average
smoothing, then prominence-thresholded peak picking.  A peak at curve index t
(the gap between frames t and t+1) becomes a boundary at frame t+1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .types import BoundarySet, FeatureMatrix

logger = logging.getLogger(__name__)


@dataclass
class SegmenterConfig:
    window_frames: int = 4
    prominence_threshold: float = 0.75
    min_segment_frames: int = 1

    def __post_init__(self):
        if self.window_frames < 1:
            raise ValueError(f"window_frames must be >= 1, got {self.window_frames}")
        if self.prominence_threshold < 0:
            raise ValueError(f"prominence_threshold must be >= 0, got {self.prominence_threshold}")
        if self.min_segment_frames < 1:
            raise ValueError(f"min_segment_frames must be >= 1, got {self.min_segment_frames}")


@dataclass
class DissimilarityCurve:
    """Adjacent-frame cosine distances: values[t] is the gap between frames t and t+1."""

    utt_id: str
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError(f"{self.utt_id}: curve must be 1-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"{self.utt_id}: curve contains non-finite values")
        if np.any(self.values < 0) or np.any(self.values > 2):
            raise ValueError(f"{self.utt_id}: cosine distances must lie in [0, 2]")


def normalize_corpus(features: list[FeatureMatrix]) -> list[FeatureMatrix]:
    """Mean/variance normalize per dimension over all frames of the corpus.

    Dimensions with variance below 1e-12 are left mean-centered only.
    Returns new FeatureMatrix objects; inputs are not modified.
    """
    if not features:
        raise ValueError("cannot normalize an empty corpus")
    dim = features[0].dim
    for fm in features:
        if fm.dim != dim:
            raise ValueError(f"{fm.utt_id}: dimension {fm.dim} != corpus dimension {dim}")

    n_frames = sum(fm.n_frames for fm in features)
    total = np.zeros(dim, dtype=np.float64)
    for fm in features:
        total += fm.data.sum(axis=0, dtype=np.float64)
    mean = total / n_frames

    sq = np.zeros(dim, dtype=np.float64)
    for fm in features:
        centered = fm.data.astype(np.float64) - mean
        sq += (centered * centered).sum(axis=0)
    var = sq / n_frames
    scale = np.where(var < 1e-12, 1.0, np.sqrt(var))

    out = []
    for fm in features:
        data = (fm.data.astype(np.float64) - mean) / scale
        out.append(FeatureMatrix(utt_id=fm.utt_id, frame_rate_hz=fm.frame_rate_hz, data=data))
    return out


def dissimilarity_curve(matrix: FeatureMatrix) -> DissimilarityCurve:
    """Cosine distance between each pair of adjacent frames (length T-1).

    Raises on T < 2 or any zero-norm frame (corrupt features).
    """
    if matrix.n_frames < 2:
        raise ValueError(f"{matrix.utt_id}: need at least 2 frames, got {matrix.n_frames}")
    data = matrix.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    if np.any(norms == 0):
        bad = int(np.argmin(norms))
        raise ValueError(f"{matrix.utt_id}: zero-norm feature frame at index {bad}")
    dots = np.einsum("ij,ij->i", data[1:], data[:-1])
    cos = dots / (norms[1:] * norms[:-1])
    # Guard against float excursions just outside [-1, 1].
    values = np.clip(1.0 - cos, 0.0, 2.0)
    return DissimilarityCurve(utt_id=matrix.utt_id, values=values)


def smooth(curve: DissimilarityCurve, window_frames: int) -> DissimilarityCurve:
    """Centered moving average with a window that shrinks at the edges.

    Entry t averages indices [t - floor((w-1)/2), t + ceil((w-1)/2)] clipped
    to the curve, renormalized by the actual number of terms.  Even windows
    are left-heavy by this convention.
    """
    if window_frames < 1:
        raise ValueError(f"window_frames must be >= 1, got {window_frames}")
    if window_frames == 1:
        return DissimilarityCurve(utt_id=curve.utt_id, values=curve.values.copy())
    n = len(curve.values)
    left = (window_frames - 1) // 2
    right = window_frames - 1 - left
    csum = np.concatenate([[0.0], np.cumsum(curve.values)])
    lo = np.maximum(np.arange(n) - left, 0)
    hi = np.minimum(np.arange(n) + right, n - 1)
    sums = csum[hi + 1] - csum[lo]
    values = sums / (hi - lo + 1)
    return DissimilarityCurve(utt_id=curve.utt_id, values=np.clip(values, 0.0, 2.0))


def peak_prominence(values: np.ndarray, peak: int) -> float:
    """Prominence of a local maximum by the standard base-scan rule.

    On each side, scan to the nearest sample strictly higher than the peak
    (or the curve end); the base is the interval minimum.  Prominence is the
    peak height above the higher base.
    """
    height = values[peak]
    lo = peak
    left_base = height
    while lo > 0 and values[lo - 1] <= height:
        lo -= 1
        left_base = min(left_base, values[lo])
    hi = peak
    right_base = height
    while hi < len(values) - 1 and values[hi + 1] <= height:
        hi += 1
        right_base = min(right_base, values[hi])
    return float(height - max(left_base, right_base))


def find_prominent_peaks(curve: DissimilarityCurve, prominence_threshold: float) -> list[int]:
    """Indices of local maxima whose prominence reaches the threshold.

    A peak satisfies values[p-1] < values[p] >= values[p+1]; curve edges are
    never peaks and a plateau keeps its leftmost sample.
    """
    values = curve.values
    if len(values) < 3:
        return []
    candidates = np.flatnonzero((values[:-2] < values[1:-1]) & (values[1:-1] >= values[2:])) + 1
    return [int(p) for p in candidates if peak_prominence(values, p) >= prominence_threshold]


def segment_utterance(matrix: FeatureMatrix, config: SegmenterConfig) -> BoundarySet:
    """Predict word boundaries for one (normalized) utterance.

    Composes dissimilarity -> smooth -> peak picking; a peak at curve index t
    maps to a boundary at frame t+1.  Edges 0 and T are always present.
    Interior boundaries closer than min_segment_frames to the previously kept
    boundary are dropped (earlier boundary wins).
    """
    t_total = matrix.n_frames
    if t_total < 2:
        return BoundarySet(utt_id=matrix.utt_id, frames=(0, t_total), total_frames=t_total)
    curve = smooth(dissimilarity_curve(matrix), config.window_frames)
    peaks = find_prominent_peaks(curve, config.prominence_threshold)
    frames = [0]
    for p in peaks:
        b = p + 1
        if b - frames[-1] >= config.min_segment_frames:
            frames.append(b)
    if frames[-1] != t_total:
        frames.append(t_total)
    return BoundarySet(utt_id=matrix.utt_id, frames=tuple(frames), total_frames=t_total)


def frames_to_seconds(frame_index: int, frame_rate_hz: float) -> float:
    return frame_index / frame_rate_hz
