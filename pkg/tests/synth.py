"""Synthetic corpus generators shared by the tests.

Utterances are built from planted segments: each segment repeats a random
unit vector with additive Gaussian noise, so the true word boundaries are
known exactly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from wordseg import io
from wordseg.types import BoundarySet, FeatureMatrix, Manifest, ManifestEntry


def planted_utterance(
    rng: np.random.Generator,
    utt_id: str,
    n_segments: int,
    dim: int,
    min_len: int = 5,
    max_len: int = 15,
    noise: float = 0.1,
    frame_rate_hz: float = 50.0,
) -> tuple[FeatureMatrix, BoundarySet]:
    """One utterance of planted segments; returns features and true boundaries."""
    frames = []
    bounds = [0]
    for _ in range(n_segments):
        length = int(rng.integers(min_len, max_len + 1))
        proto = rng.normal(size=dim)
        proto /= np.linalg.norm(proto)
        frames.append(proto + rng.normal(scale=noise, size=(length, dim)))
        bounds.append(bounds[-1] + length)
    data = np.concatenate(frames, axis=0)
    fm = FeatureMatrix(utt_id=utt_id, frame_rate_hz=frame_rate_hz, data=data)
    bs = BoundarySet(utt_id=utt_id, frames=tuple(bounds), total_frames=bounds[-1])
    return fm, bs


def planted_corpus(
    rng: np.random.Generator,
    n_utterances: int,
    dim: int,
    segments_per_utt: tuple[int, int] = (3, 8),
    **kwargs,
) -> tuple[list[FeatureMatrix], list[BoundarySet]]:
    mats, bounds = [], []
    for i in range(n_utterances):
        n_seg = int(rng.integers(segments_per_utt[0], segments_per_utt[1] + 1))
        fm, bs = planted_utterance(rng, f"utt{i:04d}", n_seg, dim, **kwargs)
        mats.append(fm)
        bounds.append(bs)
    return mats, bounds


def corpus_to_disk(
    mats: list[FeatureMatrix], root: Path, feature_source: str = "synthetic"
) -> tuple[Manifest, Path]:
    """Write feature files plus manifest under root; returns (manifest, manifest_path)."""
    feat_dir = root / "feats"
    feat_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for fm in mats:
        path = feat_dir / f"{fm.utt_id}.ftpk"
        io.save_features(fm, path)
        entries.append(
            ManifestEntry(
                utt_id=fm.utt_id, path=str(path), frames=fm.n_frames, frame_rate_hz=fm.frame_rate_hz
            )
        )
    manifest = Manifest(feature_source=feature_source, entries=entries)
    manifest_path = root / "manifest.json"
    io.save_manifest(manifest, manifest_path)
    return manifest, manifest_path


def alignments_from_boundaries(
    bounds: list[BoundarySet], frame_rate_hz: float = 50.0
) -> tuple[str, str]:
    """Word and phone alignment TSV text matching the true boundaries exactly.

    Each true segment becomes one word token and one phone, so a perfect
    segmentation scores NED 0, R-value 100, token F1 100.
    """
    word_lines = []
    phone_lines = []
    for bs in bounds:
        for i, (start, end) in enumerate(bs.segments()):
            s, e = start / frame_rate_hz, end / frame_rate_hz
            word_lines.append(f"{bs.utt_id}\t{s}\t{e}\tw{i}")
            phone_lines.append(f"{bs.utt_id}\t{s}\t{e}\tp{i}")
    return "\n".join(word_lines) + "\n", "\n".join(phone_lines) + "\n"
