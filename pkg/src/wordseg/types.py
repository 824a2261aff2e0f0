"""Core data types shared across the toolkit.

Everything here is a plain, immutable-after-construction container with its
invariants enforced at construction time.  File parsing/serialization lives
in :mod:`wordseg.io`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VALID_TIERS = ("word", "phone")


@dataclass
class FeatureMatrix:
    """Frame-level features for one utterance: a T x D float32 matrix.

    frame_rate_hz is the number of feature frames per second (50 for
    transformer features, 100 for MFCCs).
    """

    utt_id: str
    frame_rate_hz: float
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError(f"{self.utt_id}: feature data must be 2-D, got shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError(f"{self.utt_id}: feature matrix must be at least 1x1, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError(f"{self.utt_id}: feature matrix contains non-finite values")
        if not (self.frame_rate_hz > 0):
            raise ValueError(f"{self.utt_id}: frame_rate_hz must be positive, got {self.frame_rate_hz}")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BoundarySet:
    """Ordered frame-index boundaries for one utterance.

    Always contains the utterance edges 0 and total_frames; strictly
    ascending in between.
    """

    utt_id: str
    frames: tuple[int, ...]
    total_frames: int

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(int(f) for f in self.frames))
        frames = self.frames
        if len(frames) < 2:
            raise ValueError(f"{self.utt_id}: boundary set needs at least the two edges, got {frames}")
        if frames[0] != 0:
            raise ValueError(f"{self.utt_id}: first boundary must be 0, got {frames[0]}")
        if frames[-1] != self.total_frames:
            raise ValueError(
                f"{self.utt_id}: last boundary must equal total_frames={self.total_frames}, got {frames[-1]}"
            )
        if any(a >= b for a, b in zip(frames, frames[1:])):
            raise ValueError(f"{self.utt_id}: boundaries must be strictly ascending: {frames}")

    @property
    def n_segments(self) -> int:
        return len(self.frames) - 1

    def segments(self) -> list[tuple[int, int]]:
        """(start_frame, end_frame) pairs for consecutive boundaries."""
        return list(zip(self.frames[:-1], self.frames[1:]))


@dataclass(frozen=True)
class AlignmentEntry:
    start_s: float
    end_s: float
    label: str


@dataclass
class Alignment:
    """Forced-alignment tier (word or phone) for one utterance."""

    utt_id: str
    tier: str
    entries: list[AlignmentEntry]

    # Entries closer than this are treated as touching, not overlapping.
    OVERLAP_TOL = 1e-6

    def __post_init__(self):
        if self.tier not in VALID_TIERS:
            raise ValueError(f"{self.utt_id}: unknown tier {self.tier!r}, expected one of {VALID_TIERS}")
        prev = None
        for e in self.entries:
            if not e.start_s < e.end_s:
                raise ValueError(f"{self.utt_id}: entry {e.label!r} has start {e.start_s} >= end {e.end_s}")
            if prev is not None:
                if e.start_s < prev.start_s:
                    raise ValueError(f"{self.utt_id}: entries not sorted by start time at {e.label!r}")
                if prev.end_s > e.start_s + self.OVERLAP_TOL:
                    raise ValueError(
                        f"{self.utt_id}: entries {prev.label!r} and {e.label!r} overlap "
                        f"({prev.end_s} > {e.start_s})"
                    )
            prev = e


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    path: str
    frames: int
    frame_rate_hz: float


@dataclass
class Manifest:
    """Corpus manifest: which feature file belongs to which utterance."""

    feature_source: str
    entries: list[ManifestEntry]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.utt_id in seen:
                raise ValueError(f"duplicate utt_id in manifest: {e.utt_id!r}")
            seen.add(e.utt_id)

    @property
    def utt_ids(self) -> list[str]:
        return [e.utt_id for e in self.entries]

    def entry(self, utt_id: str) -> ManifestEntry:
        for e in self.entries:
            if e.utt_id == utt_id:
                return e
        raise KeyError(utt_id)


@dataclass(frozen=True)
class Segment:
    """One discovered word token, in seconds."""

    utt_id: str
    onset_s: float
    offset_s: float

    def __post_init__(self):
        if not self.onset_s < self.offset_s:
            raise ValueError(f"{self.utt_id}: segment onset {self.onset_s} >= offset {self.offset_s}")


@dataclass
class ClassFile:
    """Discovered lexicon: cluster id -> list of segments."""

    classes: dict[int, list[Segment]] = field(default_factory=dict)

    def add(self, cluster: int, segment: Segment) -> None:
        self.classes.setdefault(int(cluster), []).append(segment)

    def all_segments(self) -> list[tuple[int, Segment]]:
        """(cluster_id, segment) pairs, clusters in ascending id order."""
        out = []
        for k in sorted(self.classes):
            out.extend((k, seg) for seg in self.classes[k])
        return out

    @property
    def n_segments(self) -> int:
        return sum(len(v) for v in self.classes.values())

    def check_references(self, manifest: Manifest) -> None:
        """Raise if any segment references an utterance not in the manifest."""
        known = set(manifest.utt_ids)
        for segs in self.classes.values():
            for seg in segs:
                if seg.utt_id not in known:
                    raise ValueError(f"class file references unknown utterance {seg.utt_id!r}")
