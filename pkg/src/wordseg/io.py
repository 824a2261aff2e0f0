"""Readers and writers for the on-disk corpus formats.

Formats (all integers little-endian, all text UTF-8 with LF endings):

* Feature file:   magic "FTPK" | u32 version=1 | u32 T | u32 D |
                  f32 frame_rate_hz | T*D little-endian f32, row-major.
* Manifest:       JSON {"feature_source": str, "entries": [{"utt_id", "path",
                  "frames", "frame_rate_hz"}]}.  Relative paths are resolved
                  against the manifest's directory.
* Alignment TSV:  utt_id<TAB>start_s<TAB>end_s<TAB>label.
* Boundary file:  utt_id<TAB>comma-separated ascending frame indices
                  (first 0, last T).
* Class file:     blocks "Class <k>" followed by "utt_id onset_s offset_s"
                  lines, blank-line separated; times with 2-decimal precision.

All functions are pure per file: safe for concurrent use on distinct paths.
"""

from __future__ import annotations

import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from .types import (
    Alignment,
    AlignmentEntry,
    BoundarySet,
    ClassFile,
    FeatureMatrix,
    Manifest,
    ManifestEntry,
    Segment,
)

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"FTPK"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIIIf")  # magic, version, T, D, frame_rate_hz


class FormatError(ValueError):
    """A file does not conform to its declared format."""


def save_features(matrix: FeatureMatrix, path: str | os.PathLike) -> None:
    """Write a feature matrix to an FTPK file.

    Raises FormatError for non-finite payloads (FeatureMatrix normally
    guarantees finiteness, but the array may have been mutated since).
    """
    data = np.ascontiguousarray(matrix.data, dtype="<f4")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{matrix.utt_id}: refusing to write non-finite features")
    t, d = data.shape
    header = _HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, t, d, matrix.frame_rate_hz)
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.tobytes(order="C"))


def load_features(path: str | os.PathLike, utt_id: str | None = None) -> FeatureMatrix:
    """Load an FTPK feature file.

    utt_id defaults to the file stem.  Rejects bad magic/version, T or D of
    zero, payload size mismatches, and non-finite payloads.
    """
    path = Path(path)
    if utt_id is None:
        utt_id = path.stem
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, t, d, rate = _HEADER.unpack(header)
        if magic != FEATURE_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FEATURE_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if t < 1 or d < 1:
            raise FormatError(f"{path}: header declares empty matrix T={t}, D={d}")
        payload = f.read()
    expected = t * d * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(t, d)
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: payload contains non-finite values")
    return FeatureMatrix(utt_id=utt_id, frame_rate_hz=rate, data=data.copy())


def save_manifest(manifest: Manifest, path: str | os.PathLike) -> None:
    doc = {
        "feature_source": manifest.feature_source,
        "entries": [
            {
                "utt_id": e.utt_id,
                "path": e.path,
                "frames": e.frames,
                "frame_rate_hz": e.frame_rate_hz,
            }
            for e in manifest.entries
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def load_manifest(path: str | os.PathLike) -> Manifest:
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    try:
        entries = [
            ManifestEntry(
                utt_id=e["utt_id"],
                path=_resolve(path.parent, e["path"]),
                frames=int(e["frames"]),
                frame_rate_hz=float(e["frame_rate_hz"]),
            )
            for e in doc["entries"]
        ]
        return Manifest(feature_source=doc["feature_source"], entries=entries)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{path}: malformed manifest ({exc})") from exc


def _resolve(base: Path, p: str) -> str:
    return p if os.path.isabs(p) else str(base / p)


def load_corpus_features(manifest: Manifest) -> list[FeatureMatrix]:
    """Load every feature file of a manifest, in manifest order.

    Cross-checks the header against the manifest entry (frame count and rate).
    """
    out = []
    for e in manifest.entries:
        fm = load_features(e.path, utt_id=e.utt_id)
        if fm.n_frames != e.frames:
            raise FormatError(
                f"{e.utt_id}: manifest declares {e.frames} frames but file has {fm.n_frames}"
            )
        if abs(fm.frame_rate_hz - e.frame_rate_hz) > 1e-6:
            raise FormatError(
                f"{e.utt_id}: manifest frame rate {e.frame_rate_hz} != file header {fm.frame_rate_hz}"
            )
        out.append(fm)
    return out


def load_alignments(path: str | os.PathLike, tier: str) -> list[Alignment]:
    """Load a flat alignment TSV, grouped by utterance in first-seen order.

    Raises FormatError on malformed lines; Alignment construction rejects
    unsorted or overlapping entries.
    """
    groups: dict[str, list[AlignmentEntry]] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
            utt_id, start_s, end_s, label = parts
            try:
                entry = AlignmentEntry(start_s=float(start_s), end_s=float(end_s), label=label)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad time value ({exc})") from exc
            groups.setdefault(utt_id, []).append(entry)
    try:
        return [Alignment(utt_id=utt, tier=tier, entries=entries) for utt, entries in groups.items()]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def save_alignments(alignments: list[Alignment], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for aln in alignments:
            for e in aln.entries:
                f.write(f"{aln.utt_id}\t{e.start_s}\t{e.end_s}\t{e.label}\n")


def write_classfile(classfile: ClassFile, path: str | os.PathLike) -> None:
    """Write a class file; onsets/offsets at 2-decimal precision (20 ms frames)."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k in sorted(classfile.classes):
            f.write(f"Class {k}\n")
            for seg in classfile.classes[k]:
                f.write(f"{seg.utt_id} {seg.onset_s:.2f} {seg.offset_s:.2f}\n")
            f.write("\n")


def read_classfile(path: str | os.PathLike) -> ClassFile:
    classfile = ClassFile()
    current: int | None = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                current = None
                continue
            if line.startswith("Class"):
                parts = line.split()
                if len(parts) != 2 or not parts[1].isdigit():
                    raise FormatError(f"{path}:{lineno}: malformed class header {line!r}")
                current = int(parts[1])
                if current in classfile.classes:
                    raise FormatError(f"{path}:{lineno}: duplicate class {current}")
                classfile.classes[current] = []
                continue
            if current is None:
                raise FormatError(f"{path}:{lineno}: segment line outside a class block")
            parts = line.split()
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected 'utt_id onset offset', got {line!r}")
            try:
                seg = Segment(utt_id=parts[0], onset_s=float(parts[1]), offset_s=float(parts[2]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
            classfile.classes[current].append(seg)
    return classfile


def write_boundaries(boundary_sets: list[BoundarySet], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for bs in boundary_sets:
            f.write(f"{bs.utt_id}\t{','.join(str(b) for b in bs.frames)}\n")


def read_boundaries(path: str | os.PathLike, frames_by_utt: dict[str, int]) -> list[BoundarySet]:
    """Read a boundary file; frames_by_utt gives T per utterance for validation.

    BoundarySet construction enforces first index 0, last index T, and strict
    ascent (so unsorted indices or a missing final index are rejected).
    """
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'utt_id<TAB>indices', got {line!r}")
            utt_id, idx_str = parts
            if utt_id not in frames_by_utt:
                raise FormatError(f"{path}:{lineno}: unknown utterance {utt_id!r}")
            try:
                frames = tuple(int(tok) for tok in idx_str.split(","))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: bad frame index ({exc})") from exc
            try:
                out.append(BoundarySet(utt_id=utt_id, frames=frames, total_frames=frames_by_utt[utt_id]))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return out
