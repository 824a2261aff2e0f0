"""FTPK feature file and manifest writers.

The byte format is shared with the segmentation toolkit:
magic "FTPK" | u32 version=1 | u32 T | u32 D | f32 frame_rate_hz |
T*D little-endian f32, row-major.  Integers little-endian.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"FTPK"
VERSION = 1
_HEADER = struct.Struct("<4sIIIf")


def write_features(data: np.ndarray, frame_rate_hz: float, path: str | os.PathLike) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise ValueError(f"feature matrix must be non-empty 2-D, got shape {data.shape}")
    if not np.all(np.isfinite(data)):
        raise ValueError("refusing to write non-finite features")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, data.shape[0], data.shape[1], frame_rate_hz))
        f.write(data.tobytes(order="C"))


def read_header(path: str | os.PathLike) -> tuple[int, int, float]:
    """(T, D, frame_rate_hz) from an FTPK header."""
    with open(path, "rb") as f:
        magic, version, t, d, rate = _HEADER.unpack(f.read(_HEADER.size))
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"{path}: not an FTPK v{VERSION} file")
    return t, d, rate


def write_manifest(
    entries: list[dict], feature_source: str, path: str | os.PathLike
) -> None:
    doc = {"feature_source": feature_source, "entries": entries}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
