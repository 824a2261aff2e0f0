"""Run configuration: a single JSON document with dotted-key overrides.

Defaults follow the development settings of the pipeline: a 4-frame window
with a 0.75 prominence threshold for direct boundary detection, a 5-frame
window with a 0.3 threshold for high-recall candidate generation, and
250-dimensional PCA.
"""

from __future__ import annotations

import copy
import json
import os

# window/threshold of None means "use the mode's default".
DEFAULTS: dict = {
    "paths": {
        "manifest": None,
        "word_alignments": None,
        "phone_alignments": None,
        "boundaries": None,
        "classes": None,
        "output_dir": "runs/latest",
    },
    "segmenter": {
        "mode": "prominence",
        "window_frames": None,
        "prominence_threshold": None,
        "min_segment_frames": 1,
    },
    "pca": {"dim": 250, "sample_cap": 500000, "seed": 0},
    "kmeans": {"k": 100, "seed": 0, "max_iters": 25},
    "eskmeans": {
        "max_outer_iters": 10,
        "max_span": 6,
        "duration_weighting": True,
        "inner_kmeans_iters": 5,
        "batch_size": None,
    },
    "eval": {"tolerance_s": 0.02, "ned_pooling": "pairs", "macro_average": False},
}

MODE_DEFAULTS = {
    "prominence": {"window_frames": 4, "prominence_threshold": 0.75},
    "candidates": {"window_frames": 5, "prominence_threshold": 0.3},
}


class ConfigError(ValueError):
    pass


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | os.PathLike | None) -> dict:
    """Defaults merged with the JSON file at path (if given)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return _deep_merge(DEFAULTS, doc)


def apply_overrides(config: dict, overrides: list[str]) -> dict:
    """Apply --set KEY=VALUE pairs; values parse as JSON, else raw strings."""
    config = copy.deepcopy(config)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        parts = key.split(".")
        node = config
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config section {key!r}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node[parts[-1]] = value
    return config


def resolve(config: dict, mode: str | None = None) -> dict:
    """Materialize every default into a snapshot that reproduces the run.

    Fills the segmenter window/threshold from the mode table when unset.
    Resolution is idempotent, so re-running from a snapshot resolves to the
    same snapshot.
    """
    config = copy.deepcopy(config)
    seg = config["segmenter"]
    if mode is not None:
        seg["mode"] = mode
    if seg["mode"] not in MODE_DEFAULTS:
        raise ConfigError(f"unknown segmenter mode {seg['mode']!r}")
    for key, value in MODE_DEFAULTS[seg["mode"]].items():
        if seg[key] is None:
            seg[key] = value
    if config["kmeans"]["k"] < 1:
        raise ConfigError(f"kmeans.k must be >= 1, got {config['kmeans']['k']}")
    return config


def save_resolved(config: dict, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)
        f.write("\n")


def require_path(config: dict, key: str) -> str:
    value = config["paths"].get(key)
    if not value:
        raise ConfigError(f"paths.{key} must be set for this command")
    if not os.path.exists(value):
        raise ConfigError(f"paths.{key}: no such file or directory: {value}")
    return value
