"""Pipeline orchestration.

Subcommands mirror the stages: segment, cluster, eskmeans, evaluate, and
pipeline (which chains them and, with --mode both, reports the runtime of
the plain prominence pipeline next to the DP one).  Every run writes a
resolved-config snapshot beside its outputs; re-running from that snapshot
reproduces the data artifacts bit-identically.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfg
from . import io
from ._parallel import parallel_map
from .boundaries import SegmenterConfig, normalize_corpus, segment_utterance
from .embed import embed_all, fit_pca_on_corpus, save_pca
from .eskmeans import ESKMeansConfig, StageTimer, eskmeans_fit, runtime_report
from .kmeans import build_lexicon, kmeans_fit, save_codebook
from .metrics import evaluate_run, format_report
from .types import BoundarySet, Manifest

logger = logging.getLogger(__name__)


def _sanitize(value):
    """Replace non-finite floats with None so reports stay strict JSON."""
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def _write_json(doc: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_sanitize(doc), f, indent=2, sort_keys=True)
        f.write("\n")


def _finish_run(out_dir: Path, resolved: dict, timer: StageTimer, report: dict | None) -> None:
    _write_json(runtime_report(timer), out_dir / "timings.json")
    cfg.save_resolved(resolved, out_dir / "config.resolved.json")
    if report is not None:
        _write_json(report, out_dir / "report.json")


def _load_boundaries(path: str, manifest: Manifest) -> list[BoundarySet]:
    frames_by_utt = {e.utt_id: e.frames for e in manifest.entries}
    return io.read_boundaries(path, frames_by_utt)


def cmd_segment(
    resolved: dict, out_dir: Path, threads: int = 1, timer: StageTimer | None = None
) -> list[BoundarySet]:
    """Prominence segmentation over the whole manifest."""
    manifest = io.load_manifest(cfg.require_path(resolved, "manifest"))
    if not manifest.entries:
        raise ValueError("manifest has no entries")
    seg = resolved["segmenter"]
    seg_config = SegmenterConfig(
        window_frames=seg["window_frames"],
        prominence_threshold=seg["prominence_threshold"],
        min_segment_frames=seg["min_segment_frames"],
    )
    timer = timer or StageTimer()
    with timer.stage("boundary_detection"):
        features = io.load_corpus_features(manifest)
        normalized = normalize_corpus(features)
        boundary_sets = parallel_map(
            lambda fm: segment_utterance(fm, seg_config), normalized, threads=threads
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_boundaries(boundary_sets, out_dir / "boundaries.tsv")
    n_interior = sum(len(bs.frames) - 2 for bs in boundary_sets)
    stats = {
        "n_utterances": len(boundary_sets),
        "n_interior_boundaries": n_interior,
        "boundaries_per_utterance": n_interior / len(boundary_sets),
        "mode": seg["mode"],
    }
    logger.info("segmented %d utterances: %.2f interior boundaries/utt", len(boundary_sets), stats["boundaries_per_utterance"])
    _finish_run(out_dir, resolved, timer, stats)
    return boundary_sets


def cmd_cluster(
    resolved: dict,
    out_dir: Path,
    threads: int = 1,
    boundary_sets: list[BoundarySet] | None = None,
    timer: StageTimer | None = None,
):
    """PCA + segment embedding + K-means lexicon over given boundaries."""
    manifest = io.load_manifest(cfg.require_path(resolved, "manifest"))
    if boundary_sets is None:
        boundary_sets = _load_boundaries(cfg.require_path(resolved, "boundaries"), manifest)
    timer = timer or StageTimer()
    out_dir.mkdir(parents=True, exist_ok=True)
    pca_conf = resolved["pca"]
    with timer.stage("pca"):
        model, frames_sampled = fit_pca_on_corpus(
            manifest, dim=pca_conf["dim"], sample_cap=pca_conf["sample_cap"], seed=pca_conf["seed"]
        )
    save_pca(model, out_dir, frames_sampled=frames_sampled, seed=pca_conf["seed"])
    with timer.stage("embedding"):
        embeddings = embed_all(manifest, boundary_sets, model, threads=threads)
    km_conf = resolved["kmeans"]
    with timer.stage("kmeans"):
        result = kmeans_fit(
            np.vstack([e.z for e in embeddings]),
            km_conf["k"],
            seed=km_conf["seed"],
            max_iters=km_conf["max_iters"],
        )
    save_codebook(result.codebook, out_dir, km_conf["seed"], result.iters_run, result.objective)
    classfile = build_lexicon(manifest, [e.ref for e in embeddings], result.assignments)
    io.write_classfile(classfile, out_dir / "classes.txt")
    report = {
        "n_segments": len(embeddings),
        "k": km_conf["k"],
        "kmeans_iters_run": result.iters_run,
        "kmeans_objective": result.objective,
    }
    _finish_run(out_dir, resolved, timer, report)
    return classfile


def cmd_eskmeans(
    resolved: dict,
    out_dir: Path,
    threads: int = 1,
    candidate_sets: list[BoundarySet] | None = None,
    timer: StageTimer | None = None,
):
    """Full DP re-segmentation run over candidate boundaries."""
    manifest = io.load_manifest(cfg.require_path(resolved, "manifest"))
    if candidate_sets is None:
        candidate_sets = _load_boundaries(cfg.require_path(resolved, "boundaries"), manifest)
    out_dir.mkdir(parents=True, exist_ok=True)
    timer = timer or StageTimer()
    pca_conf = resolved["pca"]
    with timer.stage("pca"):
        model, frames_sampled = fit_pca_on_corpus(
            manifest, dim=pca_conf["dim"], sample_cap=pca_conf["sample_cap"], seed=pca_conf["seed"]
        )
    save_pca(model, out_dir, frames_sampled=frames_sampled, seed=pca_conf["seed"])
    km_conf = resolved["kmeans"]
    esk_conf = resolved["eskmeans"]
    es_config = ESKMeansConfig(
        n_clusters=km_conf["k"],
        max_outer_iters=esk_conf["max_outer_iters"],
        max_span=esk_conf["max_span"],
        seed=km_conf["seed"],
        duration_weighting=esk_conf["duration_weighting"],
        init_kmeans_iters=km_conf["max_iters"],
        inner_kmeans_iters=esk_conf["inner_kmeans_iters"],
        batch_size=esk_conf["batch_size"],
    )
    candidates = {bs.utt_id: bs for bs in candidate_sets}
    state, codebook, classfile = eskmeans_fit(
        manifest, candidates, model, es_config, threads=threads, timer=timer
    )
    io.write_boundaries([state.chosen[utt] for utt in manifest.utt_ids], out_dir / "boundaries.tsv")
    io.write_classfile(classfile, out_dir / "classes.txt")
    save_codebook(codebook, out_dir, km_conf["seed"], state.outer_iters_run, state.joint_objective)
    report = {
        "outer_iters": state.outer_iters_run,
        "J_per_iter": state.j_after_dp,
        "J_after_refit": state.j_after_refit,
        "converged": state.converged,
        "fallback_utts": state.fallback_utts,
        "joint_objective": state.joint_objective,
        "runtime_s": dict(timer.seconds),
    }
    _finish_run(out_dir, resolved, timer, report)
    return state, classfile


def cmd_evaluate(
    resolved: dict,
    out_dir: Path,
    classfile=None,
    boundary_sets: list[BoundarySet] | None = None,
) -> dict:
    """Score a run against word/phone alignments."""
    manifest = io.load_manifest(cfg.require_path(resolved, "manifest"))
    if classfile is None:
        classfile = io.read_classfile(cfg.require_path(resolved, "classes"))
    if boundary_sets is None:
        boundary_sets = _load_boundaries(cfg.require_path(resolved, "boundaries"), manifest)
    word = {a.utt_id: a for a in io.load_alignments(cfg.require_path(resolved, "word_alignments"), "word")}
    phone = {a.utt_id: a for a in io.load_alignments(cfg.require_path(resolved, "phone_alignments"), "phone")}
    ev = resolved["eval"]
    report = evaluate_run(
        manifest,
        classfile,
        boundary_sets,
        word,
        phone,
        tol_s=ev["tolerance_s"],
        ned_pooling=ev["ned_pooling"],
        macro_average=ev["macro_average"],
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(report, out_dir / "report.json")
    cfg.save_resolved(resolved, out_dir / "config.resolved.json")
    print(format_report(report))
    return report


def _have_alignments(resolved: dict) -> bool:
    paths = resolved["paths"]
    return bool(
        paths.get("word_alignments")
        and paths.get("phone_alignments")
        and os.path.exists(paths["word_alignments"])
        and os.path.exists(paths["phone_alignments"])
    )


def _pipeline_one(base_config: dict, out_dir: Path, threads: int, use_dp: bool) -> dict:
    """Run segment + cluster (or eskmeans) + optional evaluation in out_dir.

    The stages share one run directory and one timer; the later stages win
    the fixed filenames (boundaries.tsv holds the final segmentation,
    report.json the evaluation), and the combined per-stage timings are
    written last.
    """
    mode = "candidates" if use_dp else "prominence"
    resolved = cfg.resolve(base_config, mode=mode)
    out_dir.mkdir(parents=True, exist_ok=True)
    timer = StageTimer()
    start = time.perf_counter()
    boundary_sets = cmd_segment(resolved, out_dir, threads=threads, timer=timer)
    run_info = None
    if use_dp:
        state, classfile = cmd_eskmeans(
            resolved, out_dir, threads=threads, candidate_sets=boundary_sets, timer=timer
        )
        final_bounds = [state.chosen[bs.utt_id] for bs in boundary_sets]
        run_info = {
            "outer_iters": state.outer_iters_run,
            "J_per_iter": state.j_after_dp,
            "converged": state.converged,
        }
    else:
        classfile = cmd_cluster(
            resolved, out_dir, threads=threads, boundary_sets=boundary_sets, timer=timer
        )
        final_bounds = boundary_sets
    discovery_s = time.perf_counter() - start
    summary = {"discovery_runtime_s": discovery_s, "output_dir": str(out_dir), "run": run_info}
    if _have_alignments(resolved):
        summary["evaluation"] = cmd_evaluate(
            resolved, out_dir, classfile=classfile, boundary_sets=final_bounds
        )
    else:
        logger.warning("alignments not configured or missing; skipping evaluation")
        summary["evaluation"] = None
    _write_json(runtime_report(timer), out_dir / "timings.json")
    return summary


def cmd_pipeline(base_config: dict, out_dir: Path, threads: int, mode: str) -> dict:
    """End-to-end run; with --mode both, compare the two strategies' runtimes."""
    out_dir.mkdir(parents=True, exist_ok=True)
    report: dict = {"mode": mode}
    if mode in ("prominence", "both"):
        report["prominence"] = _pipeline_one(base_config, out_dir / "prominence", threads, use_dp=False)
    if mode in ("eskmeans", "both"):
        report["eskmeans"] = _pipeline_one(base_config, out_dir / "eskmeans", threads, use_dp=True)
    if mode == "both":
        prom = report["prominence"]["discovery_runtime_s"]
        esk = report["eskmeans"]["discovery_runtime_s"]
        report["runtime_comparison"] = {
            "prominence_s": prom,
            "eskmeans_s": esk,
            "speedup": esk / prom if prom > 0 else float("inf"),
        }
    _write_json(report, out_dir / "report.json")
    cfg.save_resolved(base_config, out_dir / "config.resolved.json")
    return report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wordseg", description="Unsupervised word discovery from speech features."
    )
    parser.add_argument("command", choices=["segment", "cluster", "eskmeans", "evaluate", "pipeline"])
    parser.add_argument("--config", default=None, help="JSON config file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VAL",
        help="override a config value, e.g. --set kmeans.k=500",
    )
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--output", default=None, help="run directory (overrides paths.output_dir)")
    parser.add_argument(
        "--mode", choices=["prominence", "eskmeans", "both"], default="prominence",
        help="pipeline strategy (pipeline command only)",
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=os.environ.get("WORDSEG_LOG", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        base = cfg.apply_overrides(cfg.load_config(args.config), args.overrides)
        out_dir = Path(args.output or base["paths"]["output_dir"])
        if args.command == "pipeline":
            cmd_pipeline(base, out_dir, args.threads, args.mode)
        elif args.command == "segment":
            cmd_segment(cfg.resolve(base), out_dir, threads=args.threads)
        elif args.command == "cluster":
            cmd_cluster(cfg.resolve(base), out_dir, threads=args.threads)
        elif args.command == "eskmeans":
            cmd_eskmeans(cfg.resolve(base), out_dir, threads=args.threads)
        elif args.command == "evaluate":
            cmd_evaluate(cfg.resolve(base), out_dir)
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        logger.error("%s", exc)
        logger.debug("traceback:", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
