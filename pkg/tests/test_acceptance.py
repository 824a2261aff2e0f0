"""Acceptance suite: one test per release criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  The final speed-claim test builds a 1000-utterance corpus and takes
a few minutes; everything else is fast.
"""

import itertools
import json
import time
from pathlib import Path

import numpy as np
import pytest

from wordseg import cli
from wordseg import config as cfg
from wordseg import io
from wordseg.boundaries import SegmenterConfig, normalize_corpus, segment_utterance
from wordseg.embed import fit_pca
from wordseg.eskmeans import ESKMeansConfig, dp_segment, eskmeans_fit, segment_cost
from wordseg.kmeans import Codebook, kmeans_fit, lloyd_steps, _kmeanspp_init
from wordseg.metrics import match_boundaries, ned, pair_ned, r_value, token_f1
from wordseg.types import BoundarySet, FeatureMatrix

from synth import corpus_to_disk, planted_corpus
from test_eskmeans import oracle_best_cost, prototype_corpus, random_dp_instance
from test_kmeans import exhaustive_two_partition_objective, two_blob_dataset
from test_metrics import make_cluster_classfile


def report_pass(name: str) -> None:
    print(f"[ACCEPTANCE] PASS: {name}")


def test_dp_optimality_vs_bruteforce():
    """dp_segment equals exhaustive subset enumeration on 1000 random instances."""
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(1000):
        projected, candidates, codebook, config = random_dp_instance(rng, max_boundaries=12, max_k=8)
        res = dp_segment(projected, candidates, codebook, config)
        best = oracle_best_cost(projected, candidates, codebook, config)
        assert abs(res.cost - best) <= 1e-9, f"DP {res.cost} != brute force {best}"
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"DP optimality check took {elapsed:.1f}s (budget 30s)"
    report_pass(f"DP optimality on 1000 random instances within 1e-9 ({elapsed:.1f}s)")


def test_coordinate_descent_monotonicity(tmp_path):
    """J per iteration non-increasing over 100 seeded synthetic corpora."""
    rng = np.random.default_rng(77)
    start = time.perf_counter()
    for trial in range(100):
        root = tmp_path / f"c{trial}"
        mats, cands, _ = prototype_corpus(
            rng, n_utts=20, dim=6, seg_len=8, n_segs=3, noise=0.18
        )
        assert all(len(c.frames) <= 10 for c in cands.values())
        manifest, _ = corpus_to_disk(mats, root)
        model = fit_pca(np.concatenate([m.data for m in mats]), 5)
        config = ESKMeansConfig(n_clusters=4, seed=trial, max_outer_iters=10)
        state, _, _ = eskmeans_fit(manifest, cands, model, config)
        seq = []
        for i, j_dp in enumerate(state.j_after_dp):
            seq.append(j_dp)
            if i < len(state.j_after_refit):
                seq.append(state.j_after_refit[i])
        assert all(b <= a + 1e-9 for a, b in zip(seq, seq[1:])), f"trial {trial}: {seq}"
        assert state.outer_iters_run <= config.max_outer_iters
    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"monotonicity check took {elapsed:.1f}s (budget 60s)"
    report_pass(f"coordinate-descent J non-increasing on 100 corpora ({elapsed:.1f}s)")


def test_reduction_property(tmp_path):
    """ES-KMeans+ with zero outer iterations is byte-identical to clustering."""
    rng = np.random.default_rng(5)
    mats, _ = planted_corpus(rng, 10, dim=12, segments_per_utt=(2, 5), noise=0.1)
    manifest, manifest_path = corpus_to_disk(mats, tmp_path)
    base = cfg.load_config(None)
    base["paths"]["manifest"] = str(manifest_path)
    base["pca"].update({"dim": 8, "seed": 3})
    base["kmeans"].update({"k": 7, "seed": 9})
    resolved = cfg.resolve(base, mode="candidates")
    seg_out = tmp_path / "seg"
    candidates = cli.cmd_segment(resolved, seg_out)
    clus_out = tmp_path / "clus"
    cli.cmd_cluster(resolved, clus_out, boundary_sets=candidates)
    esk_resolved = json.loads(json.dumps(resolved))
    esk_resolved["eskmeans"]["max_outer_iters"] = 0
    esk_out = tmp_path / "esk"
    cli.cmd_eskmeans(esk_resolved, esk_out, candidate_sets=candidates)
    clus_bytes = (clus_out / "classes.txt").read_bytes()
    esk_bytes = (esk_out / "classes.txt").read_bytes()
    assert clus_bytes == esk_bytes and len(clus_bytes) > 0
    report_pass("max_outer_iters=0 ClassFile byte-identical to the plain pipeline")


def test_planted_boundary_recovery():
    """Prominence segmentation recovers planted boundaries at >= 90% hit rate."""
    rng = np.random.default_rng(11)
    mats, truths = planted_corpus(
        rng, 200, dim=24, segments_per_utt=(3, 8), min_len=5, max_len=15, noise=0.1
    )
    normalized = normalize_corpus(mats)
    held_out, eval_set = normalized[:20], normalized[20:]
    held_truth, eval_truth = truths[:20], truths[20:]

    def hit_stats(matrices, truth_sets, config):
        hits = n_ref = n_hyp = 0
        for m, truth in zip(matrices, truth_sets):
            hyp = segment_utterance(m, config)
            ref_interior = [float(f) for f in truth.frames[1:-1]]
            hyp_interior = [float(f) for f in hyp.frames[1:-1]]
            hits += match_boundaries(ref_interior, hyp_interior, tol_s=1.0)
            n_ref += len(ref_interior)
            n_hyp += len(hyp_interior)
        return hits, n_ref, n_hyp

    best_config, best_f1 = None, -1.0
    for window in (1, 2, 3):
        for threshold in np.arange(0.1, 0.95, 0.05):
            config = SegmenterConfig(window_frames=window, prominence_threshold=float(threshold))
            hits, n_ref, n_hyp = hit_stats(held_out, held_truth, config)
            precision = hits / n_hyp if n_hyp else 0.0
            recall = hits / n_ref
            f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
            if f1 > best_f1:
                best_f1, best_config = f1, config
    hits, n_ref, _ = hit_stats(eval_set, eval_truth, best_config)
    hit_rate = hits / n_ref
    assert hit_rate >= 0.90, (
        f"hit rate {hit_rate:.3f} with window={best_config.window_frames}, "
        f"threshold={best_config.prominence_threshold}"
    )
    report_pass(
        f"planted-boundary hit rate {100 * hit_rate:.1f}% at +/-1 frame "
        f"(window={best_config.window_frames}, threshold={best_config.prominence_threshold:.2f})"
    )


def test_metric_hand_cases():
    """R-value, NED, and token-F1 fixtures match hand computation exactly."""
    assert 100 * r_value(1.0, 0.0) == pytest.approx(100.0, abs=1e-12)
    assert 100 * r_value(0.0, 0.0) == pytest.approx(14.645, abs=1e-3)

    cf0, alns0 = make_cluster_classfile([[["a", "b"], ["a", "b"], ["a", "b"]]])
    assert ned(cf0, alns0).ned == 0.0
    cf1, alns1 = make_cluster_classfile([[["a", "b"], ["a", "c"]]])
    assert ned(cf1, alns1).ned == 0.5
    # Four pairs pooling to exactly 0.5 (pair-level, not cluster-level, mean).
    cf2, alns2 = make_cluster_classfile(
        [
            [["a", "b"], ["a", "c"]],
            [["w", "x", "y", "z"], ["w", "x", "y", "z"], ["w", "p", "q", "r"]],
        ]
    )
    res = ned(cf2, alns2)
    assert res.n_pairs == 4 and res.ned == pytest.approx(0.5, abs=1e-12)
    assert sum(
        [pair_ned(["a", "b"], ["a", "c"]), pair_ned(["x"], ["x"]), pair_ned(["x"], ["q"]), pair_ned(["x", "y"], ["x", "q"])]
    ) / 4 == pytest.approx(0.5)

    perfect = token_f1({"u": [(0.0, 0.5), (0.5, 1.0)]}, {"u": [(0.0, 0.5), (0.5, 1.0)]})
    assert perfect.f1 == 1.0
    merged = token_f1({"u": [(0.0, 0.4), (0.4, 0.7), (0.7, 1.0)]}, {"u": [(0.0, 1.0)]})
    assert merged.n_correct == 0 and merged.f1 == 0.0
    shifted = token_f1({"u": [(0.0, 0.5), (0.5, 1.0)]}, {"u": [(0.0, 0.49), (0.49, 1.0)]})
    assert shifted.n_correct == 2 and shifted.f1 == 1.0
    report_pass("metric hand-cases (R-value, NED, token F1) exact")


def test_kmeans_criteria():
    """Lloyd monotonicity, K=N zero objective, exhaustive 2-partition oracle."""
    rng = np.random.default_rng(13)
    for trial in range(100):
        n = int(rng.integers(5, 50))
        m = int(rng.integers(1, 6))
        k = int(rng.integers(1, min(n, 9)))
        points = rng.normal(size=(n, m))
        trace: list[float] = []
        init = Codebook(_kmeanspp_init(points, k, np.random.default_rng(trial)))
        lloyd_steps(points, init, max_iters=25, half_step_objectives=trace)
        assert all(b <= a + 1e-9 for a, b in zip(trace, trace[1:]))

    points = np.random.default_rng(14).normal(size=(9, 3))
    exact = kmeans_fit(points, k=9, seed=0)
    assert exact.objective == pytest.approx(0.0, abs=1e-12)

    blob = two_blob_dataset(np.random.default_rng(15), n=12, m=2)
    result = kmeans_fit(blob, k=2, seed=0)
    oracle = exhaustive_two_partition_objective(blob)
    assert abs(result.objective - oracle) <= 1e-9
    report_pass("K-means monotonicity, K=N identity, exhaustive-partition oracle")


def _speed_corpus(tmp_path: Path):
    rng = np.random.default_rng(99)
    mats, _ = planted_corpus(
        rng, 1000, dim=64, segments_per_utt=(45, 55), min_len=5, max_len=15, noise=0.15
    )
    frames = sum(m.n_frames for m in mats)
    assert 350_000 < frames < 700_000  # ~500 frames per utterance
    return corpus_to_disk(mats, tmp_path)


def test_speed_claim(tmp_path):
    """Prominence pipeline wall clock <= 0.5x ES-KMeans+ on the large corpus."""
    start_total = time.perf_counter()
    manifest, manifest_path = _speed_corpus(tmp_path)

    base = cfg.load_config(None)
    base["paths"]["manifest"] = str(manifest_path)
    base["pca"].update({"dim": 32, "sample_cap": 100_000, "seed": 0})
    base["kmeans"].update({"k": 500, "seed": 0, "max_iters": 25})
    base["eskmeans"].update({"max_outer_iters": 10})
    # Synthetic dissimilarity spikes are one frame wide; the development
    # window/threshold pairs of real speech flatten them, so the synthetic
    # check uses narrower windows with the same two-tier recall structure.
    base["segmenter"].update({"window_frames": 2, "prominence_threshold": 0.3})

    t0 = time.perf_counter()
    resolved = cfg.resolve(base)
    prom_out = tmp_path / "prom"
    bounds = cli.cmd_segment(resolved, prom_out)
    cli.cmd_cluster(resolved, prom_out, boundary_sets=bounds)
    prominence_s = time.perf_counter() - t0

    high_recall = json.loads(json.dumps(base))
    high_recall["segmenter"].update({"window_frames": 2, "prominence_threshold": 0.1})
    resolved_hr = cfg.resolve(high_recall)
    t0 = time.perf_counter()
    esk_out = tmp_path / "esk"
    candidates = cli.cmd_segment(resolved_hr, esk_out)
    state, _ = cli.cmd_eskmeans(resolved_hr, esk_out, candidate_sets=candidates)
    eskmeans_s = time.perf_counter() - t0

    total = time.perf_counter() - start_total
    n_cand = sum(len(b.frames) - 2 for b in candidates)
    assert n_cand / len(candidates) >= 40, "candidate set is not high-recall"
    assert prominence_s <= 0.5 * eskmeans_s, (
        f"prominence {prominence_s:.1f}s vs ES-KMeans+ {eskmeans_s:.1f}s"
    )
    assert total < 600.0, f"whole speed check took {total:.0f}s (budget 600s)"
    report_pass(
        f"speed claim: prominence {prominence_s:.1f}s vs ES-KMeans+ {eskmeans_s:.1f}s "
        f"({eskmeans_s / prominence_s:.1f}x), total {total:.0f}s"
    )


@pytest.mark.skipif(
    "WORDSEG_DEVCLEAN_MANIFEST" not in __import__("os").environ,
    reason="optional integration check: needs externally extracted LibriSpeech "
    "dev-clean HuBERT features (WORDSEG_DEVCLEAN_MANIFEST, "
    "WORDSEG_DEVCLEAN_WORDS, WORDSEG_DEVCLEAN_PHONES)",
)
def test_librispeech_devclean_integration(tmp_path):
    """Optional: NED/R-value/token-F1 near the published dev-clean ablation."""
    import os

    base = cfg.load_config(None)
    base["paths"]["manifest"] = os.environ["WORDSEG_DEVCLEAN_MANIFEST"]
    base["paths"]["word_alignments"] = os.environ["WORDSEG_DEVCLEAN_WORDS"]
    base["paths"]["phone_alignments"] = os.environ["WORDSEG_DEVCLEAN_PHONES"]
    manifest = io.load_manifest(base["paths"]["manifest"])
    hours = sum(e.frames / e.frame_rate_hz for e in manifest.entries) / 3600.0
    base["kmeans"]["k"] = max(1, round(43000 * hours / 45.0))
    resolved = cfg.resolve(base, mode="prominence")
    out = tmp_path / "devclean"
    bounds = cli.cmd_segment(resolved, out)
    classfile = cli.cmd_cluster(resolved, out, boundary_sets=bounds)
    report = cli.cmd_evaluate(resolved, out, classfile=classfile, boundary_sets=bounds)
    assert abs(report["ned"] - 40.4) <= 5.0
    assert abs(report["r_value"] - 50.7) <= 5.0
    assert abs(report["token_f1"] - 15.6) <= 5.0
    report_pass("LibriSpeech dev-clean integration within +/-5.0 of published ablation")
