"""Word segmentation and lexicon evaluation.

Boundary precision/recall and R-value, token F1 (both boundaries of a token
must be correct), and NED over phoneme transcriptions of same-cluster
segments.  Counts are pooled over the corpus before rates are computed;
utterance-edge boundaries are excluded from scoring on both sides since they
are given rather than discovered.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .boundaries import frames_to_seconds
from .types import Alignment, BoundarySet, ClassFile, Manifest, Segment

logger = logging.getLogger(__name__)

DEFAULT_TOLERANCE_S = 0.02

# A phone counts as part of a segment when the overlap exceeds either bound.
OVERLAP_ABS_S = 0.03
OVERLAP_FRACTION = 0.5

_SQRT2 = math.sqrt(2.0)


@dataclass
class BoundaryEvalResult:
    n_ref: int
    n_hyp: int
    n_hit: int
    precision: float
    recall: float
    hit_rate: float
    over_segmentation: float
    r_value: float
    flag: str | None = None

    @property
    def f1(self) -> float:
        if self.precision + self.recall == 0:
            return 0.0
        return 2 * self.precision * self.recall / (self.precision + self.recall)


@dataclass
class TokenEvalResult:
    n_ref_tokens: int
    n_hyp_tokens: int
    n_correct: int
    precision: float
    recall: float
    f1: float


@dataclass
class NEDResult:
    ned: float
    n_pairs: int
    n_clusters_scored: int


def _check_sorted(times: list[float], name: str) -> None:
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError(f"{name} boundary times must be sorted")


def match_boundaries(ref_times: list[float], hyp_times: list[float], tol_s: float = DEFAULT_TOLERANCE_S) -> int:
    """Count one-to-one matches between reference and hypothesis boundaries.

    Scans references in order and matches each to the earliest unmatched
    hypothesis boundary within the tolerance.  Because all match windows
    share the same width, this greedy scan attains the maximum one-to-one
    matching (a nearest-first scan does not; see tests).  Utterance edges
    must already be excluded from both lists.
    """
    _check_sorted(ref_times, "reference")
    _check_sorted(hyp_times, "hypothesis")
    hits = 0
    h = 0
    n_hyp = len(hyp_times)
    for r in ref_times:
        while h < n_hyp and hyp_times[h] < r - tol_s:
            h += 1
        if h < n_hyp and abs(hyp_times[h] - r) <= tol_s:
            hits += 1
            h += 1
    return hits


def match_boundaries_nearest(
    ref_times: list[float], hyp_times: list[float], tol_s: float = DEFAULT_TOLERANCE_S
) -> int:
    """Nearest-first greedy matching; kept for comparison, can undercount."""
    _check_sorted(ref_times, "reference")
    _check_sorted(hyp_times, "hypothesis")
    taken = [False] * len(hyp_times)
    hits = 0
    for r in ref_times:
        best = None
        best_dist = tol_s
        for i, hyp in enumerate(hyp_times):
            if taken[i]:
                continue
            dist = abs(hyp - r)
            if dist <= best_dist and (best is None or dist < best_dist):
                best = i
                best_dist = dist
        if best is not None:
            taken[best] = True
            hits += 1
    return hits


def r_value(hit_rate: float, over_segmentation: float) -> float:
    """Distance-based score against the ideal 100% hit-rate, 0% OS point.

    Returns a fraction (1.0 is perfect); may be negative under extreme
    over-segmentation, and -inf in the OS -> +inf limit.
    """
    if not 0.0 <= hit_rate <= 1.0:
        raise ValueError(f"hit rate must be in [0, 1], got {hit_rate}")
    r1 = math.hypot(1.0 - hit_rate, over_segmentation)
    r2 = (-over_segmentation + hit_rate - 1.0) / _SQRT2
    return 1.0 - (abs(r1) + abs(r2)) / 2.0


def boundary_eval(n_ref: int, n_hyp: int, n_hit: int) -> BoundaryEvalResult:
    """Rates and R-value from pooled counts; degenerate cases are flagged."""
    if n_hit > min(n_ref, n_hyp):
        raise ValueError(f"n_hit={n_hit} exceeds min(n_ref={n_ref}, n_hyp={n_hyp})")
    recall = n_hit / n_ref if n_ref else 0.0
    precision = n_hit / n_hyp if n_hyp else 0.0
    flag = None
    if n_hyp == 0:
        over_segmentation = float("nan")
        r_val = float("nan")
        flag = "no_hypothesis_boundaries"
    elif precision == 0.0:
        # OS = recall/precision - 1 diverges; report the limit, flagged.
        over_segmentation = float("inf")
        r_val = float("-inf")
        flag = "infinite_over_segmentation"
    else:
        over_segmentation = recall / precision - 1.0
        r_val = r_value(recall, over_segmentation)
    return BoundaryEvalResult(
        n_ref=n_ref,
        n_hyp=n_hyp,
        n_hit=n_hit,
        precision=precision,
        recall=recall,
        hit_rate=recall,
        over_segmentation=over_segmentation,
        r_value=r_val,
        flag=flag,
    )


def token_f1(
    ref_tokens: dict[str, list[tuple[float, float]]],
    hyp_tokens: dict[str, list[tuple[float, float]]],
    tol_s: float = DEFAULT_TOLERANCE_S,
) -> TokenEvalResult:
    """Token-level scores: a hypothesis token needs both boundaries correct.

    Tokens are (start_s, end_s) per utterance.  Each reference token credits
    at most one hypothesis token, matched greedily in time order.  Raises on
    overlapping hypothesis tokens (invalid segmentation).
    """
    n_ref = sum(len(v) for v in ref_tokens.values())
    n_hyp = 0
    n_correct = 0
    for utt, hyps in hyp_tokens.items():
        hyps = sorted(hyps)
        for (s1, e1), (s2, e2) in zip(hyps, hyps[1:]):
            if e1 > s2 + 1e-6:
                raise ValueError(f"{utt}: overlapping hypothesis tokens ({s1},{e1}) and ({s2},{e2})")
        n_hyp += len(hyps)
        refs = sorted(ref_tokens.get(utt, []))
        used = [False] * len(refs)
        for s, e in hyps:
            for i, (rs, re) in enumerate(refs):
                if not used[i] and abs(s - rs) <= tol_s and abs(e - re) <= tol_s:
                    used[i] = True
                    n_correct += 1
                    break
    precision = n_correct / n_hyp if n_hyp else 0.0
    recall = n_correct / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return TokenEvalResult(
        n_ref_tokens=n_ref,
        n_hyp_tokens=n_hyp,
        n_correct=n_correct,
        precision=precision,
        recall=recall,
        f1=f1,
    )


def transcribe_segment(segment: Segment, phone_alignment: Alignment) -> list[str]:
    """Phoneme labels overlapping the segment, in time order.

    A phone is included when the overlap exceeds 30 ms or half the phone's
    duration.  The result may be empty.
    """
    labels = []
    for e in phone_alignment.entries:
        overlap = min(segment.offset_s, e.end_s) - max(segment.onset_s, e.start_s)
        if overlap > OVERLAP_ABS_S or overlap > OVERLAP_FRACTION * (e.end_s - e.start_s):
            labels.append(e.label)
    return labels


def levenshtein(a: list[str], b: list[str]) -> int:
    """Unit-cost edit distance over label sequences."""
    if len(a) > len(b):
        a, b = b, a
    current = list(range(len(a) + 1))
    for i, bi in enumerate(b, start=1):
        previous, current = current, [i] + [0] * len(a)
        for j, aj in enumerate(a, start=1):
            change = previous[j - 1] + (aj != bi)
            current[j] = min(previous[j] + 1, current[j - 1] + 1, change)
    return current[len(a)]


def pair_ned(a: list[str], b: list[str]) -> float:
    """Levenshtein distance normalized by the longer sequence; two empties score 0."""
    if not a and not b:
        return 0.0
    return levenshtein(a, b) / max(len(a), len(b))


def ned(
    classfile: ClassFile,
    phone_alignments: dict[str, Alignment],
    pooling: str = "pairs",
) -> NEDResult:
    """NED over all same-cluster segment pairs.

    pooling="pairs" averages over every pair across all clusters (default);
    pooling="clusters" averages per-cluster means.  Singleton clusters
    contribute no pairs; raises if the whole lexicon has none.
    """
    if pooling not in ("pairs", "clusters"):
        raise ValueError(f"unknown pooling {pooling!r}")
    total = 0.0
    n_pairs = 0
    cluster_means = []
    for k in sorted(classfile.classes):
        segs = classfile.classes[k]
        if len(segs) < 2:
            continue
        seqs = []
        for seg in segs:
            if seg.utt_id not in phone_alignments:
                raise KeyError(f"no phone alignment for utterance {seg.utt_id!r}")
            seqs.append(transcribe_segment(seg, phone_alignments[seg.utt_id]))
        cluster_total = 0.0
        cluster_pairs = 0
        for i in range(len(seqs)):
            for j in range(i + 1, len(seqs)):
                cluster_total += pair_ned(seqs[i], seqs[j])
                cluster_pairs += 1
        total += cluster_total
        n_pairs += cluster_pairs
        cluster_means.append(cluster_total / cluster_pairs)
    if n_pairs == 0:
        raise ValueError("no scorable pairs: every cluster is a singleton")
    value = (sum(cluster_means) / len(cluster_means)) if pooling == "clusters" else total / n_pairs
    return NEDResult(ned=value, n_pairs=n_pairs, n_clusters_scored=len(cluster_means))


def _interior_ref_boundaries(word_alignment: Alignment) -> list[float]:
    """Word boundary times excluding the utterance edges, deduplicated."""
    times = []
    for e in word_alignment.entries:
        times.extend((e.start_s, e.end_s))
    times.sort()
    interior = times[1:-1] if len(times) >= 2 else []
    out: list[float] = []
    for t in interior:
        if not out or t - out[-1] > 1e-6:
            out.append(t)
    return out


def _interior_hyp_boundaries(bs: BoundarySet, frame_rate_hz: float) -> list[float]:
    return [frames_to_seconds(f, frame_rate_hz) for f in bs.frames[1:-1]]


def evaluate_run(
    manifest: Manifest,
    classfile: ClassFile,
    hyp_boundaries: list[BoundarySet],
    word_alignments: dict[str, Alignment],
    phone_alignments: dict[str, Alignment],
    tol_s: float = DEFAULT_TOLERANCE_S,
    ned_pooling: str = "pairs",
    macro_average: bool = False,
) -> dict:
    """Aggregate boundary, token, and NED metrics over the corpus.

    Counts are summed over utterances before rates are computed.  Top-level
    ned / r_value / token_f1 are percentages; the nested sections carry raw
    counts and fractional rates.
    """
    classfile.check_references(manifest)
    rates = {e.utt_id: e.frame_rate_hz for e in manifest.entries}
    bounds_by_utt = {bs.utt_id: bs for bs in hyp_boundaries}

    n_ref = n_hyp = n_hit = 0
    per_utt = []
    for entry in manifest.entries:
        if entry.utt_id not in word_alignments:
            raise KeyError(f"no word alignment for utterance {entry.utt_id!r}")
        if entry.utt_id not in bounds_by_utt:
            raise KeyError(f"no hypothesis boundaries for utterance {entry.utt_id!r}")
        ref = _interior_ref_boundaries(word_alignments[entry.utt_id])
        hyp = _interior_hyp_boundaries(bounds_by_utt[entry.utt_id], rates[entry.utt_id])
        hit = match_boundaries(ref, hyp, tol_s)
        n_ref += len(ref)
        n_hyp += len(hyp)
        n_hit += hit
        per_utt.append((entry.utt_id, len(ref), len(hyp), hit))

    boundary = boundary_eval(n_ref, n_hyp, n_hit)
    if boundary.flag:
        logger.warning("boundary scoring flagged: %s", boundary.flag)

    ref_tokens = {
        utt: [(e.start_s, e.end_s) for e in aln.entries] for utt, aln in word_alignments.items()
    }
    hyp_tokens: dict[str, list[tuple[float, float]]] = {}
    for _, seg in classfile.all_segments():
        hyp_tokens.setdefault(seg.utt_id, []).append((seg.onset_s, seg.offset_s))
    tokens = token_f1(ref_tokens, hyp_tokens, tol_s)

    ned_result = ned(classfile, phone_alignments, pooling=ned_pooling)

    report = {
        "ned": 100.0 * ned_result.ned,
        "r_value": 100.0 * boundary.r_value,
        "token_f1": 100.0 * tokens.f1,
        "boundary": {
            "n_ref": boundary.n_ref,
            "n_hyp": boundary.n_hyp,
            "n_hit": boundary.n_hit,
            "precision": boundary.precision,
            "recall": boundary.recall,
            "hit_rate": boundary.hit_rate,
            "over_segmentation": boundary.over_segmentation,
            "f1": boundary.f1,
            "flag": boundary.flag,
        },
        "token": {
            "n_ref_tokens": tokens.n_ref_tokens,
            "n_hyp_tokens": tokens.n_hyp_tokens,
            "n_correct": tokens.n_correct,
            "precision": tokens.precision,
            "recall": tokens.recall,
        },
        "n_pairs": ned_result.n_pairs,
        "n_clusters_scored": ned_result.n_clusters_scored,
        "tolerance_s": tol_s,
        "ned_pooling": ned_pooling,
    }
    if macro_average:
        utt_precisions = [h / nh for _, _, nh, h in per_utt if nh]
        utt_recalls = [h / nr for _, nr, _, h in per_utt if nr]
        report["macro"] = {
            "precision": sum(utt_precisions) / len(utt_precisions) if utt_precisions else 0.0,
            "recall": sum(utt_recalls) / len(utt_recalls) if utt_recalls else 0.0,
        }
    return report


def format_report(report: dict) -> str:
    """Aligned text table for terminal output."""
    rows = [
        ("NED", report["ned"]),
        ("R-value", report["r_value"]),
        ("Token F1", report["token_f1"]),
        ("Boundary precision", 100.0 * report["boundary"]["precision"]),
        ("Boundary recall", 100.0 * report["boundary"]["recall"]),
        ("Boundary F1", 100.0 * report["boundary"]["f1"]),
    ]
    width = max(len(name) for name, _ in rows)
    lines = [f"{name:<{width}}  {value:7.2f}" for name, value in rows]
    if report["boundary"].get("flag"):
        lines.append(f"{'flag':<{width}}  {report['boundary']['flag']}")
    return "\n".join(lines)
