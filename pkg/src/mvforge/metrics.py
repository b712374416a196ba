"""Localization and counting metrics.

Point predictions are matched to ground truth one-to-one with a distance
gate; detection scores (MODA, MODP, precision/recall/F1) then follow from
the match counts, and counting scores (MAE, MSE, NAE) compare totals only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .errors import FormatError, UndefinedMetric

DEFAULT_GROUND_THRESHOLD_M = 0.5
DEFAULT_IMAGE_THRESHOLD_PX = 3.0

#: Crowd-size buckets for per-granularity counting breakdowns.
BUCKETS = (("sparse", 0, 399), ("medium", 400, 699), ("congested", 700, None))


@dataclass
class MatchReport:
    """Outcome of one-to-one point matching at a distance threshold."""

    tp: int
    fp: int
    fn: int
    threshold: float
    pairs: list[tuple[int, int]] = field(default_factory=list)
    distances: list[float] = field(default_factory=list)


def match_points(
    pred: np.ndarray,
    gt: np.ndarray,
    threshold: float,
    method: str = "hungarian",
) -> MatchReport:
    """Match predicted points to ground-truth points.

    Only pairs closer than ``threshold`` are eligible. The default method
    finds a maximum-cardinality matching with minimum total distance (via an
    assignment problem where ineligible pairs carry a prohibitive cost);
    ``method="greedy"`` instead takes eligible pairs in ascending
    (distance, gt index, pred index) order.
    """
    if threshold <= 0 or not math.isfinite(threshold):
        raise ValueError(f"threshold must be positive and finite, got {threshold}")
    pred = np.asarray(pred, dtype=float).reshape(-1, 2)
    gt = np.asarray(gt, dtype=float).reshape(-1, 2)
    n_pred, n_gt = len(pred), len(gt)
    if n_pred == 0 or n_gt == 0:
        return MatchReport(tp=0, fp=n_pred, fn=n_gt, threshold=threshold)

    d = cdist(gt, pred)
    if method == "hungarian":
        # a cost bigger than any achievable real total makes the assignment
        # prefer more in-gate matches over any saving in distance
        big = threshold * (min(n_gt, n_pred) + 1.0)
        cost = np.where(d < threshold, d, big)
        rows, cols = linear_sum_assignment(cost)
        pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if d[r, c] < threshold]
    elif method == "greedy":
        cand = [
            (d[r, c], r, c)
            for r in range(n_gt)
            for c in range(n_pred)
            if d[r, c] < threshold
        ]
        cand.sort()
        used_gt: set[int] = set()
        used_pred: set[int] = set()
        pairs = []
        for dist, r, c in cand:
            if r not in used_gt and c not in used_pred:
                pairs.append((r, c))
                used_gt.add(r)
                used_pred.add(c)
    else:
        raise ValueError(f"unknown matching method {method!r}")

    pairs.sort()
    tp = len(pairs)
    return MatchReport(
        tp=tp,
        fp=n_pred - tp,
        fn=n_gt - tp,
        threshold=threshold,
        pairs=pairs,
        distances=[float(d[r, c]) for r, c in pairs],
    )


def pool_reports(reports: Sequence[MatchReport]) -> MatchReport:
    """Pool per-frame reports into one (micro-average basis)."""
    if not reports:
        raise UndefinedMetric("cannot pool zero reports")
    threshold = reports[0].threshold
    for r in reports[1:]:
        if r.threshold != threshold:
            raise ValueError("cannot pool reports with different thresholds")
    pooled = MatchReport(
        tp=sum(r.tp for r in reports),
        fp=sum(r.fp for r in reports),
        fn=sum(r.fn for r in reports),
        threshold=threshold,
    )
    for r in reports:
        pooled.distances.extend(r.distances)
    return pooled


def moda(report: MatchReport) -> float:
    """Multiple-object detection accuracy: 1 - (fp + fn) / (tp + fn).

    Raises:
        UndefinedMetric: with zero ground-truth points.
    """
    n_gt = report.tp + report.fn
    if n_gt == 0:
        raise UndefinedMetric("MODA needs at least one ground-truth point")
    return 1.0 - (report.fp + report.fn) / n_gt


def modp(report: MatchReport) -> float:
    """Multiple-object detection precision: mean over matches of 1 - d/t.

    Raises:
        UndefinedMetric: with zero matches.
    """
    if report.tp == 0:
        raise UndefinedMetric("MODP needs at least one match")
    return float(np.mean([1.0 - d / report.threshold for d in report.distances]))


def precision_recall_f1(report: MatchReport) -> tuple[float, float, float]:
    """Precision, recall and F1 (F1 is defined as 0 when P + R = 0).

    Raises:
        UndefinedMetric: when a denominator (predictions for precision,
            ground truth for recall) is zero.
    """
    if report.tp + report.fp == 0:
        raise UndefinedMetric("precision needs at least one prediction")
    if report.tp + report.fn == 0:
        raise UndefinedMetric("recall needs at least one ground-truth point")
    precision = report.tp / (report.tp + report.fp)
    recall = report.tp / (report.tp + report.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


@dataclass
class CountingStats:
    """Counting errors over a set of frames (optionally split by crowd size)."""

    n: int
    mae: Optional[float]
    mse: Optional[float]
    nae: Optional[float]
    nae_excluded: int = 0
    buckets: dict = field(default_factory=dict)


def _counting_core(pred: np.ndarray, gt: np.ndarray) -> CountingStats:
    n = len(gt)
    if n == 0:
        return CountingStats(n=0, mae=None, mse=None, nae=None)
    err = np.abs(pred - gt)
    mae = float(err.mean())
    mse = float(np.sqrt(np.mean((pred - gt) ** 2)))
    positive = gt > 0
    excluded = int(n - positive.sum())
    if positive.any():
        nae = float(np.mean(err[positive] / gt[positive]))
    else:
        nae = None
    return CountingStats(n=n, mae=mae, mse=mse, nae=nae, nae_excluded=excluded)


def counting_stats(pred_counts: Sequence[float], gt_counts: Sequence[float]) -> CountingStats:
    """MAE, root-MSE and NAE over paired counts, with per-bucket breakdowns.

    NAE skips frames whose true count is zero; ``nae_excluded`` records how
    many were skipped (the flag that the reported NAE is partial).

    Raises:
        UndefinedMetric: with zero frames.
    """
    pred = np.asarray(pred_counts, dtype=float)
    gt = np.asarray(gt_counts, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError("pred_counts and gt_counts must have equal length")
    if len(gt) == 0:
        raise UndefinedMetric("counting metrics need at least one frame")
    stats = _counting_core(pred, gt)
    for name, lo, hi in BUCKETS:
        mask = gt >= lo if hi is None else (gt >= lo) & (gt <= hi)
        stats.buckets[name] = _counting_core(pred[mask], gt[mask])
    return stats


# ---------------------------------------------------------------------------
# Prediction files and whole-run evaluation records
# ---------------------------------------------------------------------------

def load_points(path) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Read a prediction file: one ``x y`` or ``x y score`` line per point.

    Every line must carry the same number of fields. Returns the (n, 2)
    points and, when present, the (n,) scores.
    """
    path = str(path)
    points: list[tuple[float, float]] = []
    scores: list[float] = []
    width = None
    offset = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for raw in fh:
            line = raw.strip()
            if line:
                tokens = line.split()
                if len(tokens) not in (2, 3):
                    raise FormatError(path, offset, "x y [score]")
                if width is None:
                    width = len(tokens)
                elif len(tokens) != width:
                    raise FormatError(path, offset, f"{width} fields per line")
                try:
                    x, y = float(tokens[0]), float(tokens[1])
                    if len(tokens) == 3:
                        scores.append(float(tokens[2]))
                except ValueError:
                    raise FormatError(path, offset, "numeric fields") from None
                points.append((x, y))
            offset += len(raw.encode("utf-8"))
    pts = np.array(points, dtype=float).reshape(-1, 2)
    return pts, (np.array(scores) if width == 3 else None)


def _metric_or_none(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetric:
        return None


def localization_record(report: MatchReport, space: str) -> dict:
    """A JSON-ready record of every detection metric for one match report."""
    prf = _metric_or_none(precision_recall_f1, report)
    return {
        "space": space,
        "threshold": report.threshold,
        "n_gt": report.tp + report.fn,
        "n_pred": report.tp + report.fp,
        "tp": report.tp,
        "fp": report.fp,
        "fn": report.fn,
        "moda": _metric_or_none(moda, report),
        "modp": _metric_or_none(modp, report),
        "precision": prf[0] if prf else None,
        "recall": prf[1] if prf else None,
        "f1": prf[2] if prf else None,
    }


def evaluate_localization(
    pred_file,
    gt,
    space: str = "ground",
    threshold: Optional[float] = None,
    method: str = "hungarian",
) -> dict:
    """Evaluate one prediction file against one frame's ground truth.

    ``gt`` is either a FrameRecord (ground space: people's (x, y) in metres)
    or a ViewAnnotation (image space: visible people's (u, v) in pixels).
    The default gate is 0.5 m on the ground and 3 px in the image.
    """
    if space not in ("ground", "image"):
        raise ValueError(f"space must be 'ground' or 'image', got {space!r}")
    if threshold is None:
        threshold = DEFAULT_GROUND_THRESHOLD_M if space == "ground" else DEFAULT_IMAGE_THRESHOLD_PX
    pred, _scores = load_points(pred_file)
    gt_points = gt_points_for(gt, space)
    report = match_points(pred, gt_points, threshold, method=method)
    return localization_record(report, space)


def gt_points_for(gt, space: str) -> np.ndarray:
    """Extract ground-truth points: (x, y) on the ground, visible (u, v) in images."""
    if space == "ground":
        return np.array(
            [[p.position.x, p.position.y] for p in gt.persons], dtype=float
        ).reshape(-1, 2)
    return np.array(
        [[u, v] for _pid, u, v, vis in gt.entries if vis], dtype=float
    ).reshape(-1, 2)
