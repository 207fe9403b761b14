"""Detection metrics and the clustering runtime benchmark.

Predictions are matched to ground truth per frame by minimum-distance
assignment inside a gate; pooled (micro-averaged) counts give precision,
recall, and the average distance error over true positives only.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .assignment import gated_assignment
from .clustering import ClusterParams, cluster_scan, dbscan_baseline
from .scene import make_benchmark_scan

DEFAULT_MATCH_GATE = 0.5  # m


def _scan_resolution(scan) -> float:
    """Azimuth step of a ring scan, from its densest ring."""
    best = math.radians(0.2)
    largest = 0
    for ring in scan.rings:
        if len(ring) > max(largest, 2):
            largest = len(ring)
            best = float(np.median(np.diff(ring.azimuths)))
    return best


@dataclass
class FrameScore:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    sum_matched_distance: float = 0.0

    def __post_init__(self):
        if min(self.true_positives, self.false_positives, self.false_negatives) < 0:
            raise ValueError("counts must be >= 0")
        if self.sum_matched_distance < 0.0:
            raise ValueError("matched distance must be >= 0")


def _compatible(pred_class: str, gt_class: str) -> bool:
    # An unlabeled detection still counts as detecting the object; a wrong
    # semantic label does not.
    return pred_class == "unknown" or pred_class == gt_class


def match_frame(predictions, ground_truth, d_match: float = DEFAULT_MATCH_GATE,
                class_gates=None) -> FrameScore:
    """Score one frame.

    ``predictions`` and ``ground_truth`` are sequences of
    ``(class_label, x, y)``. Matching is minimum-distance assignment with
    the gate ``d_match`` and class agreement; matched pairs are true
    positives and contribute their distance, leftovers are false
    positives/negatives.

    ``class_gates`` widens the gate per ground-truth class: a position on
    the visible surface of a bed-sized object can sit most of a meter from
    the object center without being a miss.
    """
    class_gates = class_gates or {}
    cost = np.full((len(predictions), len(ground_truth)), np.inf)
    gate = np.full(len(ground_truth), d_match)
    for j, (g_cls, _, _) in enumerate(ground_truth):
        gate[j] = class_gates.get(g_cls, d_match)
    for i, (p_cls, px, py) in enumerate(predictions):
        for j, (g_cls, gx, gy) in enumerate(ground_truth):
            if not _compatible(p_cls, g_cls):
                continue
            d = math.hypot(px - gx, py - gy)
            if d <= gate[j]:
                cost[i, j] = d
    pairs, un_pred, un_gt = gated_assignment(cost, max(gate) if len(gate) else d_match)
    return FrameScore(
        true_positives=len(pairs),
        false_positives=len(un_pred),
        false_negatives=len(un_gt),
        sum_matched_distance=float(sum(cost[i, j] for i, j in pairs)),
    )


def aggregate(scores: list[FrameScore]) -> tuple[float, float, float]:
    """Micro-averaged (precision, recall, average distance error).

    Pools counts over all frames. A metric with a zero denominator is
    undefined and reported as NaN, never as 0.
    """
    if not scores:
        raise ValueError("no frames to aggregate")
    tp = sum(s.true_positives for s in scores)
    fp = sum(s.false_positives for s in scores)
    fn = sum(s.false_negatives for s in scores)
    dist = sum(s.sum_matched_distance for s in scores)
    precision = tp / (tp + fp) if tp + fp > 0 else math.nan
    recall = tp / (tp + fn) if tp + fn > 0 else math.nan
    avg_de = dist / tp if tp > 0 else math.nan
    return precision, recall, avg_de


def benchmark_clustering(sizes, repetitions: int = 5, seed: int = 0,
                         baseline_eps: float = 0.3, baseline_n_min: int = 4,
                         params: ClusterParams | None = None):
    """Time the hierarchical pipeline against point-level DBSCAN.

    Both methods run on identical synthetic ring scans at each requested
    point count. Returns rows of
    ``(point_count, method, mean_ms, p95_ms)`` with point_count the actual
    scan size.
    """
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be sorted ascending")
    rows = []
    for target in sizes:
        scan = make_benchmark_scan(target, seed=seed)
        points = scan.all_points()
        n = scan.n_points
        run_params = params if params is not None else \
            ClusterParams(dphi=_scan_resolution(scan))

        hier_ms, base_ms = [], []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            cluster_scan(scan.iter_rings(), run_params)
            hier_ms.append((time.perf_counter() - t0) * 1e3)
            t0 = time.perf_counter()
            dbscan_baseline(points, baseline_eps, baseline_n_min)
            base_ms.append((time.perf_counter() - t0) * 1e3)

        for method, samples in (("hierarchical", hier_ms), ("dbscan", base_ms)):
            arr = np.asarray(samples)
            rows.append((n, method, float(arr.mean()),
                         float(np.percentile(arr, 95.0))))
    return rows
