"""End-to-end experiment orchestration.

Runs scripted worlds through per-node perception (scan, ROI filter,
clustering, camera fusion, tracking), replays the resulting message
streams through the simulated network at each delay setting, executes
center-node fusion cycles, and scores everything against interpolated
ground truth. Local perception is independent of transport delay, so each
scenario's node pipelines run once and their output streams are reused
across the delay grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .clustering import cluster_scan, clusters_from_labels, dbscan_baseline
from .evaluation import aggregate, benchmark_clustering, match_frame
from .global_fusion import CenterNode
from .local_fusion import (
    LabeledObject,
    RoiGrid,
    filter_roi,
    locate_boxes,
    associate_boxes_clusters,
    merge_camera_views,
)
from .scene import WorldObject, detect_camera, scan_lidar, simulate_step
from .scenarios import NodePlacement, ScenarioConfig
from .tracking import StampedObjectList, Tracker
from .transport import Envelope, LatencyModel, SimulatedNetwork

METHOD_HIERARCHICAL = "hierarchical"
METHOD_DBSCAN1 = "dbscan1"
METHOD_DBSCAN2 = "dbscan2"
LOCAL_METHODS = {
    METHOD_DBSCAN1: ("dbscan", 0.3, 4),
    METHOD_DBSCAN2: ("dbscan", 0.3, 8),
    METHOD_HIERARCHICAL: ("hierarchical",),
}

METRIC_COLUMNS = ("scenario", "node", "method", "delay_ms", "precision",
                  "recall", "avg_de_m", "frames", "config_hash", "seed")
BENCH_COLUMNS = ("point_count", "method", "mean_ms", "p95_ms", "config_hash", "seed")


def simulate_world(config: ScenarioConfig) -> list[tuple[float, list[WorldObject]]]:
    """Ground-truth trajectory: one (time, objects) entry per frame."""
    dt = 1.0 / config.frame_rate_hz
    n_frames = int(round(config.duration_s * config.frame_rate_hz))
    world = list(config.objects)
    frames = []
    for k in range(n_frames):
        t = k / config.frame_rate_hz
        frames.append((t, world))
        world = simulate_step(world, dt, config.room)
    return frames


def interpolate_gt(frames, t: float):
    """Ground truth as (class, x, y) tuples, positions linearly
    interpolated between the bracketing frames."""
    times = [f[0] for f in frames]
    if t <= times[0]:
        world = frames[0][1]
        return [(o.class_label, o.x, o.y) for o in world]
    if t >= times[-1]:
        world = frames[-1][1]
        return [(o.class_label, o.x, o.y) for o in world]
    hi = next(i for i, ft in enumerate(times) if ft >= t)
    lo = hi - 1
    t0, w0 = frames[lo]
    t1, w1 = frames[hi]
    alpha = (t - t0) / (t1 - t0)
    by_id = {o.id: o for o in w1}
    out = []
    for o in w0:
        o1 = by_id.get(o.id, o)
        out.append((o.class_label,
                    o.x + alpha * (o1.x - o.x),
                    o.y + alpha * (o1.y - o.y)))
    return out


@dataclass
class NodeRun:
    """One node's per-frame outputs over a scenario."""

    node_id: int
    messages: list[StampedObjectList]
    labeled_frames: list[tuple[float, list[LabeledObject]]]


def _dedup_observations(labeled: list[LabeledObject], radius: float,
                        bed_radius: float = 1.4) -> list[LabeledObject]:
    """Collapse near-coincident observations of one physical object.

    Occlusion can split a cluster into fragments that all survive camera
    association; feeding them all to the tracker births duplicate tracks.
    Fused observations win over lidar-only ones, then higher confidence.
    A kept bed absorbs unlabeled fragments over its whole extent, but
    never a detection positively labeled as a person.
    """
    rank = {"fused": 0, "camera_only": 1, "lidar_only": 2}
    ordered = sorted(range(len(labeled)),
                     key=lambda i: (rank.get(labeled[i].source, 3),
                                    -labeled[i].confidence, i))
    kept: list[LabeledObject] = []
    for i in ordered:
        obj = labeled[i]
        suppressed = False
        for k in kept:
            gate = radius
            if k.class_label == "bed" and obj.class_label != "person":
                gate = bed_radius
            if float(np.linalg.norm(obj.position - k.position)) < gate:
                suppressed = True
                break
        if not suppressed:
            kept.append(obj)
    return kept


def run_node(config: ScenarioConfig, node: NodePlacement, world_frames,
             method: str = METHOD_HIERARCHICAL) -> NodeRun:
    """Run one sensor node's full local pipeline over all frames.

    Detector RNG streams are derived from (seed, node, camera) only, so
    different clustering methods see byte-identical camera detections.
    """
    spec = LOCAL_METHODS[method]
    cameras = [m.build() for m in node.cameras]
    grid = RoiGrid.from_polygon(config.room, config.roi_cell_size, config.roi_margin)
    tracker = Tracker(node.node_id, config.tracker)
    det_rngs = [np.random.default_rng([config.seed, node.node_id, i])
                for i in range(len(cameras))]

    messages, labeled_frames = [], []
    for t, world in world_frames:
        scan = scan_lidar(node.lidar, world, config.room, timestamp=t)
        scan = filter_roi(scan, grid, config.z_band)
        if spec[0] == "dbscan":
            points = scan.all_points()
            labels = dbscan_baseline(points, eps=spec[1], n_min=spec[2])
            clusters = clusters_from_labels(points, labels)
        else:
            clusters = cluster_scan(scan.iter_rings(), config.cluster_params)

        views = []
        for cam, rng in zip(cameras, det_rngs):
            detections = detect_camera(cam, world, config.detector, rng)
            boxes = locate_boxes(detections, cam)
            views.append(associate_boxes_clusters(boxes, clusters, cam))
        labeled = merge_camera_views(views)

        tracked = labeled if config.track_camera_only else \
            [o for o in labeled if o.source != "camera_only"]
        tracked = _dedup_observations(tracked, config.observation_merge_radius)
        message = tracker.update(tracked, node.clock.node_time(t))
        messages.append(message)
        labeled_frames.append((t, labeled))
    return NodeRun(node_id=node.node_id, messages=messages, labeled_frames=labeled_frames)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def run_local_eval(config: ScenarioConfig):
    """Per-node comparison of the clustering methods on identical frames.

    Returns metric rows (dicts in METRIC_COLUMNS order).
    """
    world_frames = simulate_world(config)
    rows = []
    for node in config.nodes:
        for method in (METHOD_DBSCAN1, METHOD_DBSCAN2, METHOD_HIERARCHICAL):
            run = run_node(config, node, world_frames, method)
            scores = []
            for (t, labeled), (_, world) in zip(run.labeled_frames, world_frames):
                predictions = [(o.class_label, o.position[0], o.position[1])
                               for o in labeled]
                gt = [(o.class_label, o.x, o.y) for o in world]
                scores.append(match_frame(predictions, gt, config.match_gate,
                                          class_gates={"bed": config.bed_match_gate}))
            precision, recall, avg_de = aggregate(scores)
            rows.append(_metric_row(config, node=str(node.node_id), method=method,
                                    delay_ms="", precision=precision, recall=recall,
                                    avg_de=avg_de, frames=len(scores)))
    return rows


def replay_fusion(messages_by_node: dict[int, list[StampedObjectList]],
                  frame_times, mean_delay_ms: float, std_ms: float,
                  net_seed, config: ScenarioConfig, delay_aware: bool):
    """Push recorded node streams through the simulated network and run
    one fusion cycle per frame time.

    Returns ``[(t, [GlobalTrack])]`` for every cycle. A non-positive mean
    delay short-circuits the channel: frames still pass through the wire
    codec but arrive exactly at their send time.
    """
    center = CenterNode(config.fusion, delay_aware=delay_aware)
    arrivals = []
    if mean_delay_ms > 0.0:
        net = SimulatedNetwork(LatencyModel(mean_ms=mean_delay_ms, std_ms=std_ms),
                               seed=net_seed)
        for node_id in sorted(messages_by_node):
            for msg in messages_by_node[node_id]:
                env = Envelope(node_id=node_id, send_timestamp=msg.capture_timestamp,
                               payload=msg)
                net.send(env, now=msg.capture_timestamp)
    else:
        net = None
        from .transport import decode, encode  # codec still applies
        for node_id in sorted(messages_by_node):
            for msg in messages_by_node[node_id]:
                arrivals.append((msg.capture_timestamp, node_id, decode(encode(msg))))
        arrivals.sort(key=lambda a: (a[0], a[1]))

    cycles = []
    idx = 0
    for t in frame_times:
        if net is not None:
            for env in net.deliveries_until(t):
                center.receive(env.payload)
        else:
            while idx < len(arrivals) and arrivals[idx][0] <= t:
                center.receive(arrivals[idx][2])
                idx += 1
        cycles.append((t, center.fuse_cycle(t)))
    return cycles


def score_cycles(cycles, world_frames, config: ScenarioConfig):
    """Score fusion cycles against interpolated ground truth, skipping the
    settle window where tracks are still confirming."""
    scores = []
    for t, tracks in cycles:
        if t < config.settle_s:
            continue
        predictions = [(tr.class_label, tr.x, tr.y) for tr in tracks]
        gt = interpolate_gt(world_frames, t)
        scores.append(match_frame(predictions, gt, config.match_gate,
                                  class_gates={"bed": config.bed_match_gate}))
    return scores


def run_delay_eval(config: ScenarioConfig, track_sink=None):
    """Full two-stage experiment: local pipelines once, then every
    (delay, method) grid point on the recorded streams.

    ``track_sink(scenario, delay_ms, method, cycles)`` receives the raw
    fusion cycles when provided (for JSONL dumps).
    """
    world_frames = simulate_world(config)
    frame_times = [t for t, _ in world_frames]
    messages_by_node = {}
    for node in config.nodes:
        run = run_node(config, node, world_frames, METHOD_HIERARCHICAL)
        messages_by_node[node.node_id] = run.messages

    rows = []
    for delay_ms in config.delay_grid_ms:
        net_seed = [config.seed, int(round(delay_ms * 1000))]
        for method, delay_aware in (("baseline", False), ("delay_aware", True)):
            cycles = replay_fusion(messages_by_node, frame_times, delay_ms,
                                   config.latency.std_ms, net_seed, config,
                                   delay_aware)
            if track_sink is not None:
                track_sink(config.name, delay_ms, method, cycles)
            scores = score_cycles(cycles, world_frames, config)
            precision, recall, avg_de = aggregate(scores)
            rows.append(_metric_row(config, node="", method=method,
                                    delay_ms=_fmt_float(delay_ms),
                                    precision=precision, recall=recall,
                                    avg_de=avg_de, frames=len(scores)))
    return rows


def run_bench(sizes, repetitions: int, seed: int):
    """Clustering runtime comparison rows (BENCH_COLUMNS order)."""
    rows = []
    for n, method, mean_ms, p95_ms in benchmark_clustering(sizes, repetitions, seed):
        rows.append({
            "point_count": str(n),
            "method": method,
            "mean_ms": _fmt_float(mean_ms),
            "p95_ms": _fmt_float(p95_ms),
            "config_hash": f"bench-{seed}",
            "seed": str(seed),
        })
    return rows


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _fmt_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def _metric_row(config: ScenarioConfig, node, method, delay_ms,
                precision, recall, avg_de, frames) -> dict:
    return {
        "scenario": config.name,
        "node": node,
        "method": method,
        "delay_ms": delay_ms,
        "precision": _fmt_float(precision),
        "recall": _fmt_float(recall),
        "avg_de_m": _fmt_float(avg_de),
        "frames": str(frames),
        "config_hash": config.config_hash(),
        "seed": str(config.seed),
    }


def write_csv(path, rows, columns) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(str(row[c]) for c in columns) + "\n")


def write_ground_truth_jsonl(path, world_frames) -> None:
    """One line per frame: {t, objects: [{id, class, x, y, yaw, v, omega}]}."""
    with open(path, "w", encoding="utf-8") as f:
        for t, world in world_frames:
            record = {
                "t": t,
                "objects": [
                    {"id": o.id, "class": o.class_label, "x": o.x, "y": o.y,
                     "yaw": o.yaw, "v": o.speed, "omega": o.yaw_rate}
                    for o in world
                ],
            }
            f.write(json.dumps(record) + "\n")


def write_tracks_jsonl(path, cycles) -> None:
    """One line per fusion cycle: {t, tracks: [...]}."""
    with open(path, "w", encoding="utf-8") as f:
        for t, tracks in cycles:
            record = {
                "t": t,
                "tracks": [
                    {"gid": tr.global_id, "class": tr.class_label,
                     "x": tr.x, "y": tr.y, "yaw": tr.yaw,
                     "v": tr.v_x, "omega": tr.omega_z,
                     "staleness_ms": tr.staleness_ms,
                     "contributors": [list(c) for c in tr.contributors]}
                    for tr in tracks
                ],
            }
            f.write(json.dumps(record) + "\n")


def load_object_list_jsonl(path):
    """Stub loader for externally recorded object-list files.

    The published dataset's on-disk layout is not documented, so nothing
    is parsed here; plug a converter producing ground-truth JSONL records
    (see :func:`write_ground_truth_jsonl`) into this seam.
    """
    raise NotImplementedError(
        "external dataset format unpublished; convert to the ground-truth "
        "JSONL layout and load that instead")
