"""Per-node fusion stage: ROI point filtering and box-to-cluster association.

The region of interest is a static binary grid that strips wall and floor
returns before clustering. Camera detections, carrying world positions
recovered from their ground-contact pixels, are matched to point-cloud
clusters by minimum-cost assignment to label the clusters semantically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .assignment import gated_assignment
from .camera import (
    BBox2D,
    CameraModel,
    overlap_ratio,
    project_points,
    recover_ground_position,
    vanishing_point_z,
    associate_foot_to_parent,
)
from .clustering import Cluster
from .scene import RingPoints, RingScan, Room

CLASS_UNKNOWN = "unknown"

SOURCE_FUSED = "fused"
SOURCE_LIDAR_ONLY = "lidar_only"
SOURCE_CAMERA_ONLY = "camera_only"

DEFAULT_Z_BAND = (0.1, 2.2)
DEFAULT_COST_GATE = 1.8
DEFAULT_OVERLAP_WEIGHT = 1.0
DEFAULT_DISTANCE_WEIGHT = 1.0  # 1/m
DEFAULT_DUPLICATE_GATE = 0.5


@dataclass
class RoiGrid:
    """Binary keep/drop occupancy grid over the ground plane."""

    origin: tuple[float, float]
    cell_size: float
    mask: np.ndarray  # (rows, cols) bool, row-major from origin

    def __post_init__(self):
        if self.cell_size <= 0.0:
            raise ValueError("cell_size must be > 0")
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.mask.size == 0:
            raise ValueError("grid must be non-empty")

    @classmethod
    def from_polygon(cls, room: Room, cell_size: float = 0.1,
                     margin: float = 0.3) -> "RoiGrid":
        """True inside the room polygon shrunk by ``margin`` (cell centers
        farther than margin from every wall edge)."""
        poly = np.asarray(room.polygon)
        x_min, y_min = poly.min(axis=0)
        x_max, y_max = poly.max(axis=0)
        cols = int(math.ceil((x_max - x_min) / cell_size))
        rows = int(math.ceil((y_max - y_min) / cell_size))
        xs = x_min + (np.arange(cols) + 0.5) * cell_size
        ys = y_min + (np.arange(rows) + 0.5) * cell_size
        gx, gy = np.meshgrid(xs, ys)
        centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
        inside = room.contains(centers)
        if margin > 0.0:
            for a, b in room.edges:
                e = b - a
                ee = float(e @ e)
                tt = np.clip((centers - a) @ e / ee, 0.0, 1.0)
                nearest = a[None, :] + tt[:, None] * e[None, :]
                inside &= np.linalg.norm(centers - nearest, axis=1) > margin
        return cls(origin=(float(x_min), float(y_min)), cell_size=cell_size,
                   mask=inside.reshape(rows, cols))

    def keep(self, xy: np.ndarray) -> np.ndarray:
        """Boolean keep mask for (n, 2) positions; outside the extent is False."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        col = np.floor((xy[:, 0] - self.origin[0]) / self.cell_size).astype(int)
        row = np.floor((xy[:, 1] - self.origin[1]) / self.cell_size).astype(int)
        rows, cols = self.mask.shape
        ok = (row >= 0) & (row < rows) & (col >= 0) & (col < cols)
        out = np.zeros(len(xy), dtype=bool)
        out[ok] = self.mask[row[ok], col[ok]]
        return out

    def save(self, path) -> None:
        rows, cols = self.mask.shape
        with open(path, "w", encoding="utf-8") as f:
            f.write(f"{self.origin[0]!r} {self.origin[1]!r} {self.cell_size!r} "
                    f"{cols} {rows}\n")
            for row in self.mask:
                f.write(" ".join("1" if v else "0" for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "RoiGrid":
        with open(path, "r", encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 5:
                raise ValueError(f"malformed ROI grid header in {path}")
            ox, oy, cell = float(header[0]), float(header[1]), float(header[2])
            cols, rows = int(header[3]), int(header[4])
            mask = np.zeros((rows, cols), dtype=bool)
            for r in range(rows):
                vals = f.readline().split()
                if len(vals) != cols:
                    raise ValueError(f"ROI grid row {r} has {len(vals)} cells, expected {cols}")
                mask[r] = [v == "1" for v in vals]
        return cls(origin=(ox, oy), cell_size=cell, mask=mask)


def filter_roi(scan: RingScan, grid: RoiGrid, z_band=DEFAULT_Z_BAND) -> RingScan:
    """Keep points whose ground cell is marked and whose z is in the band;
    per-ring azimuth ordering is preserved."""
    z_min, z_max = z_band
    rings = []
    for ring in scan.rings:
        if len(ring) == 0:
            rings.append(RingPoints(ring.ring_index, ring.azimuths.copy(),
                                    ring.ranges.copy(), ring.points.copy()))
            continue
        keep = grid.keep(ring.points[:, :2])
        keep &= (ring.points[:, 2] >= z_min) & (ring.points[:, 2] <= z_max)
        rings.append(RingPoints(
            ring_index=ring.ring_index,
            azimuths=ring.azimuths[keep],
            ranges=ring.ranges[keep],
            points=ring.points[keep],
        ))
    return RingScan(timestamp=scan.timestamp, rings=rings)


@dataclass
class PositionedBox:
    """A semantic 2D box with the world position recovered from its
    ground-contact pixel."""

    box: BBox2D
    position: np.ndarray  # (2,) world xy
    from_foot: bool


@dataclass
class LabeledObject:
    """Classified, localized output of the per-node fusion stage."""

    class_label: str
    position: np.ndarray  # (2,) world xy
    cluster: Cluster | None
    source: str
    confidence: float = 1.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        if not np.all(np.isfinite(self.position)):
            raise ValueError("position must be finite")
        if (self.class_label == CLASS_UNKNOWN) != (self.source == SOURCE_LIDAR_ONLY):
            # unknown exactly when no 2D box matched
            raise ValueError(f"inconsistent class/source: {self.class_label}/{self.source}")


def locate_boxes(detections: list[BBox2D], camera: CameraModel,
                 cosine_threshold: float = 0.95) -> list[PositionedBox]:
    """Attach world positions to person/bed boxes.

    Feet pair with parent person boxes via the vanishing-point association;
    a matched foot's bottom-center pixel is inverted on the floor plane
    (z=0). Persons without a foot fall back to their own bottom-center,
    as do beds. Multiple feet on one parent average their ground pixels.
    """
    people = [d for d in detections if d.class_label == "person"]
    feet = [d for d in detections if d.class_label == "foot"]
    beds = [d for d in detections if d.class_label == "bed"]

    ground_pixel = {i: p.bottom_center for i, p in enumerate(people)}
    if feet and people:
        v_z = vanishing_point_z(camera)
        pairs = associate_foot_to_parent(feet, people, v_z, cosine_threshold)
        matched_feet = {f for f, _ in pairs}
        foot_pixels: dict[int, list[np.ndarray]] = {}
        for foot_i, person_j in pairs:
            foot_pixels.setdefault(person_j, []).append(feet[foot_i].bottom_center)
        # A second foot on an already matched parent is extra evidence.
        for foot_i, foot in enumerate(feet):
            if foot_i in matched_feet:
                continue
            for person_j, person in enumerate(people):
                if person_j in foot_pixels and overlap_ratio(foot, person) > 0.0:
                    foot_pixels[person_j].append(foot.bottom_center)
                    break
        for person_j, pixels in foot_pixels.items():
            ground_pixel[person_j] = np.mean(pixels, axis=0)

    out = []
    for i, person in enumerate(people):
        pos = recover_ground_position(camera, ground_pixel[i], z_w=0.0)
        out.append(PositionedBox(box=person, position=pos,
                                 from_foot=not np.array_equal(ground_pixel[i],
                                                              person.bottom_center)))
    for bed in beds:
        pos = recover_ground_position(camera, bed.bottom_center, z_w=0.0)
        out.append(PositionedBox(box=bed, position=pos, from_foot=False))
    return out


def project_cluster_box(cluster: Cluster, camera: CameraModel) -> BBox2D | None:
    """Axis-aligned pixel bounds of the cluster's points; None when the
    cluster is behind the camera."""
    pix, depth = project_points(camera, cluster.points)
    ok = depth > 1e-6
    if not ok.any():
        return None
    pix = pix[ok]
    x_min, y_min = pix.min(axis=0)
    x_max, y_max = pix.max(axis=0)
    if not (x_min < x_max and y_min < y_max):
        x_max = x_min + 1.0
        y_max = y_min + 1.0
    return BBox2D(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max,
                  class_label="person", confidence=1.0)


def associate_boxes_clusters(
    boxes: list[PositionedBox],
    clusters: list[Cluster],
    camera: CameraModel,
    overlap_weight: float = DEFAULT_OVERLAP_WEIGHT,
    distance_weight: float = DEFAULT_DISTANCE_WEIGHT,
    cost_gate: float = DEFAULT_COST_GATE,
) -> list[LabeledObject]:
    """Label clusters with camera classes by minimum-cost assignment.

    Pair cost combines the complement of the pixel overlap between the
    camera box and the projected cluster box with the metric distance
    between the box's recovered position and the cluster centroid. Matched
    clusters take the box class at the cluster centroid; leftover clusters
    come out unknown, leftover boxes camera-only at their recovered
    position.
    """
    cluster_boxes = [project_cluster_box(c, camera) for c in clusters]
    cost = np.full((len(boxes), len(clusters)), np.inf)
    for i, pb in enumerate(boxes):
        for j, cl in enumerate(clusters):
            dist = float(np.linalg.norm(pb.position - cl.centroid[:2]))
            ov = overlap_ratio(pb.box, cluster_boxes[j]) if cluster_boxes[j] else 0.0
            cost[i, j] = overlap_weight * (1.0 - ov) + distance_weight * dist

    pairs, un_boxes, un_clusters = gated_assignment(cost, cost_gate)
    out = []
    for i, j in pairs:
        out.append(LabeledObject(
            class_label=boxes[i].box.class_label,
            position=clusters[j].centroid[:2].copy(),
            cluster=clusters[j],
            source=SOURCE_FUSED,
            confidence=boxes[i].box.confidence,
        ))
    for j in un_clusters:
        out.append(LabeledObject(
            class_label=CLASS_UNKNOWN,
            position=clusters[j].centroid[:2].copy(),
            cluster=clusters[j],
            source=SOURCE_LIDAR_ONLY,
        ))
    for i in un_boxes:
        out.append(LabeledObject(
            class_label=boxes[i].box.class_label,
            position=boxes[i].position.copy(),
            cluster=None,
            source=SOURCE_CAMERA_ONLY,
            confidence=boxes[i].box.confidence,
        ))
    return out


def merge_camera_views(per_camera: list[list[LabeledObject]],
                       duplicate_gate: float = DEFAULT_DUPLICATE_GATE) -> list[LabeledObject]:
    """Combine association results from the node's cameras.

    Objects whose clusters share any segment are views of the same
    physical object (each camera may have merged fragments differently);
    the group keeps its best label over the union of its segments.
    Camera-only detections within the duplicate gate of a kept object are
    dropped as duplicates.
    """
    flat = [o for view in per_camera for o in view]
    clustered = [o for o in flat if o.cluster is not None]
    camera_only = [o for o in flat if o.cluster is None]

    parent = list(range(len(clustered)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    seg_owner: dict[int, int] = {}
    for idx, obj in enumerate(clustered):
        for seg in obj.cluster.segments:
            key = id(seg)
            if key in seg_owner:
                ri, rj = find(idx), find(seg_owner[key])
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
            else:
                seg_owner[key] = idx

    groups: dict[int, list[LabeledObject]] = {}
    for idx in range(len(clustered)):
        groups.setdefault(find(idx), []).append(clustered[idx])

    rank = {SOURCE_FUSED: 0, SOURCE_LIDAR_ONLY: 1}
    kept: list[LabeledObject] = []
    for root in sorted(groups):
        members = groups[root]
        best = min(members, key=lambda o: (rank.get(o.source, 2), -o.confidence))
        segments, seen = [], set()
        for obj in members:
            for seg in obj.cluster.segments:
                if id(seg) not in seen:
                    seen.add(id(seg))
                    segments.append(seg)
        cluster = Cluster(segments=segments)
        kept.append(LabeledObject(
            class_label=best.class_label,
            position=cluster.centroid[:2].copy(),
            cluster=cluster,
            source=best.source,
            confidence=best.confidence,
        ))

    for obj in camera_only:
        near = any(np.linalg.norm(obj.position - k.position) < duplicate_gate
                   for k in kept)
        if not near:
            kept.append(obj)
    return kept
