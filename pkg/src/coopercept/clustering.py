"""Scanning-pattern-aware hierarchical point-cloud clustering.

Mechanical rotating LiDARs sample far more densely in azimuth than in
elevation, so a single Euclidean radius cannot separate nearby objects
without also shattering surfaces across scan rings. The two-stage method
here first clusters each ring on its own with a range-adaptive radius,
then groups the resulting per-ring segments with a normalized distance
that combines centroid separation (in units of the local inter-ring
spacing) and azimuth-interval overlap. A plain point-level DBSCAN is kept
as the comparison baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

NOISE = -1


@dataclass(frozen=True)
class ClusterParams:
    """Parameters shared by both clustering stages.

    ``n_min`` is the DBSCAN core size (neighbor count including the point
    itself); ``dphi``/``dtheta`` are the horizontal/vertical angular
    resolutions in radians. ``epsilon_custom`` gates the segment-level
    grouping; ``ring_gap`` and ``max_centroid_distance`` are the cheap
    rejection gates applied before the full segment metric.
    """

    n_min: int = 4
    dphi: float = math.radians(0.2)
    dtheta: float = math.radians(2.0)
    epsilon_custom: float = 1.5
    ring_gap: int = 3
    max_centroid_distance: float = 1.0

    def __post_init__(self):
        if self.n_min < 2:
            raise ValueError(f"n_min must be >= 2, got {self.n_min}")
        if self.epsilon_custom <= 0.0:
            raise ValueError("epsilon_custom must be > 0")
        if self.dphi <= 0.0 or self.dtheta <= 0.0:
            raise ValueError("angular resolutions must be > 0")


@dataclass
class Segment:
    """A per-ring cluster: points plus the features the segment metric uses."""

    ring_index: int
    points: np.ndarray  # (n, 3)
    azimuths: np.ndarray  # (n,), radians, increasing
    ranges: np.ndarray  # (n,), meters
    centroid: np.ndarray = field(init=False)
    azimuth_interval: tuple[float, float] = field(init=False)
    mean_range: float = field(init=False)

    def __post_init__(self):
        if len(self.points) == 0:
            raise ValueError("segment must contain points")
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.azimuths = np.asarray(self.azimuths, dtype=float).reshape(-1)
        self.ranges = np.asarray(self.ranges, dtype=float).reshape(-1)
        self.centroid = self.points.mean(axis=0)
        self.azimuth_interval = (float(self.azimuths.min()), float(self.azimuths.max()))
        self.mean_range = float(self.ranges.mean())


@dataclass
class Cluster:
    """A group of segments treated as one physical object."""

    segments: list[Segment]
    points: np.ndarray = field(init=False)
    centroid: np.ndarray = field(init=False)
    bbox_xy: tuple[float, float, float, float] = field(init=False)

    def __post_init__(self):
        self.points = np.vstack([s.points for s in self.segments])
        self.centroid = self.points.mean(axis=0)
        x, y = self.points[:, 0], self.points[:, 1]
        self.bbox_xy = (float(x.min()), float(y.min()), float(x.max()), float(y.max()))


def adaptive_epsilon(s: float, params: ClusterParams) -> float:
    """Range-adaptive neighbor radius: n_min * dphi * s."""
    if s <= 0.0:
        raise ValueError(f"range must be > 0, got {s}")
    return params.n_min * params.dphi * s


def cluster_ring(
    azimuths: np.ndarray,
    ranges: np.ndarray,
    points: np.ndarray,
    ring_index: int,
    params: ClusterParams,
) -> list[Segment]:
    """First stage: DBSCAN within one ring with a range-adaptive radius.

    Neighbors of a point at range s are the ring points within
    ``adaptive_epsilon(s)`` (Euclidean, 3D). Points not density-reachable
    from any core point are dropped as noise. Input must be sorted by
    azimuth (strictly increasing).
    """
    azimuths = np.asarray(azimuths, dtype=float).reshape(-1)
    ranges = np.asarray(ranges, dtype=float).reshape(-1)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if n == 0:
        return []
    if np.any(np.diff(azimuths) <= 0.0):
        raise ValueError("ring points must be sorted by strictly increasing azimuth")

    radii = params.n_min * params.dphi * ranges
    labels = _adaptive_dbscan_labels(azimuths, ranges, points, radii, params.n_min)

    segments = []
    for cid in range(labels.max() + 1 if labels.size else 0):
        idx = np.flatnonzero(labels == cid)
        if len(idx) == 0:
            continue
        segments.append(
            Segment(
                ring_index=ring_index,
                points=points[idx],
                azimuths=azimuths[idx],
                ranges=ranges[idx],
            )
        )
    # Canonical order: by azimuth interval start.
    segments.sort(key=lambda s: s.azimuth_interval[0])
    return segments


def _adaptive_dbscan_labels(azimuths: np.ndarray, ranges: np.ndarray,
                            points: np.ndarray, radii: np.ndarray,
                            n_min: int) -> np.ndarray:
    """DBSCAN with a per-point radius: j neighbors i when d(i, j) <= r_i.

    A point is core when its (asymmetric) neighborhood, itself included,
    holds at least ``n_min`` points. Two cores share a cluster when either
    reaches the other; borders attach to their nearest reaching core.

    Candidate neighbors come from an azimuth window around each point
    (3D distance between ring points grows at least like the chord at the
    ring's closest range, so the window provably covers the radius), then
    an exact distance test; the azimuth seam is a segment boundary.
    """
    n = len(points)
    labels = np.full(n, NOISE, dtype=int)
    if n == 0:
        return labels

    # Window half-width around point i, sized so that every unordered pair
    # with d <= max(r_i, r_j) lies in the lower point's right-hand window:
    # the partner's radius is at most r_i / (1 - k) with k the radius/range
    # slope, the partner's range is within that of s_i, and
    # d >= 2*min_range*cos(elev)*sin(daz/2) with cos(elev) >= 0.5 for any
    # |elevation| < 60 deg (covers indoor mounting).
    slope = min(float(radii.max() / max(ranges.max(), 1e-9)), 0.5)
    r_sym = radii / (1.0 - slope)
    floor = np.maximum(ranges - r_sym, 1e-6)
    half = 2.0 * np.arcsin(np.minimum(1.0, r_sym / floor))
    hi = np.searchsorted(azimuths, azimuths + half, side="right")
    width = hi - np.arange(n) - 1  # right-hand neighbors only

    # Ragged (i, i+1 .. hi_i) ranges flattened into (src, dst) pairs.
    src = np.repeat(np.arange(n), width)
    offsets = np.arange(len(src)) - np.repeat(np.cumsum(width) - width, width)
    dst = src + 1 + offsets

    # Cheap 1-D prefilter: partners' ranges differ by at most max(r_i, r_j).
    r_pair = np.maximum(radii[src], radii[dst])
    rough = np.abs(ranges[src] - ranges[dst]) <= r_pair
    src, dst, r_pair = src[rough], dst[rough], r_pair[rough]

    delta = points[src] - points[dst]
    d_sq = np.einsum("ij,ij->i", delta, delta)
    keep = d_sq <= r_pair ** 2
    src, dst, d_sq = src[keep], dst[keep], d_sq[keep]

    le_fwd = d_sq <= radii[src] ** 2  # dst is in src's neighborhood
    le_bwd = d_sq <= radii[dst] ** 2  # src is in dst's neighborhood
    counts = np.ones(n, dtype=int)  # each point sees itself
    counts += np.bincount(src[le_fwd], minlength=n)
    counts += np.bincount(dst[le_bwd], minlength=n)
    core = counts >= n_min
    if not core.any():
        return labels

    cc_mask = core[src] & core[dst]
    core_idx = np.flatnonzero(core)
    remap = np.full(n, -1, dtype=int)
    remap[core_idx] = np.arange(len(core_idx))
    graph = sparse.coo_matrix(
        (np.ones(cc_mask.sum()), (remap[src[cc_mask]], remap[dst[cc_mask]])),
        shape=(len(core_idx), len(core_idx)),
    )
    _, comp = connected_components(graph, directed=False)
    labels[core_idx] = comp

    # Border points: nearest core whose adaptive radius reaches them.
    fwd = core[src] & ~core[dst] & le_fwd
    bwd = core[dst] & ~core[src] & le_bwd
    anchor = np.concatenate([src[fwd], dst[bwd]])
    border = np.concatenate([dst[fwd], src[bwd]])
    if len(border):
        dist = np.concatenate([d_sq[fwd], d_sq[bwd]])
        order = np.lexsort((anchor, dist))
        seen: dict[int, int] = {}
        for k in order:
            b = int(border[k])
            if b not in seen:
                seen[b] = int(anchor[k])
        for b, a in seen.items():
            labels[b] = labels[a]
    return labels


def segment_distance(a: Segment, b: Segment, params: ClusterParams) -> float:
    """Normalized distance between two per-ring segments.

    Cheap gates first: segments whose ring indices differ by more than
    ``ring_gap`` or whose centroids are farther apart than
    ``max_centroid_distance`` are incomparable (inf). Otherwise the
    distance is the centroid separation scaled by the local inter-ring
    spacing, plus one minus the azimuth-interval overlap fraction.
    """
    if abs(a.ring_index - b.ring_index) > params.ring_gap:
        return math.inf
    dx = a.centroid[0] - b.centroid[0]
    dy = a.centroid[1] - b.centroid[1]
    dz = a.centroid[2] - b.centroid[2]
    d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d > params.max_centroid_distance:
        return math.inf

    d_norm = d / (min(a.mean_range, b.mean_range) * params.dtheta)

    width_a = max(a.azimuth_interval[1] - a.azimuth_interval[0], params.dphi)
    width_b = max(b.azimuth_interval[1] - b.azimuth_interval[0], params.dphi)
    phi_cap = _circular_overlap(a.azimuth_interval, b.azimuth_interval)
    phi_norm = 1.0 - phi_cap / min(width_a, width_b)
    return d_norm + phi_norm


def _circular_overlap(ia: tuple[float, float], ib: tuple[float, float]) -> float:
    """Overlap length of two azimuth intervals on the circle.

    Intervals never span the +/-pi seam at generation time, so a plain
    intersection with the +/-2pi shifted copies of one interval covers the
    wrapped cases.
    """
    sa, ea = ia
    best = 0.0
    for shift in (-2.0 * math.pi, 0.0, 2.0 * math.pi):
        sb, eb = ib[0] + shift, ib[1] + shift
        best = max(best, min(ea, eb) - max(sa, sb))
    return max(best, 0.0)


def cluster_segments(segments: list[Segment], params: ClusterParams) -> list[Cluster]:
    """Second stage: single-linkage grouping of segments.

    Connected components under ``segment_distance < epsilon_custom``; the
    pairwise metric is evaluated on dense arrays (segment counts are small
    compared to point counts, which is where the speed of the two-stage
    scheme comes from). Segments are sorted canonically first so the
    output does not depend on input order.
    """
    if not segments:
        return []
    order = sorted(
        range(len(segments)),
        key=lambda i: (segments[i].ring_index, segments[i].azimuth_interval[0]),
    )
    segs = [segments[i] for i in order]
    n = len(segs)

    ring = np.array([s.ring_index for s in segs])
    centroid = np.array([s.centroid for s in segs])
    mean_range = np.array([s.mean_range for s in segs])
    start = np.array([s.azimuth_interval[0] for s in segs])
    end = np.array([s.azimuth_interval[1] for s in segs])
    width = np.maximum(end - start, params.dphi)

    dx = centroid[:, None, 0] - centroid[None, :, 0]
    dy = centroid[:, None, 1] - centroid[None, :, 1]
    dz = centroid[:, None, 2] - centroid[None, :, 2]
    d = np.sqrt(dx * dx + dy * dy + dz * dz)

    feasible = (np.abs(ring[:, None] - ring[None, :]) <= params.ring_gap)
    feasible &= d <= params.max_centroid_distance

    d_norm = d / (np.minimum(mean_range[:, None], mean_range[None, :]) * params.dtheta)
    overlap = np.full((n, n), -np.inf)
    for shift in (-2.0 * math.pi, 0.0, 2.0 * math.pi):
        cand = (np.minimum(end[:, None], end[None, :] + shift)
                - np.maximum(start[:, None], start[None, :] + shift))
        overlap = np.maximum(overlap, cand)
    overlap = np.maximum(overlap, 0.0)
    phi_norm = 1.0 - overlap / np.minimum(width[:, None], width[None, :])

    linked = feasible & (d_norm + phi_norm < params.epsilon_custom)

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in zip(*np.nonzero(np.triu(linked, k=1))):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[Segment]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(segs[i])
    return [Cluster(segments=groups[r]) for r in sorted(groups)]


def cluster_scan(rings, params: ClusterParams) -> list[Cluster]:
    """Full hierarchical pipeline over an iterable of rings.

    ``rings`` yields ``(ring_index, azimuths, ranges, points)`` tuples.
    """
    segments: list[Segment] = []
    for ring_index, azimuths, ranges, points in rings:
        segments.extend(cluster_ring(azimuths, ranges, points, ring_index, params))
    return cluster_segments(segments, params)


def dbscan_baseline(points: np.ndarray, eps: float, n_min: int) -> np.ndarray:
    """Point-level DBSCAN with a fixed Euclidean radius.

    Returns per-point labels (NOISE = -1). Core points are those with at
    least ``n_min`` neighbors within ``eps`` (the point itself included);
    clusters are connected components of cores, and border points attach
    to their nearest core neighbor.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be > 0, got {eps}")
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(points)
    if n == 0:
        return np.zeros(0, dtype=int)

    tree = cKDTree(points)
    pairs = tree.query_pairs(eps, output_type="ndarray")
    counts = np.ones(n, dtype=int)  # every point is its own neighbor
    if len(pairs):
        counts += np.bincount(pairs.ravel(), minlength=n)
    core = counts >= n_min
    labels = np.full(n, NOISE, dtype=int)
    if not core.any():
        return labels

    if len(pairs):
        cc_mask = core[pairs[:, 0]] & core[pairs[:, 1]]
        cc = pairs[cc_mask]
    else:
        cc = np.zeros((0, 2), dtype=int)
    core_idx = np.flatnonzero(core)
    remap = np.full(n, -1, dtype=int)
    remap[core_idx] = np.arange(len(core_idx))
    graph = sparse.coo_matrix(
        (np.ones(len(cc)), (remap[cc[:, 0]], remap[cc[:, 1]])),
        shape=(len(core_idx), len(core_idx)),
    )
    _, comp = connected_components(graph, directed=False)
    labels[core_idx] = comp

    # Border points: nearest adjacent core.
    if len(pairs):
        bc_mask = core[pairs[:, 0]] ^ core[pairs[:, 1]]
        bc = pairs[bc_mask]
        if len(bc):
            border = np.where(core[bc[:, 0]], bc[:, 1], bc[:, 0])
            anchor = np.where(core[bc[:, 0]], bc[:, 0], bc[:, 1])
            dist = np.linalg.norm(points[border] - points[anchor], axis=1)
            order = np.lexsort((anchor, dist))
            seen: dict[int, int] = {}
            for k in order:
                b = int(border[k])
                if b not in seen:
                    seen[b] = int(anchor[k])
            for b, a in seen.items():
                labels[b] = labels[a]
    return labels


def clusters_from_labels(points: np.ndarray, labels: np.ndarray) -> list[Cluster]:
    """Wrap labeled points as Clusters (one pseudo-segment per cluster)."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    clusters = []
    for cid in range(labels.max() + 1 if labels.size else 0):
        idx = np.flatnonzero(labels == cid)
        if len(idx) == 0:
            continue
        pts = points[idx]
        az = np.arctan2(pts[:, 1], pts[:, 0])
        order = np.argsort(az, kind="stable")
        seg = Segment(
            ring_index=0,
            points=pts[order],
            azimuths=az[order],
            ranges=np.linalg.norm(pts[order], axis=1),
        )
        clusters.append(Cluster(segments=[seg]))
    return clusters
