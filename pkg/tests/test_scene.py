import math

import numpy as np
import pytest

from coopercept.camera import CameraModel, project
from coopercept.local_fusion import locate_boxes
from coopercept.scene import (
    DetectorProfile,
    LidarModel,
    Room,
    detect_camera,
    make_bed,
    make_benchmark_scan,
    make_person,
    scan_lidar,
    simulate_step,
)

from oracles import scalar_ctrv_iterate


def overhead_camera():
    K = np.array([[600.0, 0.0, 640.0], [0.0, 600.0, 360.0], [0.0, 0.0, 1.0]])
    return CameraModel.from_pose((0.0, 0.0, 3.0), yaw=0.0, pitch=0.45,
                                 K=K, image_size=(1280, 720))


# -- ground-truth motion -----------------------------------------------------

def test_straight_walk():
    person = make_person(1, 0.0, 0.0, yaw=0.0, speed=1.0)
    out = simulate_step([person], 0.1)
    assert out[0].x == pytest.approx(0.1, abs=0.0)
    assert out[0].y == 0.0


def test_walk_along_y():
    person = make_person(1, 0.0, 0.0, yaw=math.pi / 2.0, speed=2.0)
    out = simulate_step([person], 0.5)
    assert out[0].y == pytest.approx(1.0, abs=1e-15)
    assert abs(out[0].x) < 1e-15


def test_turning_walk_matches_scalar_iterate():
    person = make_person(1, 0.0, 0.0, yaw=0.0, speed=1.0, yaw_rate=0.5)
    world = [person]
    for _ in range(10):
        world = simulate_step(world, 0.1)
    expected = scalar_ctrv_iterate(0.0, 0.0, 0.0, 1.0, 0.5, 0.1, steps=10)
    assert world[0].x == pytest.approx(expected[0], abs=1e-12)
    assert world[0].y == pytest.approx(expected[1], abs=1e-12)
    assert world[0].yaw == pytest.approx(expected[2], abs=1e-12)


def test_nonpositive_dt_rejected():
    with pytest.raises(ValueError):
        simulate_step([make_person(1, 0.0, 0.0)], 0.0)


def test_determinism_bitwise():
    def run():
        world = [make_person(1, -3.0, 0.0, speed=1.2,
                             waypoints=((3.0, 0.0), (-3.0, 0.0)))]
        room = Room.rectangle(-5.0, -5.0, 5.0, 5.0)
        states = []
        for _ in range(200):
            world = simulate_step(world, 0.1, room)
            states.append((world[0].x, world[0].y, world[0].yaw))
        return states

    assert run() == run()


def test_waypoint_walker_reaches_target():
    world = [make_person(1, -3.0, -1.0, yaw=0.5, speed=1.0,
                         waypoints=((3.0, 1.0), (-3.0, -1.0)))]
    room = Room.rectangle(-5.0, -5.0, 5.0, 5.0)
    closest = math.inf
    for _ in range(100):
        world = simulate_step(world, 0.1, room)
        closest = min(closest, math.hypot(world[0].x - 3.0, world[0].y - 1.0))
    assert closest < 0.5


def test_objects_stay_inside_room():
    room = Room.rectangle(-4.0, -4.0, 4.0, 4.0)
    world = [make_person(1, 0.0, 0.0, yaw=0.13, speed=2.0)]  # no waypoints: runs at walls
    for _ in range(300):
        world = simulate_step(world, 0.1, room)
        assert room.contains((world[0].x, world[0].y))


def test_height_invariants():
    with pytest.raises(ValueError):
        make_person(1, 0.0, 0.0, height=2.5)
    with pytest.raises(ValueError):
        make_bed(1, 0.0, 0.0, height=2.0)


# -- lidar scanning ----------------------------------------------------------

def test_empty_world_empty_scan():
    lidar = LidarModel.uniform((0.0, 0.0, 1.5))
    scan = scan_lidar(lidar, [], static_map=None)
    assert scan.n_points == 0


def test_intra_ring_spacing_on_cylinder():
    # hits on a 0.2 m cylinder at 5 m: consecutive spacing ~ 5 * dphi
    lidar = LidarModel.uniform((0.0, 0.0, 1.5), n_rings=3,
                               elevation_min=math.radians(-2.0))
    person = make_person(1, 5.0, 0.0, height=1.8)
    scan = scan_lidar(lidar, [person])
    ring = next(r for r in scan.rings if len(r) > 10)
    # central part of the arc (away from grazing edges)
    pts = ring.points[3:-3]
    gaps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    expected = 5.0 * lidar.horizontal_resolution
    assert np.median(gaps) == pytest.approx(expected, rel=0.15)


def test_inter_ring_spacing_on_wall():
    # two rings 2 deg apart on a wall at 10 m: vertical spacing ~ 10 * dtheta,
    # about 10x the intra-ring spacing
    lidar = LidarModel.uniform((0.0, 0.0, 1.5), n_rings=2,
                               elevation_min=math.radians(-1.0))
    room = Room.rectangle(-1.0, -8.0, 10.0, 8.0, wall_height=3.0)
    scan = scan_lidar(lidar, [], static_map=room)
    r0 = {round(a, 6): p for a, p in zip(scan.rings[0].azimuths, scan.rings[0].points)}
    r1 = {round(a, 6): p for a, p in zip(scan.rings[1].azimuths, scan.rings[1].points)}
    shared = sorted(set(r0) & set(r1))
    # straight-ahead column hits the x=10 wall
    a = min(shared, key=abs)
    gap = np.linalg.norm(r0[a] - r1[a])
    expected = 10.0 * lidar.vertical_resolution
    assert gap == pytest.approx(expected, rel=0.05)
    intra = np.linalg.norm(r0[shared[len(shared) // 2]] - r0[shared[len(shared) // 2 + 1]])
    assert gap / intra > 5.0


def test_point_geometry_consistency():
    lidar = LidarModel.uniform((1.0, -2.0, 1.8), n_rings=8,
                               elevation_min=math.radians(-11.0))
    room = Room.rectangle(-6.0, -6.0, 6.0, 6.0)
    world = [make_person(1, 3.0, 1.0), make_bed(2, -2.0, -3.0)]
    scan = scan_lidar(lidar, world, room)
    origin = np.array(lidar.position)
    for ring in scan.rings:
        if len(ring) == 0:
            continue
        assert np.all(np.diff(ring.azimuths) > 0.0)
        elev = lidar.ring_elevations[ring.ring_index]
        dirs = np.stack([
            np.cos(elev) * np.cos(ring.azimuths),
            np.cos(elev) * np.sin(ring.azimuths),
            np.full(len(ring), np.sin(elev)),
        ], axis=1)
        rebuilt = origin[None, :] + ring.ranges[:, None] * dirs
        assert np.max(np.linalg.norm(rebuilt - ring.points, axis=1)) < 1e-9
        assert np.all(ring.ranges > 0.0)
        assert np.all(ring.ranges <= lidar.max_range)


def test_scanning_anisotropy_ratio():
    # flat wall straight ahead: intra-ring spacing ~ s*dphi, inter-ring
    # ~ s*dtheta; their ratio tracks dtheta/dphi within 20%
    lidar = LidarModel.uniform((0.0, 0.0, 1.5), n_rings=4,
                               elevation_min=math.radians(-3.0))
    room = Room.rectangle(-1.0, -10.0, 8.0, 10.0, wall_height=4.0)
    scan = scan_lidar(lidar, [], static_map=room)
    front = [r for r in scan.rings if len(r)]
    # use columns near azimuth 0 on the x=8 wall
    intra, inter = [], []
    for ring in front:
        mask = np.abs(ring.azimuths) < 0.15
        pts = ring.points[mask]
        if len(pts) > 2:
            intra.extend(np.linalg.norm(np.diff(pts, axis=0), axis=1))
    for ra, rb in zip(front, front[1:]):
        common = sorted(set(np.round(ra.azimuths, 9)) & set(np.round(rb.azimuths, 9)))
        common = [a for a in common if abs(a) < 0.15]
        pa = {round(a, 9): p for a, p in zip(ra.azimuths, ra.points)}
        pb = {round(a, 9): p for a, p in zip(rb.azimuths, rb.points)}
        inter.extend(np.linalg.norm(pa[a] - pb[a]) for a in common)
    ratio = np.median(inter) / np.median(intra)
    expected = lidar.vertical_resolution / lidar.horizontal_resolution
    assert ratio == pytest.approx(expected, rel=0.2)


def test_occlusion_nearest_hit():
    lidar = LidarModel.uniform((0.0, 0.0, 1.5), n_rings=8,
                               elevation_min=math.radians(-8.0))
    near = make_person(1, 3.0, 0.0)
    far = make_person(2, 6.0, 0.0)
    scan = scan_lidar(lidar, [near, far])
    pts = scan.all_points()
    # straight-ahead rays must stop at the near person
    central = pts[np.abs(np.arctan2(pts[:, 1], pts[:, 0])) < 0.02]
    assert len(central) > 0
    assert np.all(np.linalg.norm(central[:, :2], axis=1) < 4.0)


def test_benchmark_scan_size_control():
    scan = make_benchmark_scan(20000, seed=1)
    assert abs(scan.n_points - 20000) / 20000 < 0.05
    assert make_benchmark_scan(0).n_points == 0


# -- simulated detector ------------------------------------------------------

def quiet_profile(**kw):
    base = dict(miss_rate=0.0, false_positive_rate=0.0,
                pixel_noise_sigma=0.0, foot_detection_rate=0.0)
    base.update(kw)
    return DetectorProfile(**base)


def test_noise_free_centered_person_box():
    # symmetric setup: level camera at the person's mid height, person on
    # the optical axis -> box center = projected centroid
    K = np.array([[500.0, 0.0, 640.0], [0.0, 500.0, 360.0], [0.0, 0.0, 1.0]])
    person = make_person(1, 4.0, 0.0, yaw=0.0, height=1.8)
    cam = CameraModel.from_pose((0.0, 0.0, 0.9), yaw=0.0, pitch=0.0,
                                K=K, image_size=(1280, 720))
    boxes = detect_camera(cam, [person], quiet_profile(), rng=0)
    assert len(boxes) == 1
    center = boxes[0].center
    expected = project(cam, (4.0, 0.0, 0.9))
    assert np.allclose(center, expected, atol=1e-9)


def test_full_miss_rate_drops_everything():
    person = make_person(1, 4.0, 0.0)
    boxes = detect_camera(overhead_camera(), [person],
                          quiet_profile(miss_rate=1.0), rng=0)
    assert boxes == []


def test_foot_box_round_trips_to_ground_position():
    cam = overhead_camera()
    person = make_person(1, 5.0, 0.5)
    boxes = detect_camera(cam, [person],
                          quiet_profile(foot_detection_rate=1.0), rng=3)
    feet = [b for b in boxes if b.class_label == "foot"]
    assert len(feet) == 1
    located = locate_boxes(boxes, cam)
    assert len(located) == 1
    assert located[0].from_foot
    assert np.allclose(located[0].position, [5.0, 0.5], atol=1e-6)


def test_objects_behind_camera_skipped():
    cam = overhead_camera()  # looks along +x
    behind = make_person(1, -5.0, 0.0)
    assert detect_camera(cam, [behind], quiet_profile(), rng=0) == []


def test_false_positive_rate():
    cam = overhead_camera()
    rng = np.random.default_rng(5)
    profile = quiet_profile(false_positive_rate=2.0)
    counts = [len(detect_camera(cam, [], profile, rng)) for _ in range(300)]
    assert np.mean(counts) == pytest.approx(2.0, rel=0.15)


def test_detection_determinism():
    cam = overhead_camera()
    world = [make_person(1, 4.0, 1.0), make_person(2, 6.0, -1.0)]
    profile = DetectorProfile(miss_rate=0.2, false_positive_rate=0.5,
                              pixel_noise_sigma=2.0, foot_detection_rate=0.7)
    a = detect_camera(cam, world, profile, rng=np.random.default_rng(11))
    b = detect_camera(cam, world, profile, rng=np.random.default_rng(11))
    assert [(x.x_min, x.y_min, x.x_max, x.y_max, x.class_label) for x in a] == \
        [(x.x_min, x.y_min, x.x_max, x.y_max, x.class_label) for x in b]
