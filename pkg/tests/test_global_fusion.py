import math

import numpy as np
import pytest

from coopercept.global_fusion import (
    CenterNode,
    FusionParams,
    compensate_delay,
    fuse,
    fuse_baseline,
)
from coopercept.tracking import StampedObjectList, TrackedObject

from oracles import scalar_ctrv_iterate


def tracked(track_id=1, label="person", x=0.0, y=0.0, yaw=0.0, v=0.0, omega=0.0,
            var=0.01):
    return TrackedObject(track_id=track_id, class_label=label, x=x, y=y, yaw=yaw,
                         v_x=v, omega_z=omega, cov_xx=var, cov_xy=0.0, cov_yy=var)


def message(node_id, ts, objects):
    return StampedObjectList(node_id=node_id, capture_timestamp=ts,
                             objects=tuple(objects))


# -- delay compensation --------------------------------------------------------

def test_zero_delay_leaves_states():
    msg = message(1, 10.0, [tracked(x=1.0, y=2.0, yaw=0.3, v=1.0, omega=0.1)])
    out = compensate_delay(msg, now=10.0)
    assert out[0].x == 1.0
    assert out[0].y == 2.0
    assert out[0].yaw == 0.3
    assert out[0].delay_ms == 0.0
    assert not out[0].stale


def test_100ms_delay_shifts_forward():
    msg = message(1, 0.0, [tracked(v=1.0)])
    out = compensate_delay(msg, now=0.1)
    assert out[0].x == pytest.approx(0.1, abs=1e-15)
    assert out[0].y == 0.0


def test_turning_compensation_matches_scalar_step():
    msg = message(1, 0.0, [tracked(x=0.5, y=-0.5, yaw=0.4, v=1.0, omega=0.5)])
    out = compensate_delay(msg, now=0.15)
    expected = scalar_ctrv_iterate(0.5, -0.5, 0.4, 1.0, 0.5, 0.15, steps=1)
    assert out[0].x == pytest.approx(expected[0], abs=1e-12)
    assert out[0].y == pytest.approx(expected[1], abs=1e-12)
    assert out[0].yaw == pytest.approx(expected[2], abs=1e-12)


def test_compensation_capped_and_flagged_stale():
    params = FusionParams(max_compensation=0.5)
    msg = message(1, 0.0, [tracked(v=1.0)])
    out = compensate_delay(msg, now=2.0, params=params)
    assert out[0].stale
    assert out[0].x == pytest.approx(0.5)  # capped at max_compensation
    assert out[0].delay_ms == pytest.approx(2000.0)


def test_clock_ahead_clamps_to_zero():
    msg = message(1, 5.0, [tracked(x=1.0, v=3.0)])
    out = compensate_delay(msg, now=4.9)
    assert out[0].x == 1.0


def test_covariance_inflation_by_class():
    params = FusionParams()
    now = 0.2
    person = compensate_delay(message(1, 0.0, [tracked(label="person")]), now, params)
    bed = compensate_delay(message(1, 0.0, [tracked(label="bed")]), now, params)
    assert np.trace(person[0].covariance) > np.trace(bed[0].covariance)


# -- fusion ----------------------------------------------------------------------

def test_single_node_passthrough():
    msg = message(1, 0.0, [tracked(track_id=4, x=2.0, y=3.0, v=1.0)])
    tracks = fuse([msg], now=0.1)
    assert len(tracks) == 1
    assert tracks[0].contributors == ((1, 4),)
    comp = compensate_delay(msg, now=0.1)[0]
    assert tracks[0].x == pytest.approx(comp.x)
    assert tracks[0].y == pytest.approx(comp.y)


def test_equal_weight_mean():
    a = message(1, 1.0, [tracked(track_id=1, x=1.00, y=2.0)])
    b = message(2, 1.0, [tracked(track_id=9, x=1.10, y=2.0)])
    tracks = fuse([a, b], now=1.0)  # equal (zero) delays -> equal weights
    assert len(tracks) == 1
    assert tracks[0].x == pytest.approx(1.05, abs=1e-12)
    assert tracks[0].y == pytest.approx(2.0, abs=1e-12)
    assert sum(tracks[0].weights) == pytest.approx(1.0, abs=1e-12)


def test_fresher_node_weighs_more_exact_weights():
    # hand-computed inverse-variance weights: var = base + rate * delay
    params = FusionParams()
    base = params.base_position_var
    rate = params.process_rate_person
    now = 1.0
    a = message(1, now - 0.020, [tracked(track_id=1, x=1.00, y=2.0)])
    b = message(2, now - 0.120, [tracked(track_id=2, x=1.10, y=2.0)])
    tracks = fuse([a, b], now=now, params=params)
    w1 = 1.0 / (base + rate * 0.020)
    w2 = 1.0 / (base + rate * 0.120)
    expected_x = (w1 * 1.00 + w2 * 1.10) / (w1 + w2)
    assert len(tracks) == 1
    assert tracks[0].x == pytest.approx(expected_x, abs=1e-9)
    assert tracks[0].x < 1.05  # pulled toward the fresher node
    assert sum(tracks[0].weights) == pytest.approx(1.0, abs=1e-12)


def test_weights_sum_to_one_random():
    rng = np.random.default_rng(6)
    for _ in range(50):
        msgs = []
        for node in (1, 2, 3):
            objs = [tracked(track_id=node * 10, x=float(rng.normal(0, 0.05)),
                            y=float(rng.normal(0, 0.05)),
                            var=float(rng.uniform(0.005, 0.1)))]
            msgs.append(message(node, rng.uniform(0.0, 0.2), objs))
        tracks = fuse(msgs, now=0.3)
        for tr in tracks:
            assert sum(tr.weights) == pytest.approx(1.0, abs=1e-9)


def test_contributor_uniqueness_per_cycle():
    rng = np.random.default_rng(14)
    msgs = []
    for node in (1, 2):
        objs = [tracked(track_id=k, x=float(rng.uniform(-3, 3)),
                        y=float(rng.uniform(-3, 3))) for k in range(6)]
        msgs.append(message(node, 0.0, objs))
    tracks = fuse(msgs, now=0.05)
    seen = []
    for tr in tracks:
        seen.extend(tr.contributors)
    assert len(seen) == len(set(seen))
    per_track_nodes = [[n for n, _ in tr.contributors] for tr in tracks]
    assert all(len(nodes) == len(set(nodes)) for nodes in per_track_nodes)


def test_class_gate_prevents_person_bed_merge():
    a = message(1, 0.0, [tracked(track_id=1, label="person", x=0.0)])
    b = message(2, 0.0, [tracked(track_id=2, label="bed", x=0.1)])
    tracks = fuse([a, b], now=0.0)
    assert len(tracks) == 2


# -- baseline ---------------------------------------------------------------------

def test_zero_latency_methods_tie():
    a = message(1, 1.0, [tracked(track_id=1, x=1.0, y=0.5, v=1.3)])
    b = message(2, 1.0, [tracked(track_id=2, x=1.05, y=0.5, v=1.3)])
    aware = fuse([a, b], now=1.0)
    base = fuse_baseline([a, b], now=1.0)
    assert len(aware) == len(base) == 1
    assert aware[0].x == pytest.approx(base[0].x, abs=1e-9)
    assert aware[0].y == pytest.approx(base[0].y, abs=1e-9)


def test_baseline_lags_moving_pedestrian():
    # 1 m/s, 150 ms old message: baseline sits 0.15 m behind along motion
    msg = message(1, 0.0, [tracked(track_id=1, v=1.0)])
    aware = fuse([msg], now=0.15)
    base = fuse_baseline([msg], now=0.15)
    assert aware[0].x - base[0].x == pytest.approx(0.15, abs=1e-12)


def test_static_scene_methods_agree_under_any_delay():
    msg = message(1, 0.0, [tracked(track_id=1, x=2.0, y=-1.0, v=0.0)])
    for delay in (0.05, 0.2, 0.4):
        aware = fuse([msg], now=delay)
        base = fuse_baseline([msg], now=delay)
        assert aware[0].x == pytest.approx(base[0].x, abs=1e-12)
        assert aware[0].y == pytest.approx(base[0].y, abs=1e-12)


# -- duplicate failure mode --------------------------------------------------------

def _turn_scenario(turned: bool):
    """Node 1 reports fresh; node 2's message is 0.45 s stale. When the
    person turned after node 2's capture, its straight-line prediction
    lands far from the fresh report."""
    now = 1.0
    if turned:
        fresh = tracked(track_id=1, x=1.0, y=0.5, yaw=0.0, v=2.5)
    else:
        fresh = tracked(track_id=1, x=0.0, y=1.125, yaw=math.pi / 2, v=2.5)
    a = message(1, now, [fresh])
    stale = tracked(track_id=2, x=0.0, y=0.0, yaw=math.pi / 2, v=2.5)
    b = message(2, now - 0.45, [stale])
    return [a, b], now


def test_sharp_turn_creates_duplicate():
    msgs, now = _turn_scenario(turned=True)
    tracks = fuse(msgs, now=now)
    assert len(tracks) == 2  # the known recall failure mode


def test_straight_motion_fuses_single_track():
    msgs, now = _turn_scenario(turned=False)
    tracks = fuse(msgs, now=now)
    assert len(tracks) == 1
    assert len(tracks[0].contributors) == 2


# -- id continuity ------------------------------------------------------------------

def test_global_ids_stable_across_cycles():
    center = CenterNode()
    gids = []
    for k in range(10):
        t = k * 0.1
        center.receive(message(1, t, [tracked(track_id=1, x=0.1 * k, v=1.0)]))
        tracks = center.fuse_cycle(t)
        gids.append(tracks[0].global_id)
    assert len(set(gids)) == 1


def test_new_object_gets_new_gid():
    center = CenterNode()
    center.receive(message(1, 0.0, [tracked(track_id=1, x=0.0)]))
    first = center.fuse_cycle(0.0)[0].global_id
    center.receive(message(1, 0.1, [tracked(track_id=1, x=0.0),
                                    tracked(track_id=2, x=5.0)]))
    tracks = center.fuse_cycle(0.1)
    gids = {tr.global_id for tr in tracks}
    assert first in gids
    assert len(gids) == 2
