import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvgaze.calibration import WeightMap
from mvgaze.estimator import SensorId
from mvgaze.fusion import (
    FusionMethod,
    SensorOutput,
    fuse,
    fuse_behavior,
    fuse_behavior_batch,
    fuse_best_camera,
    fuse_best_camera_batch,
    fuse_head_pose,
    fuse_head_pose_batch,
    fuse_simple,
    fuse_simple_batch,
    pose_lambda,
)
from mvgaze.scene import Screen

SCREEN = Screen()
IDS = [SensorId(c, e) for c in (1, 2) for e in ("L", "R")]


def _out(i, por, available=True, yaw=0.0):
    return SensorOutput(IDS[i], np.asarray(por, float), available, yaw)


def _const_map(values):
    xs = np.linspace(-258.5, 258.5, 5)
    ys = np.linspace(0, 323, 4)
    v = np.array([np.full((4, 5), w) for w in values], float)
    return WeightMap(tuple(str(s) for s in IDS[: len(values)]), xs, ys, v)


# -- simple -----------------------------------------------------------------------


def test_simple_midpoint():
    f = fuse_simple([_out(0, (0, 0)), _out(1, (2, 2))])
    assert f.available and np.array_equal(f.por, [1.0, 1.0])


def test_simple_single_available_verbatim():
    p = np.array([0.1, 0.7])
    f = fuse_simple([_out(0, p), _out(1, (9, 9), False)])
    assert np.array_equal(f.por, p)
    assert f.weights[IDS[0]] == 1.0 and f.weights[IDS[1]] == 0.0


def test_none_available():
    f = fuse_simple([_out(0, (0, 0), False), _out(1, (1, 1), False)])
    assert not f.available and f.por is None


# -- head pose ----------------------------------------------------------------------


def test_pose_lambda_endpoints_and_thirds():
    lam = pose_lambda(np.array([0.0, 45.0, 15.0, 30.0]), 45.0)
    assert np.allclose(lam, [1.0, 0.0, 2 / 3, 1 / 3], atol=1e-12, rtol=0)


def test_head_pose_endpoint_weights():
    f = fuse_head_pose([_out(0, (0, 0), yaw=0.0), _out(1, (10, 10), yaw=45.0)])
    assert abs(f.weights[IDS[0]] - 1.0) <= 1e-12 and abs(f.weights[IDS[1]]) <= 1e-12
    assert np.allclose(f.por, [0, 0], atol=1e-12)


def test_head_pose_two_thirds():
    f = fuse_head_pose([_out(0, (0, 0), yaw=15.0), _out(1, (3, 3), yaw=30.0)])
    assert abs(f.weights[IDS[0]] - 2 / 3) <= 1e-12 and abs(f.weights[IDS[1]] - 1 / 3) <= 1e-12
    assert np.allclose(f.por, [1.0, 1.0], atol=1e-12)


def test_head_pose_equal_yaws():
    f = fuse_head_pose([_out(i, (i, 2 * i), yaw=20.0) for i in range(4)])
    assert all(abs(w - 0.25) <= 1e-12 for w in f.weights.values())


def test_head_pose_all_beyond_limit_falls_back_to_simple():
    outs = [_out(0, (0, 0), yaw=60.0), _out(1, (2, 4), yaw=50.0)]
    assert np.array_equal(fuse_head_pose(outs).por, fuse_simple(outs).por)


def test_head_pose_rejects_bad_limit():
    with pytest.raises(ValueError):
        fuse_head_pose([_out(0, (0, 0))], alpha_max=0.0)


# -- behavior -------------------------------------------------------------------------


def test_behavior_one_hot_map():
    outs = [_out(0, (10, 20)), _out(1, (50, 60)), _out(2, (-5, 100))]
    f = fuse_behavior(outs, _const_map([1, 0, 0]), SCREEN)
    assert np.array_equal(f.por, [10.0, 20.0])


def test_behavior_equal_maps_equal_simple():
    outs = [_out(i, (10 * i, 5 + 3 * i)) for i in range(4)]
    f = fuse_behavior(outs, _const_map([0.25] * 4), SCREEN)
    assert np.allclose(f.por, fuse_simple(outs).por, atol=1e-12)


def test_behavior_renormalizes_when_a_sensor_drops_out():
    w = [0.656, 0.2, 0.144]
    outs = [_out(0, (0, 0), False), _out(1, (10, 0)), _out(2, (0, 10))]
    f = fuse_behavior(outs, _const_map(w), SCREEN)
    # hand renormalization over the two remaining sensors
    assert f.weights[IDS[1]] == pytest.approx(0.2 / 0.344, abs=1e-12)
    assert f.weights[IDS[2]] == pytest.approx(0.144 / 0.344, abs=1e-12)
    assert f.weights[IDS[0]] == 0.0
    assert np.allclose(f.por, [10 * 0.2 / 0.344, 10 * 0.144 / 0.344], atol=1e-12)


# -- best camera ----------------------------------------------------------------------


def test_best_camera_averages_its_two_eyes():
    outs = [_out(0, (0, 0), yaw=30), _out(1, (2, 0), yaw=30), _out(2, (9, 9), yaw=5), _out(3, (7, 9), yaw=5)]
    f = fuse_best_camera(outs)
    assert np.array_equal(f.por, [8.0, 9.0])


def test_best_camera_tie_goes_to_lowest_camera():
    outs = [_out(0, (0, 0), yaw=10), _out(2, (9, 9), yaw=10)]
    assert np.array_equal(fuse_best_camera(outs).por, [0.0, 0.0])


# -- properties -----------------------------------------------------------------------

coord = st.floats(-500, 500)
frames = st.lists(
    st.tuples(coord, coord, st.booleans(), st.floats(0, 90)), min_size=4, max_size=4
)


def _outs(data):
    return [_out(i, (x, y), a, yaw) for i, (x, y, a, yaw) in enumerate(data)]


def _maps(seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0, 1, (4, 4, 5))
    return WeightMap(tuple(str(s) for s in IDS), np.linspace(-258.5, 258.5, 5), np.linspace(0, 323, 4), v / v.sum(0))


@settings(max_examples=300, deadline=None)
@given(frames, st.integers(0, 100))
def test_fused_output_is_a_convex_combination(data, seed):
    outs = _outs(data)
    avail = [o for o in outs if o.available]
    for method in FusionMethod:
        f = fuse(outs, method, maps=_maps(seed), screen=SCREEN)
        if not avail:
            assert not f.available
            continue
        w = np.array([f.weights[o.sensor] for o in outs])
        assert np.all(w >= 0.0)
        assert abs(w.sum() - 1.0) < 1e-12
        assert all(f.weights[o.sensor] == 0.0 for o in outs if not o.available)
        assert np.allclose(f.por, sum(wi * o.por for wi, o in zip(w, outs)), atol=1e-9)
        pts = np.array([o.por for o in avail])
        assert np.all(f.por >= pts.min(0) - 1e-9) and np.all(f.por <= pts.max(0) + 1e-9)


@settings(max_examples=300, deadline=None)
@given(frames, coord, coord)
def test_translation_equivariance(data, dx, dy):
    outs = _outs(data)
    if not any(o.available for o in outs):
        return
    shift = np.array([dx, dy])
    moved = [SensorOutput(o.sensor, o.por + shift, o.available, o.head_yaw) for o in outs]
    for fn in (fuse_simple, fuse_head_pose):
        assert np.allclose(fn(moved).por, fn(outs).por + shift, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(coord, coord, st.floats(0, 90), st.integers(0, 3), st.integers(0, 100))
def test_single_available_sensor_verbatim(x, y, yaw, which, seed):
    outs = [_out(i, (x, y) if i == which else (1e3, 1e3), i == which, yaw) for i in range(4)]
    for method in FusionMethod:
        f = fuse(outs, method, maps=_maps(seed), screen=SCREEN)
        assert np.array_equal(f.por, [x, y])


@settings(max_examples=200, deadline=None)
@given(st.lists(frames, min_size=1, max_size=6), st.integers(0, 100))
def test_batch_matches_per_frame(batch, seed):
    maps = _maps(seed)
    por = np.array([[[x, y] for x, y, _, _ in fr] for fr in batch]).transpose(1, 0, 2)
    avail = np.array([[a for _, _, a, _ in fr] for fr in batch]).T
    yaw = np.array([[w for _, _, _, w in fr] for fr in batch]).T
    por = np.where(avail[..., None], por, np.nan)
    cams = np.array([s.camera for s in IDS])
    results = {
        FusionMethod.SIMPLE: fuse_simple_batch(por, avail),
        FusionMethod.HEAD_POSE: fuse_head_pose_batch(por, avail, yaw),
        FusionMethod.BEHAVIOR: fuse_behavior_batch(por, avail, maps, SCREEN),
        FusionMethod.BEST_CAMERA: fuse_best_camera_batch(por, avail, yaw, cams),
    }
    for t, fr in enumerate(batch):
        outs = _outs(fr)
        for method, (fused, ok) in results.items():
            single = fuse(outs, method, maps=maps, screen=SCREEN)
            assert ok[t] == single.available
            if single.available:
                assert np.allclose(fused[t], single.por, atol=1e-9)
