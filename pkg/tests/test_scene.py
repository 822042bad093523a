import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvgaze import oracles
from mvgaze.errors import YawUndefinedError
from mvgaze.eye_model import EyeParams, build_eye_state
from mvgaze.geometry import project
from mvgaze.scene import (
    DEFAULT_EYE_POSITION,
    FeatureSet,
    Screen,
    generate_rig,
    head_yaw_wrt_camera,
    inject_noise,
    synthesize_features,
)

SCREEN = Screen()


def _features(eye_pos, target, params=EyeParams(), rig=None, cam=0):
    rig = rig or generate_rig("case1", 1, SCREEN)
    state = build_eye_state(params, eye_pos, target)
    return synthesize_features(SCREEN, state, params, rig.cameras[cam]), state, rig


# -- rigs -----------------------------------------------------------------------


def test_single_case1_camera_is_bottom_center():
    rig = generate_rig("case1", 1, SCREEN)
    assert rig.count == 1
    assert np.allclose(rig.positions[0], [0.0, -50.0, 0.0])


def test_case1_three_cameras_bottom_left_right():
    pos = generate_rig("case1", 3, SCREEN).positions
    hw = SCREEN.width / 2 + 50.0
    assert np.allclose(pos[0], [0, -50, 0])
    assert np.allclose(pos[1], [-hw, SCREEN.height / 2, 0])
    assert np.allclose(pos[2], [hw, SCREEN.height / 2, 0])


def test_case0_row_of_25():
    rig = generate_rig("case0", 25, SCREEN)
    xs = rig.positions[:, 0]
    assert rig.count == 25
    assert xs.max() - xs.min() == pytest.approx(24 * 50.0)
    assert np.all(rig.positions[:, 1] < 0)


@given(st.sampled_from(["case0", "case1"]), st.integers(1, 30))
def test_rig_counts_and_case0_shared_height(case, count):
    rig = generate_rig(case, count, SCREEN)
    assert len(rig.cameras) == count
    if case == "case0":
        assert np.ptp(rig.positions[:, 1]) == 0.0
    # no two cameras coincide
    d = np.linalg.norm(rig.positions[:, None] - rig.positions[None], axis=-1)
    assert np.all(d[~np.eye(count, dtype=bool)] > 1.0)


def test_unknown_layout():
    with pytest.raises(ValueError):
        generate_rig("case2", 3, SCREEN)


# -- features -------------------------------------------------------------------


def test_symmetric_glints_about_pupil_column():
    params = EyeParams(alpha=0.0, beta=0.0)
    fs, _, _ = _features(DEFAULT_EYE_POSITION, SCREEN.center, params)
    assert fs.valid
    g, u = fs.glints, fs.pupil[0]
    tl, tr, br, bl = g
    assert abs((tl[0] + tr[0]) / 2 - u) < 1e-6
    assert abs((bl[0] + br[0]) / 2 - u) < 1e-6
    assert abs(tl[1] - tr[1]) < 1e-6 and abs(bl[1] - br[1]) < 1e-6


def test_eye_far_to_the_side_is_out_of_fov():
    # atan(500 / 600) = 39.8 deg exceeds every half field of view of the camera
    assert math.degrees(math.atan(500 / 600)) > 29.0
    fs, _, _ = _features((500.0, 200.0, 600.0), SCREEN.center)
    assert not fs.valid
    assert fs.invalid_reason == "out_of_fov"
    assert fs.glints.shape == (4, 2) and np.all(np.isnan(fs.glints))


def test_glints_match_dense_oracle():
    params = EyeParams()
    rig = generate_rig("case1", 3, SCREEN)
    fs, state, _ = _features((40.0, 230.0, 580.0), (120.0, 90.0, 0.0), params, rig, cam=1)
    cam = rig.cameras[1]
    assert fs.valid
    for i, led in enumerate(SCREEN.led_positions):
        q = oracles.reflection_oracle(state.cornea_center, params.cornea_radius, led, cam.center, coarse=300)
        assert np.linalg.norm(fs.glints[i] - project(cam, q)) < 0.05


def test_glint_i_belongs_to_led_i():
    params = EyeParams()
    fs, state, rig = _features(DEFAULT_EYE_POSITION, (100.0, 200.0, 0.0), params)
    cam = rig.cameras[0]
    for i, led in enumerate(SCREEN.led_positions):
        q = oracles.reflection_oracle(state.cornea_center, params.cornea_radius, led, cam.center)
        assert np.linalg.norm(fs.glints[i] - project(cam, q)) < 1e-3
    # the camera faces the user, so the image is left/right mirrored
    tl, tr, br, bl = fs.glints
    assert tl[0] > tr[0] and bl[0] > br[0]


def test_synthesis_is_bit_identical():
    a, _, _ = _features((10.0, 190.0, 620.0), (-100.0, 50.0, 0.0))
    b, _, _ = _features((10.0, 190.0, 620.0), (-100.0, 50.0, 0.0))
    assert np.array_equal(a.glints, b.glints) and np.array_equal(a.pupil, b.pupil)


# -- noise ----------------------------------------------------------------------


def _fs():
    return _features(DEFAULT_EYE_POSITION, SCREEN.center)[0]


def test_zero_noise_is_identity():
    fs = _fs()
    rng = np.random.default_rng(0)
    state = rng.bit_generator.state
    out = inject_noise(fs, 0.0, rng)
    assert out is fs
    assert rng.bit_generator.state == state


def test_noise_bounds_and_mean():
    fs = _fs()
    rng = np.random.default_rng(3)
    deltas = []
    for _ in range(100_000):
        out = inject_noise(fs, 0.4, rng)
        deltas.append(out.points() - fs.points())
    d = np.concatenate([x.ravel() for x in deltas])
    assert d.size == 1_000_000
    assert np.max(np.abs(d)) <= 0.4
    # 3 sigma / sqrt(n) for uniform[-0.4, 0.4] is about 0.0007 px
    assert abs(d.mean()) < 0.002


def test_noise_deterministic_per_seed():
    fs = _fs()
    a = inject_noise(fs, 0.2, np.random.default_rng(9))
    b = inject_noise(fs, 0.2, np.random.default_rng(9))
    assert np.array_equal(a.points(), b.points())


def test_negative_noise_rejected():
    with pytest.raises(ValueError):
        inject_noise(_fs(), -0.1, np.random.default_rng(0))


def test_invalid_featureset_points():
    fs = FeatureSet.invalid("no_reflection")
    assert not fs.valid and fs.points().shape == (5, 2)


# -- head yaw -------------------------------------------------------------------


def test_yaw_toward_camera_is_zero():
    assert head_yaw_wrt_camera((0, -0.3, -1), (0, 200, 600), (0, -50, 0)) == pytest.approx(0.0, abs=1e-12)


def test_yaw_isoceles_right_triangle():
    eye = (0.0, 0.0, 600.0)
    assert head_yaw_wrt_camera((0, 0, -1), eye, (600.0, 0.0, 0.0)) == pytest.approx(45.0, abs=1e-12)


@pytest.mark.parametrize("k", [0.5, 1.0, 3.0])
def test_yaw_after_horizontal_projection(k):
    s, c = math.sin(math.radians(10)), math.cos(math.radians(10))
    d = np.array([s, 0.3, -c * k])
    d /= np.linalg.norm(d)
    # tan(yaw) = s / (c k) in the XZ plane
    expected = math.degrees(math.atan2(s, c * k))
    eye = np.zeros(3)
    assert head_yaw_wrt_camera((0, 0, -1), eye, eye + 500 * d) == pytest.approx(expected, abs=1e-12)
    if k == 1.0:
        assert expected == pytest.approx(10.0, abs=1e-12)


def test_yaw_undefined_for_vertical_head():
    with pytest.raises(YawUndefinedError):
        head_yaw_wrt_camera((0, 1, 0), (0, 0, 600), (0, -50, 0))


@settings(max_examples=50, deadline=None)
@given(st.floats(-250, 250), st.floats(0, 320))
def test_glints_do_not_depend_on_gaze(tx, ty):
    rig = generate_rig("case0", 3, SCREEN)
    ref, _, _ = _features(DEFAULT_EYE_POSITION, SCREEN.center, rig=rig, cam=1)
    fs, _, _ = _features(DEFAULT_EYE_POSITION, (tx, ty, 0.0), rig=rig, cam=1)
    if fs.valid:
        assert np.array_equal(fs.glints, ref.glints)
