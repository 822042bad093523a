import csv
import io
import math

import numpy as np
import pytest

from mvgaze.experiments import (
    CSV_COLUMNS,
    CalibrationBundle,
    MetricsReport,
    ScenarioSpec,
    Simulation,
    angular_error,
    calibrate_scenario,
    calibration_grid,
    random_test_points,
    run_scenario,
    summarize,
)
from mvgaze.scene import Screen

SCREEN = Screen()
FAST = dict(calibration_frames=20, test_frames=20)


# -- angular error --------------------------------------------------------------------


def test_zero_error():
    assert angular_error((10.0, 50.0), (10.0, 50.0), (0, 200, 600)) == 0.0


def test_perpendicular_offset_at_600mm():
    err = angular_error((0.0, 200.0, 0.0), (10.47, 200.0), (0, 200, 600))
    assert err == pytest.approx(math.degrees(math.atan(10.47 / 600)), abs=1e-12)
    assert err == pytest.approx(1.000, abs=1e-3)


@pytest.mark.parametrize("offset", [1.0, 5.0, 10.0])
def test_doubling_distance_halves_small_angles(offset):
    near = angular_error((0, 200), (offset, 200), (0, 200, 600))
    far = angular_error((0, 200), (offset, 200), (0, 200, 1200))
    assert far == pytest.approx(near / 2, rel=0.01)


# -- targets ----------------------------------------------------------------------------


def test_calibration_grid_is_3x3_inside_the_screen():
    g = calibration_grid(SCREEN)
    assert g.shape == (9, 2)
    assert all(SCREEN.contains(p) for p in g)
    assert len(np.unique(g[:, 0])) == 3 and len(np.unique(g[:, 1])) == 3


def test_random_test_points_two_per_cell():
    pts = random_test_points(SCREEN, 7)
    assert pts.shape == (18, 2)
    cells = [(int((x + SCREEN.width / 2) // (SCREEN.width / 3)), int(y // (SCREEN.height / 3))) for x, y in pts]
    assert all(cells.count((i, j)) == 2 for i in range(3) for j in range(3))
    assert np.array_equal(pts, random_test_points(SCREEN, 7))


# -- runs -------------------------------------------------------------------------------


def test_sh_single_camera_bookkeeping():
    spec = ScenarioSpec(scenario="SH", layout="case1", cameras=1, noise_levels=(0.0, 0.2), **FAST)
    rep = run_scenario(spec)
    assert len(rep.rows) == 1 * 2 * len(spec.fusion)
    assert all(r.availability_pct == 100.0 for r in rep.rows)
    assert all(r.n_frames == 18 * 20 for r in rep.rows)


def test_mh_x_grid_has_nine_positions_per_level():
    xs = tuple(float(d) for d in range(-200, 201, 50))
    spec = ScenarioSpec(
        scenario="MH", layout="case1", cameras=1, noise_levels=(0.2,), displacements=(("X", xs),),
        fusion=("simple",), **FAST,
    )
    rep = run_scenario(spec)
    assert [r.displacement_mm for r in rep.rows] == list(xs)


def test_identical_seeds_identical_reports():
    spec = ScenarioSpec(scenario="SH", layout="case1", cameras=3, seed=5, noise_levels=(0.2,), **FAST)
    assert run_scenario(spec).to_csv() == run_scenario(spec).to_csv()


def test_parallel_run_matches_serial():
    spec = ScenarioSpec(
        scenario="MH", layout="case1", cameras=3, seed=5, noise_levels=(0.2,),
        displacements=(("Z", (-100.0, 0.0, 100.0)),), **FAST,
    )
    assert run_scenario(spec, jobs=2).to_csv() == run_scenario(spec, jobs=1).to_csv()


def test_saved_calibration_reproduces_the_run():
    spec = ScenarioSpec(scenario="SH", layout="case1", cameras=3, seed=2, noise_levels=(0.0, 0.2), **FAST)
    bundles = [CalibrationBundle.from_dict(b.to_dict()) for b in calibrate_scenario(spec)]
    assert run_scenario(spec, calibrations=bundles).to_csv() == run_scenario(spec).to_csv()


def test_mismatched_calibration_rejected():
    spec = ScenarioSpec(scenario="SH", noise_levels=(0.0, 0.2), **FAST)
    bundles = calibrate_scenario(ScenarioSpec(scenario="SH", noise_levels=(0.1,), **FAST))
    with pytest.raises(ValueError):
        run_scenario(spec, calibrations=bundles)


def test_error_averaged_over_available_frames_only():
    spec = ScenarioSpec(scenario="SH", layout="case1", cameras=1, noise_levels=(0.2,), fusion=("simple",), **FAST)
    sim = Simulation(spec)
    bundle = calibrate_scenario(spec)[0]
    pos = np.asarray(spec.calibration_position, float)
    clean = sim.clean_features(pos, sim.test_targets)
    # lose the eye for the first five targets
    clean.valid[:, :5] = False
    res = sim.evaluate(pos, 0.2, bundle, stream=(0,), clean=clean)
    ok = res.fused_ok["simple"]
    err = res.errors["simple"]
    assert ok.sum() == 13 * 20 and ok.size == 18 * 20
    assert np.all(np.isnan(err[~ok])) and np.all(np.isfinite(err[ok]))
    assert not np.any(res.sensor_ok[:, :5])


_MULTI_VIEW = [("case1", 3), ("case1", 5), ("case1", 9)]
_SINGLE_VIEW = [("case0", 1), ("case0", 3), ("case0", 9), ("case1", 1)]


def _calibration_point_error(layout, cameras):
    spec = ScenarioSpec(
        scenario="SH", layout=layout, cameras=cameras, noise_levels=(0.0,), fusion=("simple",),
        test_points="calibration", **FAST,
    )
    return run_scenario(spec).rows[0].mean_error_deg


@pytest.mark.parametrize(
    "layout,cameras",
    _MULTI_VIEW
    + [
        pytest.param(
            *rig,
            marks=pytest.mark.xfail(
                strict=True,
                reason="single-view cross-ratio bias with a fixed cornea is not affine; "
                "about 0.51 deg remains at the calibration points",
            ),
        )
        for rig in _SINGLE_VIEW
    ],
)
def test_noise_free_error_at_calibration_points(layout, cameras):
    assert _calibration_point_error(layout, cameras) < 0.3


@pytest.mark.parametrize("layout,cameras", [("case0", 1), ("case0", 5), ("case1", 3)])
def test_error_grows_with_noise(layout, cameras):
    spec = ScenarioSpec(scenario="SH", layout=layout, cameras=cameras, noise_levels=(0.0, 0.2, 0.4), seed=3)
    rep = run_scenario(spec)
    for method in spec.fusion:
        e0, e2, e4 = (rep.lookup(fusion=method, noise=n)[0].mean_error_deg for n in (0.0, 0.2, 0.4))
        assert e4 >= e2 - 0.02 and e2 >= e0 - 0.02


# -- reports ------------------------------------------------------------------------------


def _report(layout, cameras=3):
    spec = ScenarioSpec(scenario="SH", layout=layout, cameras=cameras, noise_levels=(0.2,), fusion=("simple",), **FAST)
    return run_scenario(spec)


def test_csv_schema():
    rows = list(csv.reader(io.StringIO(_report("case1").to_csv())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 2


def test_empty_report_is_header_only():
    assert MetricsReport("empty", None).to_csv() == ",".join(CSV_COLUMNS) + "\n"


def test_summary_pairs_layouts():
    table = list(csv.DictReader(io.StringIO(summarize([_report("case0"), _report("case1")]))))
    assert len(table) == 1
    assert table[0]["case0_mean_error_deg"] and table[0]["case1_mean_error_deg"]
    assert float(table[0]["case1_mean_error_deg"]) < float(table[0]["case0_mean_error_deg"])


def test_single_report_one_group():
    table = list(csv.DictReader(io.StringIO(summarize([_report("case1")]))))
    assert len(table) == 1 and "case1_availability_pct" in table[0]


def test_missing_combination_is_blank_not_zero():
    table = list(csv.DictReader(io.StringIO(summarize([_report("case0", 1), _report("case1", 3)]))))
    by_c = {row["C"]: row for row in table}
    assert by_c["1"]["case1_availability_pct"] == ""
    assert by_c["3"]["case0_availability_pct"] == ""
    assert by_c["1"]["case0_availability_pct"] == "100.000000"


def test_unavailable_frames_reported_as_zero_percent():
    spec = ScenarioSpec(
        scenario="MH", layout="case1", cameras=1, noise_levels=(0.2,), fusion=("simple",),
        displacements=(("X", (-600.0,)),), **FAST,
    )
    row = run_scenario(spec).rows[0]
    assert row.availability_pct == 0.0 and math.isnan(row.mean_error_deg)
    assert "NA" in row.csv_values()


@pytest.mark.parametrize(
    "kwargs",
    [{"scenario": "XX"}, {"layout": "case3"}, {"cameras": 0}, {"noise_levels": (-1.0,)},
     {"fusion": ("median",)}, {"camera_noise_scale": (1.0,)}, {"test_points": "grid"}],
)
def test_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ScenarioSpec(**kwargs)
