"""Scenario runner: calibration phase, test phase, metrics aggregation.

Noise-free features depend only on (eye position, target, camera, eye), so
they are synthesized once and every noisy frame is that template plus a
uniform perturbation. Random streams are keyed by (seed, phase, position)
and shared across noise levels, which are applied as a scale factor.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import (
    DEFAULT_EPSILON_DEG,
    DEFAULT_GRID,
    CalibrationModel,
    SensorPointStats,
    WeightMap,
    angular_error_deg,
    build_weight_maps,
    compute_point_stats,
    fit_bias_correction_arrays,
)
from .errors import CalibrationError
from .estimator import SensorId, estimate_raw_por_batch
from .eye_model import EyeParams, HeadMode, build_eye_state
from .fusion import (
    FusionMethod,
    fuse_behavior_batch,
    fuse_best_camera_batch,
    fuse_head_pose_batch,
    fuse_simple_batch,
)
from .scene import (
    DEFAULT_EYE_POSITION,
    CameraRig,
    Screen,
    generate_rig,
    head_yaw_wrt_camera,
    synthesize_features,
)

CALIBRATION_BUNDLE_VERSION = 1
CSV_COLUMNS = (
    "scenario",
    "layout",
    "C",
    "fusion",
    "noise",
    "axis",
    "displacement_mm",
    "mean_error_deg",
    "availability_pct",
    "n_frames",
)
AXES = {"X": 0, "Y": 1, "Z": 2}
DEFAULT_DISPLACEMENTS = (
    ("X", tuple(float(d) for d in range(-200, 201, 50))),
    ("Y", tuple(float(d) for d in range(-200, 201, 50))),
    ("Z", tuple(float(d) for d in range(-200, 201, 50))),
)

# random stream identifiers
_STREAM_TEST_POINTS = 1
_STREAM_CALIBRATION = 2
_STREAM_TEST = 3


def angular_error(true_target, estimated_por, eye_position) -> float:
    """Visual angle (degrees) between a screen target and an estimate.

    ``true_target`` may be a screen (X, Y) pair or a 3D point with z = 0.
    """
    t = np.asarray(true_target, dtype=float)[:2]
    return float(angular_error_deg(t, np.asarray(estimated_por, dtype=float)[:2], eye_position))


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of one simulated experiment."""

    name: str = "scenario"
    scenario: str = "SH"
    layout: str = "case1"
    cameras: int = 3
    noise_levels: tuple = (0.0, 0.1, 0.2, 0.4)
    calibration_position: tuple = DEFAULT_EYE_POSITION
    displacements: tuple = DEFAULT_DISPLACEMENTS
    calibration_frames: int = 100
    test_frames: int = 100
    seed: int = 0
    fusion: tuple = ("simple", "head_pose", "behavior", "best_camera")
    head_mode: str = "follow-target"
    eye: EyeParams = field(default_factory=EyeParams)
    eyes: tuple = ("L", "R")
    ipd: float = 62.0
    ridge: float = 1.0
    order: int = 1
    alpha_max: float = 45.0
    epsilon: float = DEFAULT_EPSILON_DEG
    weight_grid: tuple = DEFAULT_GRID
    camera_noise_scale: tuple | None = None
    test_points: str = "random"
    case0_spacing: float = 20.0
    standoff: float = 50.0

    def __post_init__(self):
        if self.scenario not in ("SH", "MH"):
            raise ValueError(f"scenario must be SH or MH, got {self.scenario!r}")
        if self.layout not in ("case0", "case1"):
            raise ValueError(f"layout must be case0 or case1, got {self.layout!r}")
        if self.cameras < 1:
            raise ValueError("cameras must be >= 1")
        if self.calibration_frames < 1 or self.test_frames < 1:
            raise ValueError("frame counts must be >= 1")
        if any(n < 0 for n in self.noise_levels):
            raise ValueError("noise levels must be non-negative")
        for m in self.fusion:
            FusionMethod(m)
        HeadMode(self.head_mode)
        if not set(self.eyes) <= {"L", "R"} or not self.eyes:
            raise ValueError("eyes must be a non-empty subset of L, R")
        for axis, values in self.displacements:
            if axis not in AXES:
                raise ValueError(f"unknown displacement axis {axis!r}")
        if self.camera_noise_scale is not None and len(self.camera_noise_scale) != self.cameras:
            raise ValueError("camera_noise_scale needs one factor per camera")
        if self.test_points not in ("random", "calibration"):
            raise ValueError("test_points must be 'random' or 'calibration'")

    def positions(self) -> list[tuple[str, float, np.ndarray]]:
        """(axis, displacement, eye position) for every tested position."""
        base = np.asarray(self.calibration_position, dtype=float)
        if self.scenario == "SH":
            return [("none", 0.0, base)]
        out = []
        for axis, values in self.displacements:
            for d in values:
                pos = base.copy()
                pos[AXES[axis]] += d
                out.append((axis, float(d), pos))
        return out


def calibration_grid(screen: Screen, margin=0.1) -> np.ndarray:
    """3x3 targets, row-major from the bottom-left, inset by ``margin``."""
    xmin, xmax, ymin, ymax = screen.bounds
    xs = np.linspace(xmin + margin * screen.width, xmax - margin * screen.width, 3)
    ys = np.linspace(ymin + margin * screen.height, ymax - margin * screen.height, 3)
    return np.array([(x, y) for y in ys for x in xs])


def random_test_points(screen: Screen, seed: int, per_cell=2) -> np.ndarray:
    """``per_cell`` uniform random targets in each cell of a 3x3 partition."""
    rng = np.random.default_rng([seed, _STREAM_TEST_POINTS])
    xmin, _, ymin, _ = screen.bounds
    cw, ch = screen.width / 3.0, screen.height / 3.0
    pts = []
    for row in range(3):
        for col in range(3):
            for _ in range(per_cell):
                u, v = rng.random(2)
                pts.append((xmin + (col + u) * cw, ymin + (row + v) * ch))
    return np.array(pts)


@dataclass(frozen=True)
class CleanFeatures:
    """Noise-free features for S sensors x T targets."""

    points: np.ndarray  # (S, T, 5, 2): four glints then the pupil
    valid: np.ndarray  # (S, T)
    reasons: np.ndarray  # (S, T) object, None where valid
    yaw: np.ndarray  # (C, T) head yaw per camera, degrees


@dataclass
class CalibrationBundle:
    """Everything learned in the calibration phase for one noise level."""

    noise: float
    sensors: tuple[str, ...]
    models: dict  # sensor label -> CalibrationModel | None
    weight_map: WeightMap | None
    stats: SensorPointStats | None = None
    notes: tuple = ()

    def to_dict(self) -> dict:
        return {
            "version": CALIBRATION_BUNDLE_VERSION,
            "noise_px": self.noise,
            "sensors": list(self.sensors),
            "models": {
                s: (m.to_dict() if m is not None else None) for s, m in self.models.items()
            },
            "weight_map": self.weight_map.to_dict() if self.weight_map is not None else None,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationBundle":
        if d.get("version") != CALIBRATION_BUNDLE_VERSION:
            raise ValueError(f"unsupported calibration version {d.get('version')!r}")
        return cls(
            noise=float(d["noise_px"]),
            sensors=tuple(d["sensors"]),
            models={
                s: (CalibrationModel.from_dict(m) if m is not None else None)
                for s, m in d["models"].items()
            },
            weight_map=WeightMap.from_dict(d["weight_map"]) if d["weight_map"] else None,
            notes=tuple(d.get("notes", ())),
        )


@dataclass
class FrameResults:
    """Per-frame outcome of one (position, noise level) test block."""

    targets: np.ndarray  # (T, 2)
    eye_position: np.ndarray
    fused: dict  # method -> (T, F, 2)
    fused_ok: dict  # method -> (T, F)
    errors: dict  # method -> (T, F) degrees, NaN where unavailable
    sensor_errors: np.ndarray  # (S, T, F)
    sensor_ok: np.ndarray  # (S, T, F)
    yaw: np.ndarray  # (C, T)


@dataclass
class MetricsRow:
    scenario: str
    layout: str
    cameras: int
    fusion: str
    noise: float
    axis: str
    displacement_mm: float
    mean_error_deg: float
    availability_pct: float
    n_frames: int
    n_available: int

    def csv_values(self) -> list[str]:
        return [
            self.scenario,
            self.layout,
            str(self.cameras),
            self.fusion,
            _fmt(self.noise),
            self.axis,
            _fmt(self.displacement_mm),
            _fmt(self.mean_error_deg),
            _fmt(self.availability_pct),
            str(self.n_frames),
        ]


@dataclass
class SensorRow:
    sensor: str
    noise: float
    axis: str
    displacement_mm: float
    mean_error_deg: float
    availability_pct: float


@dataclass
class MetricsReport:
    name: str
    spec: ScenarioSpec | None
    rows: list = field(default_factory=list)
    sensor_rows: list = field(default_factory=list)
    calibrations: list = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow(row.csv_values())
        return buf.getvalue()

    def lookup(self, fusion=None, noise=None, axis=None, displacement=None) -> list[MetricsRow]:
        out = []
        for r in self.rows:
            if fusion is not None and r.fusion != fusion:
                continue
            if noise is not None and not math.isclose(r.noise, noise):
                continue
            if axis is not None and r.axis != axis:
                continue
            if displacement is not None and not math.isclose(r.displacement_mm, displacement):
                continue
            out.append(r)
        return out

    def summary(self) -> dict:
        """Structured overview: per-sensor breakdown and calibration fit quality."""
        return {
            "name": self.name,
            "rows": len(self.rows),
            "calibration": [
                {
                    "noise_px": b.noise,
                    "notes": list(b.notes),
                    "sensors": {
                        s: (
                            None
                            if m is None
                            else {
                                "rms_residual_mm": _round(m.rms_residual),
                                "max_residual_mm": _round(m.max_residual),
                            }
                        )
                        for s, m in b.models.items()
                    },
                }
                for b in self.calibrations
            ],
            "sensors": [
                {
                    "sensor": r.sensor,
                    "noise_px": r.noise,
                    "axis": r.axis,
                    "displacement_mm": r.displacement_mm,
                    "mean_error_deg": _round(r.mean_error_deg),
                    "availability_pct": _round(r.availability_pct),
                }
                for r in self.sensor_rows
            ],
        }


def _round(x, digits=6):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return None
    return round(float(x), digits)


def _fmt(x) -> str:
    if isinstance(x, float) and math.isnan(x):
        return "NA"
    return f"{float(x):.6f}"


class Simulation:
    """Scene, rig and eyes of one scenario, with cached noise-free features."""

    def __init__(self, spec: ScenarioSpec, screen: Screen | None = None, rig: CameraRig | None = None):
        self.spec = spec
        self.screen = screen or Screen()
        self.rig = rig or generate_rig(
            spec.layout,
            spec.cameras,
            self.screen,
            standoff=spec.standoff,
            spacing=spec.case0_spacing,
            aim=spec.calibration_position,
        )
        self.eye_params = {side: replace(spec.eye, eye_side=side) for side in spec.eyes}
        self.sensor_ids = [
            SensorId(c + 1, side) for c in range(self.rig.count) for side in spec.eyes
        ]
        self.sensors = tuple(str(s) for s in self.sensor_ids)
        self.camera_of_sensor = np.array([s.camera for s in self.sensor_ids])
        scale = spec.camera_noise_scale or (1.0,) * self.rig.count
        self.sensor_noise_scale = np.array([scale[s.camera - 1] for s in self.sensor_ids])
        self.calibration_targets = calibration_grid(self.screen)
        if spec.test_points == "calibration":
            self.test_targets = self.calibration_targets.copy()
        else:
            self.test_targets = random_test_points(self.screen, spec.seed)

    def eye_position(self, head, side) -> np.ndarray:
        offset = self.spec.ipd / 2.0 if side == "R" else -self.spec.ipd / 2.0
        if len(self.spec.eyes) == 1:
            offset = 0.0
        return np.asarray(head, dtype=float) + np.array([offset, 0.0, 0.0])

    def clean_features(self, head, targets) -> CleanFeatures:
        head = np.asarray(head, dtype=float)
        n_s, n_t = len(self.sensor_ids), len(targets)
        points = np.full((n_s, n_t, 5, 2), np.nan)
        valid = np.zeros((n_s, n_t), dtype=bool)
        reasons = np.full((n_s, n_t), None, dtype=object)
        yaw = np.zeros((self.rig.count, n_t))
        screen_center = self.screen.center
        for t, (tx, ty) in enumerate(targets):
            target3 = np.array([tx, ty, 0.0])
            states = {
                side: build_eye_state(
                    p, self.eye_position(head, side), target3, self.spec.head_mode, screen_center
                )
                for side, p in self.eye_params.items()
            }
            if HeadMode(self.spec.head_mode) is HeadMode.FOLLOW_TARGET:
                head_forward = target3 - head
            else:
                head_forward = screen_center - head
            head_forward /= np.linalg.norm(head_forward)
            for c, cam in enumerate(self.rig.cameras):
                yaw[c, t] = head_yaw_wrt_camera(head_forward, head, cam)
            for s, sid in enumerate(self.sensor_ids):
                cam = self.rig.cameras[sid.camera - 1]
                fs = synthesize_features(self.screen, states[sid.eye], self.eye_params[sid.eye], cam)
                if fs.valid:
                    points[s, t] = fs.points()
                    valid[s, t] = True
                else:
                    reasons[s, t] = fs.invalid_reason
        return CleanFeatures(points, valid, reasons, yaw)

    def _noisy_raw(self, clean: CleanFeatures, level, n_frames, stream):
        """Raw PoRs (S, T, F, 2) and availability (S, T, F) for one noise level."""
        rng = np.random.default_rng([self.spec.seed, *stream])
        n_s, n_t = clean.valid.shape
        unit = rng.uniform(-1.0, 1.0, size=(n_s, n_t, n_frames, 5, 2))
        amp = level * self.sensor_noise_scale[:, None, None, None, None]
        pts = clean.points[:, :, None] + amp * unit
        flat = pts.reshape(-1, 5, 2)
        valid = np.broadcast_to(clean.valid[:, :, None], (n_s, n_t, n_frames)).reshape(-1)
        por = np.full((flat.shape[0], 2), np.nan)
        ok = np.zeros(flat.shape[0], dtype=bool)
        if valid.any():
            p, o = estimate_raw_por_batch(flat[valid, :4], flat[valid, 4], self.screen.led_xy)
            por[valid] = p
            ok[valid] = o
        return por.reshape(n_s, n_t, n_frames, 2), ok.reshape(n_s, n_t, n_frames)

    def calibrate(self, level, clean: CleanFeatures | None = None) -> CalibrationBundle:
        """Fit per-sensor corrections and weight maps from the 9-point phase.

        Raises:
            CalibrationError: ``uncalibratable`` when no sensor can be fitted.
        """
        spec = self.spec
        if clean is None:
            clean = self.clean_features(spec.calibration_position, self.calibration_targets)
        raw, ok = self._noisy_raw(clean, level, spec.calibration_frames, (_STREAM_CALIBRATION,))
        targets = np.broadcast_to(
            self.calibration_targets[None, :, None, :], raw.shape
        )
        models = {}
        notes = []
        corrected = np.full_like(raw, np.nan)
        for s, label in enumerate(self.sensors):
            mask = ok[s]
            try:
                model = fit_bias_correction_arrays(
                    raw[s][mask], targets[s][mask], ridge=spec.ridge, order=spec.order
                )
            except CalibrationError as exc:
                models[label] = None
                notes.append(f"{label}: {exc.reason}")
                continue
            models[label] = model
            corrected[s] = model(raw[s])
        if all(m is None for m in models.values()):
            raise CalibrationError("no sensor could be calibrated", reason="uncalibratable")
        usable = ok & np.array([models[s] is not None for s in self.sensors])[:, None, None]
        stats = compute_point_stats(
            self.sensors,
            self.calibration_targets,
            corrected,
            usable,
            spec.calibration_position,
        )
        try:
            wmap = build_weight_maps(stats, self.screen, spec.weight_grid, spec.epsilon)
        except CalibrationError as exc:
            wmap = None
            notes.append(f"weight maps unavailable: {exc.reason}; behavior fusion uses simple averaging")
        return CalibrationBundle(level, self.sensors, models, wmap, stats, tuple(notes))

    def evaluate(self, position, level, bundle: CalibrationBundle, stream=(0,), clean=None) -> FrameResults:
        """Estimate, correct and fuse every test frame at one eye position."""
        spec = self.spec
        position = np.asarray(position, dtype=float)
        if clean is None:
            clean = self.clean_features(position, self.test_targets)
        raw, ok = self._noisy_raw(clean, level, spec.test_frames, (_STREAM_TEST, *stream))
        corrected = np.full_like(raw, np.nan)
        for s, label in enumerate(self.sensors):
            model = bundle.models.get(label)
            if model is None:
                ok[s] = False
            else:
                corrected[s] = model(raw[s])
        yaw = clean.yaw[self.camera_of_sensor - 1][:, :, None]  # (S, T, 1)
        targets = self.test_targets
        tgt = np.broadcast_to(targets[:, None, :], corrected.shape[1:])
        fused, fused_ok, errors = {}, {}, {}
        for method in spec.fusion:
            m = FusionMethod(method)
            if m is FusionMethod.SIMPLE or (m is FusionMethod.BEHAVIOR and bundle.weight_map is None):
                f, fok = fuse_simple_batch(corrected, ok)
            elif m is FusionMethod.HEAD_POSE:
                f, fok = fuse_head_pose_batch(corrected, ok, yaw, spec.alpha_max)
            elif m is FusionMethod.BEHAVIOR:
                f, fok = fuse_behavior_batch(corrected, ok, bundle.weight_map, self.screen)
            else:
                f, fok = fuse_best_camera_batch(
                    corrected, ok, yaw, self.camera_of_sensor, spec.alpha_max
                )
            err = np.where(fok, angular_error_deg(tgt, np.where(fok[..., None], f, 0.0), position), np.nan)
            fused[method], fused_ok[method], errors[method] = f, fok, err
        sensor_err = np.where(
            ok,
            angular_error_deg(
                np.broadcast_to(tgt, corrected.shape), np.where(ok[..., None], corrected, 0.0), position
            ),
            np.nan,
        )
        return FrameResults(targets, position, fused, fused_ok, errors, sensor_err, ok, clean.yaw)


def _mean_or_nan(values, mask) -> float:
    n = int(mask.sum())
    return float(values[mask].mean()) if n else float("nan")


def _evaluate_position(args):
    spec, pos_index, axis, disp, position, bundles = args
    sim = Simulation(spec)
    clean = sim.clean_features(position, sim.test_targets)
    rows, sensor_rows = [], []
    for bundle in bundles:
        res = sim.evaluate(position, bundle.noise, bundle, stream=(pos_index,), clean=clean)
        for method in spec.fusion:
            ok = res.fused_ok[method]
            rows.append(
                MetricsRow(
                    scenario=spec.scenario,
                    layout=spec.layout,
                    cameras=spec.cameras,
                    fusion=method,
                    noise=float(bundle.noise),
                    axis=axis,
                    displacement_mm=disp,
                    mean_error_deg=_mean_or_nan(res.errors[method], ok),
                    availability_pct=100.0 * ok.sum() / ok.size,
                    n_frames=int(ok.size),
                    n_available=int(ok.sum()),
                )
            )
        for s, label in enumerate(sim.sensors):
            ok = res.sensor_ok[s]
            sensor_rows.append(
                SensorRow(
                    label,
                    float(bundle.noise),
                    axis,
                    disp,
                    _mean_or_nan(res.sensor_errors[s], ok),
                    100.0 * ok.sum() / ok.size,
                )
            )
    return pos_index, rows, sensor_rows


def calibrate_scenario(spec: ScenarioSpec) -> list[CalibrationBundle]:
    """Calibration phase only: one bundle per noise level."""
    sim = Simulation(spec)
    clean = sim.clean_features(spec.calibration_position, sim.calibration_targets)
    return [sim.calibrate(level, clean) for level in spec.noise_levels]


def run_scenario(spec: ScenarioSpec, jobs: int = 1, calibrations=None) -> MetricsReport:
    """Run calibration then test phases; deterministic for a given spec.

    Args:
        spec: the scenario.
        jobs: worker processes for the per-position test grid.
        calibrations: optional precomputed bundles (one per noise level, in
            ``spec.noise_levels`` order); skips the calibration phase.
    """
    if calibrations is None:
        calibrations = calibrate_scenario(spec)
    else:
        calibrations = list(calibrations)
        levels = [b.noise for b in calibrations]
        if len(levels) != len(spec.noise_levels) or not np.allclose(levels, spec.noise_levels):
            raise ValueError("calibration bundles do not match the scenario noise levels")
    tasks = [
        (spec, i, axis, disp, pos, calibrations)
        for i, (axis, disp, pos) in enumerate(spec.positions())
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_position, tasks))
    else:
        results = [_evaluate_position(t) for t in tasks]
    results.sort(key=lambda r: r[0])
    report = MetricsReport(name=spec.name, spec=spec, calibrations=calibrations)
    # order rows by (noise, position, fusion) for stable, readable CSVs
    by_noise = {}
    for _, rows, sensor_rows in results:
        for r in rows:
            by_noise.setdefault(r.noise, []).append(r)
        report.sensor_rows.extend(sensor_rows)
    for level in spec.noise_levels:
        report.rows.extend(by_noise.get(float(level), []))
    return report


SUMMARY_KEYS = ("scenario", "fusion", "noise", "axis", "displacement_mm", "C")


def summarize(reports) -> str:
    """Pivot reports into a case0-vs-case1 comparison CSV.

    One line per (scenario, fusion, noise, axis, displacement, C); paired
    error/availability columns per layout. Combinations a layout did not
    run are left empty, unlike a measured 0% availability.
    """
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to summarize")
    rows = [r for rep in reports for r in (rep.rows if isinstance(rep, MetricsReport) else rep)]
    return summarize_rows(rows)


def summarize_rows(rows) -> str:
    layouts = sorted({_get(r, "layout") for r in rows})
    table = {}
    for r in rows:
        key = (
            _get(r, "scenario"),
            _get(r, "fusion"),
            float(_get(r, "noise")),
            _get(r, "axis"),
            float(_get(r, "displacement_mm")),
            int(_get(r, "C")),
        )
        table.setdefault(key, {})[_get(r, "layout")] = r
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(SUMMARY_KEYS)
    for lay in layouts:
        header += [f"{lay}_mean_error_deg", f"{lay}_availability_pct"]
    writer.writerow(header)
    for key in sorted(table):
        scen, fusion, noise, axis, disp, cams = key
        line = [scen, fusion, _fmt(noise), axis, _fmt(disp), str(cams)]
        for lay in layouts:
            r = table[key].get(lay)
            if r is None:
                line += ["", ""]
            else:
                line += [_cell(_get(r, "mean_error_deg")), _cell(_get(r, "availability_pct"))]
        writer.writerow(line)
    return buf.getvalue()


def _get(row, name):
    if isinstance(row, dict):
        return row[name]
    if name == "C":
        return row.cameras
    return getattr(row, name)


def _cell(value) -> str:
    if isinstance(value, str):
        return value
    return _fmt(float(value))


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return list(reader)
