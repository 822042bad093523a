"""Per-sensor bias correction and calibration-derived fusion weight maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CalibrationError
from .scene import Screen

WEIGHT_MAP_VERSION = 1
DEFAULT_EPSILON_DEG = 0.05
DEFAULT_GRID = (61, 41)


@dataclass(frozen=True)
class CalibrationSample:
    raw: np.ndarray  # estimated PoR Z, screen mm
    target: np.ndarray  # calibration target P, screen mm
    point_index: int
    frame_index: int


def _design(z, order, mean, scale):
    """Feature matrix without intercept: standardized (x, y) [+ quadratic terms]."""
    u = (np.asarray(z, dtype=float) - mean) / scale
    x, y = u[..., 0], u[..., 1]
    cols = [x, y]
    if order == 2:
        cols += [x * x, x * y, y * y]
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class CalibrationModel:
    """Correction map F(z) = intercept + coefficients^T phi(z).

    ``phi`` standardizes the raw PoR with the training mean/scale, then adds
    quadratic terms for ``order=2``. ``coefficients`` has shape (n_features, 2).
    """

    intercept: np.ndarray
    coefficients: np.ndarray
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    ridge: float = 0.0
    order: int = 1
    rms_residual: float = 0.0
    max_residual: float = 0.0

    def __call__(self, z) -> np.ndarray:
        phi = _design(z, self.order, self.feature_mean, self.feature_scale)
        return self.intercept + phi @ self.coefficients

    @classmethod
    def identity(cls) -> "CalibrationModel":
        return cls(
            intercept=np.zeros(2),
            coefficients=np.eye(2),
            feature_mean=np.zeros(2),
            feature_scale=np.ones(2),
        )

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "ridge": self.ridge,
            "intercept": [float(v) for v in self.intercept],
            "coefficients": [[float(v) for v in row] for row in self.coefficients],
            "feature_mean": [float(v) for v in self.feature_mean],
            "feature_scale": [float(v) for v in self.feature_scale],
            "rms_residual_mm": self.rms_residual,
            "max_residual_mm": self.max_residual,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationModel":
        return cls(
            intercept=np.array(d["intercept"], dtype=float),
            coefficients=np.array(d["coefficients"], dtype=float),
            feature_mean=np.array(d["feature_mean"], dtype=float),
            feature_scale=np.array(d["feature_scale"], dtype=float),
            ridge=float(d["ridge"]),
            order=int(d["order"]),
            rms_residual=float(d["rms_residual_mm"]),
            max_residual=float(d["max_residual_mm"]),
        )


def _count_distinct(targets) -> np.ndarray:
    return np.unique(np.round(np.asarray(targets, float), 9), axis=0)


def fit_bias_correction_arrays(raw, targets, ridge=1.0, order=1) -> CalibrationModel:
    """Ridge fit of F minimizing sum ||P - F(Z)||^2 + ridge * ||coefficients||^2.

    The intercept is not penalized; features are standardized first, so a
    very large ridge shrinks F to the constant mean(P).

    Raises:
        CalibrationError: too few samples/targets (``insufficient_data``) or a
            singular unregularized system (``ill_conditioned``).
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 (affine) or 2 (quadratic)")
    if ridge < 0:
        raise ValueError("ridge must be non-negative")
    z = np.asarray(raw, dtype=float).reshape(-1, 2)
    p = np.asarray(targets, dtype=float).reshape(-1, 2)
    min_samples, min_targets = (6, 3) if order == 1 else (12, 5)
    distinct = _count_distinct(p)
    if len(z) < min_samples or len(distinct) < min_targets:
        raise CalibrationError("not enough calibration data", reason="insufficient_data")
    if order == 1:
        centered = distinct - distinct.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9 * max(np.abs(centered).max(), 1.0)) < 2:
            raise CalibrationError("calibration targets are collinear", reason="insufficient_data")

    mean = z.mean(axis=0)
    scale = z.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    phi = _design(z, order, mean, scale)
    phi_mean = phi.mean(axis=0)
    p_mean = p.mean(axis=0)
    # centering phi decouples the unpenalized intercept from the ridge system
    phi_c = phi - phi_mean
    gram = phi_c.T @ phi_c + ridge * np.eye(phi.shape[1])
    rhs = phi_c.T @ (p - p_mean)
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        raise CalibrationError("design matrix is rank deficient", reason="ill_conditioned")
    coef = np.linalg.solve(gram, rhs)
    intercept = p_mean - phi_mean @ coef
    resid = np.linalg.norm(intercept + phi @ coef - p, axis=1)
    return CalibrationModel(
        intercept=intercept,
        coefficients=coef,
        feature_mean=mean,
        feature_scale=scale,
        ridge=float(ridge),
        order=order,
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        max_residual=float(resid.max()),
    )


def fit_bias_correction(samples, ridge=1.0, order=1) -> CalibrationModel:
    """Fit from :class:`CalibrationSample` objects."""
    samples = list(samples)
    raw = np.array([s.raw for s in samples], dtype=float).reshape(-1, 2)
    targets = np.array([s.target for s in samples], dtype=float).reshape(-1, 2)
    return fit_bias_correction_arrays(raw, targets, ridge=ridge, order=order)


def apply_bias_correction(model: CalibrationModel, raw) -> np.ndarray:
    """F(raw); accepts a RawGaze, a point, or an (..., 2) array. No clamping."""
    por = getattr(raw, "por", raw)
    return model(por)


def angular_error_deg(targets_xy, estimates_xy, eye_position) -> np.ndarray:
    """Angle at the eye between rays to screen points (z = 0); vectorized."""
    eye = np.asarray(eye_position, dtype=float)
    t = np.asarray(targets_xy, dtype=float)
    e = np.asarray(estimates_xy, dtype=float)
    a = np.concatenate([t, np.zeros(t.shape[:-1] + (1,))], axis=-1) - eye
    b = np.concatenate([e, np.zeros(e.shape[:-1] + (1,))], axis=-1) - eye
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.degrees(np.arctan2(cross, dot))


@dataclass(frozen=True)
class SensorPointStats:
    """Per-(sensor, calibration point) reliability statistics.

    ``error_deg`` and ``availability`` have shape (n_sensors, n_points);
    ``error_deg`` is NaN where a sensor produced no sample for the point.
    """

    sensors: tuple[str, ...]
    points: np.ndarray  # (n_points, 2) calibration targets
    error_deg: np.ndarray
    availability: np.ndarray
    counts: np.ndarray


def compute_point_stats(sensors, points, calibrated, available, eye_position) -> SensorPointStats:
    """Accuracy and availability of each sensor at each calibration point.

    Args:
        sensors: sensor labels, length S.
        points: (N, 2) calibration targets.
        calibrated: (S, N, K, 2) calibrated PoRs (ignored where unavailable).
        available: (S, N, K) boolean availability.
        eye_position: viewing position for the angular error.
    """
    points = np.asarray(points, dtype=float)
    calibrated = np.asarray(calibrated, dtype=float)
    available = np.asarray(available, dtype=bool)
    n_frames = available.shape[-1]
    err = angular_error_deg(
        np.broadcast_to(points[None, :, None, :], calibrated.shape), calibrated, eye_position
    )
    counts = available.sum(axis=-1)
    total = np.where(available, err, 0.0).sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_err = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
    return SensorPointStats(
        sensors=tuple(sensors),
        points=points,
        error_deg=mean_err,
        availability=counts / float(n_frames) if n_frames else np.zeros_like(mean_err),
        counts=counts,
    )


def point_weights(stats: SensorPointStats, epsilon=DEFAULT_EPSILON_DEG) -> np.ndarray:
    """Weights (S, N): availability / (error + epsilon), normalized per point."""
    err = np.nan_to_num(stats.error_deg, nan=0.0)
    score = np.where(stats.availability > 0, stats.availability / (err + epsilon), 0.0)
    total = score.sum(axis=0)
    if np.any(total <= 0):
        k = int(np.flatnonzero(total <= 0)[0])
        raise CalibrationError(
            f"no sensor available at calibration point {k}", reason="uncalibratable_point"
        )
    return score / total


def _knot_axes(points):
    xs = np.unique(np.round(points[:, 0], 9))
    ys = np.unique(np.round(points[:, 1], 9))
    if len(xs) * len(ys) != len(points):
        raise ValueError("calibration points must form a full rectangular grid")
    return xs, ys


def _interp_axis(knots, q):
    """Index of the left knot and the fractional position; clamps outside."""
    q = np.clip(q, knots[0], knots[-1])
    if len(knots) == 1:
        return np.zeros(q.shape, dtype=int), np.zeros(q.shape)
    i = np.clip(np.searchsorted(knots, q, side="right") - 1, 0, len(knots) - 2)
    t = (q - knots[i]) / (knots[i + 1] - knots[i])
    return i, t


def _bilinear(values, xs, ys, qx, qy):
    """values indexed [.., iy, ix] on knots (xs, ys); query arrays qx, qy."""
    ix, tx = _interp_axis(xs, qx)
    jx = np.minimum(ix + 1, len(xs) - 1)
    iy, ty = _interp_axis(ys, qy)
    jy = np.minimum(iy + 1, len(ys) - 1)
    v00 = values[..., iy, ix]
    v01 = values[..., iy, jx]
    v10 = values[..., jy, ix]
    v11 = values[..., jy, jx]
    return (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11)


@dataclass(frozen=True)
class WeightMap:
    """Per-sensor fusion weights sampled on a regular screen grid.

    ``values`` has shape (S, ny, nx); at every node the S values sum to one.
    """

    sensors: tuple[str, ...]
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    epsilon: float = DEFAULT_EPSILON_DEG
    version: int = field(default=WEIGHT_MAP_VERSION)

    def lookup(self, xy) -> np.ndarray:
        """Bilinear weights at screen points: (..., 2) -> (S, ...)."""
        xy = np.asarray(xy, dtype=float)
        return _bilinear(self.values, self.xs, self.ys, xy[..., 0], xy[..., 1])

    def sensor_map(self, sensor) -> np.ndarray:
        return self.values[self.sensors.index(str(sensor))]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "epsilon_deg": self.epsilon,
            "sensors": list(self.sensors),
            "grid_x_mm": [float(v) for v in self.xs],
            "grid_y_mm": [float(v) for v in self.ys],
            "values": self.values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WeightMap":
        if d.get("version") != WEIGHT_MAP_VERSION:
            raise ValueError(f"unsupported weight map version {d.get('version')!r}")
        return cls(
            sensors=tuple(d["sensors"]),
            xs=np.array(d["grid_x_mm"], dtype=float),
            ys=np.array(d["grid_y_mm"], dtype=float),
            values=np.array(d["values"], dtype=float),
            epsilon=float(d["epsilon_deg"]),
        )


def build_weight_maps(
    stats: SensorPointStats,
    screen: Screen,
    grid=DEFAULT_GRID,
    epsilon=DEFAULT_EPSILON_DEG,
) -> WeightMap:
    """Interpolate per-point sensor weights over the whole screen.

    Point weights are bilinearly interpolated between the calibration grid
    knots and held constant beyond the outermost knots, then renormalized so
    each grid node sums to one across sensors.
    """
    w = point_weights(stats, epsilon)
    xs_k, ys_k = _knot_axes(stats.points)
    # arrange per-point weights on the (ny, nx) knot lattice
    lattice = np.empty((w.shape[0], len(ys_k), len(xs_k)))
    for k, (px, py) in enumerate(stats.points):
        ix = int(np.argmin(np.abs(xs_k - px)))
        iy = int(np.argmin(np.abs(ys_k - py)))
        lattice[:, iy, ix] = w[:, k]
    xmin, xmax, ymin, ymax = screen.bounds
    nx, ny = grid
    gx = np.linspace(xmin, xmax, nx)
    gy = np.linspace(ymin, ymax, ny)
    qx, qy = np.meshgrid(gx, gy)
    values = _bilinear(lattice, xs_k, ys_k, qx, qy)
    values = np.clip(values, 0.0, None)
    values /= values.sum(axis=0, keepdims=True)
    return WeightMap(sensors=tuple(stats.sensors), xs=gx, ys=gy, values=values, epsilon=epsilon)
