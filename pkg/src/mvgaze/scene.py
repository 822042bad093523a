"""Screen, light sources, camera rigs and per-frame feature synthesis.

World frame: the screen lies in z = 0 with its origin at the midpoint of the
bottom edge, +Y up, +X to the viewer's right and +Z toward the user.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GazeError, YawUndefinedError
from .eye_model import EyeParams, EyeState
from .geometry import (
    PinholeCamera,
    _has_collinear_triple,
    pixel_pitch_from_fov,
    project,
    reflect_on_sphere,
    refract_entry_point,
    vec3,
)

DEFAULT_EYE_POSITION = (0.0, 200.0, 600.0)
LED_ORDER = ("TL", "TR", "BR", "BL")
INVALID_REASONS = ("out_of_fov", "behind_camera", "no_reflection", "no_refraction", "degenerate")


@dataclass(frozen=True)
class Screen:
    """24-inch 16:10 monitor with an LED at each corner."""

    width: float = 517.0
    height: float = 323.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("screen dimensions must be positive")

    @property
    def led_positions(self) -> np.ndarray:
        """(4, 3) LED positions in TL, TR, BR, BL order."""
        hw = self.width / 2.0
        return np.array(
            [
                [-hw, self.height, 0.0],
                [hw, self.height, 0.0],
                [hw, 0.0, 0.0],
                [-hw, 0.0, 0.0],
            ]
        )

    @property
    def led_xy(self) -> np.ndarray:
        return self.led_positions[:, :2]

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, self.height / 2.0, 0.0])

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax)."""
        hw = self.width / 2.0
        return (-hw, hw, 0.0, self.height)

    def contains(self, xy) -> bool:
        xmin, xmax, ymin, ymax = self.bounds
        return bool(xmin <= xy[0] <= xmax and ymin <= xy[1] <= ymax)

    def clamp(self, xy):
        xmin, xmax, ymin, ymax = self.bounds
        xy = np.asarray(xy, dtype=float)
        return np.stack(
            [np.clip(xy[..., 0], xmin, xmax), np.clip(xy[..., 1], ymin, ymax)], axis=-1
        )


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics shared by all cameras of a rig."""

    focal_length: float = 8.0
    resolution: tuple[int, int] = (1280, 1024)
    diagonal_fov: float = 58.0

    @property
    def pixel_pitch(self) -> float:
        return pixel_pitch_from_fov(self.focal_length, self.resolution, self.diagonal_fov)

    def at(self, position, aim) -> PinholeCamera:
        return PinholeCamera.look_at(
            position,
            aim,
            focal_length=self.focal_length,
            pixel_pitch=self.pixel_pitch,
            resolution=tuple(self.resolution),
        )


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple[PinholeCamera, ...]
    layout_case: str
    positions: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise ValueError("a rig needs at least one camera")
        if self.positions is None:
            object.__setattr__(
                self, "positions", np.array([cam.center for cam in self.cameras])
            )

    @property
    def count(self) -> int:
        return len(self.cameras)


def _perimeter_point(screen: Screen, standoff: float, s: float) -> np.ndarray:
    """Point at arc length ``s`` along the standoff rectangle, starting at the
    bottom-center and running counter-clockwise as seen by the user
    (bottom edge toward +X first)."""
    hw = screen.width / 2.0 + standoff
    y0, y1 = -standoff, screen.height + standoff
    h = y1 - y0
    perimeter = 4.0 * hw + 2.0 * h
    s = s % perimeter
    legs = [
        (hw, lambda t: (t, y0)),  # bottom, center -> right corner
        (h, lambda t: (hw, y0 + t)),  # right side, upward
        (2 * hw, lambda t: (hw - t, y1)),  # top, right -> left
        (h, lambda t: (-hw, y1 - t)),  # left side, downward
        (hw, lambda t: (-hw + t, y0)),  # bottom, left corner -> center
    ]
    for length, point in legs:
        if s <= length:
            x, y = point(s)
            return np.array([x, y, 0.0])
        s -= length
    return np.array([0.0, y0, 0.0])


def rig_positions(layout_case: str, count: int, screen: Screen, standoff=50.0, spacing=50.0):
    """Camera centers (count, 3) for a layout; see :func:`generate_rig`."""
    if count < 1:
        raise ValueError("camera count must be >= 1")
    if layout_case == "case0":
        xs = (np.arange(count) - (count - 1) / 2.0) * spacing
        return np.column_stack([xs, np.full(count, -standoff), np.zeros(count)])
    if layout_case != "case1":
        raise ValueError(f"unknown layout case {layout_case!r}")
    if count == 3:
        hw = screen.width / 2.0 + standoff
        mid = screen.height / 2.0
        return np.array([[0.0, -standoff, 0.0], [-hw, mid, 0.0], [hw, mid, 0.0]])
    hw = screen.width / 2.0 + standoff
    perimeter = 4.0 * hw + 2.0 * (screen.height + 2.0 * standoff)
    return np.array(
        [_perimeter_point(screen, standoff, i * perimeter / count) for i in range(count)]
    )


def generate_rig(
    layout_case: str,
    count: int,
    screen: Screen | None = None,
    standoff: float = 50.0,
    spacing: float = 50.0,
    aim=DEFAULT_EYE_POSITION,
    camera_model: CameraModel | None = None,
) -> CameraRig:
    """Build a case0 (clustered row under the screen) or case1 (around the
    screen border) rig, every camera aimed at ``aim``.

    case1 with three cameras reproduces the bottom/left/right prototype;
    other counts are spread evenly along the border rectangle offset by
    ``standoff``, starting at the bottom-center.
    """
    screen = screen or Screen()
    camera_model = camera_model or CameraModel()
    positions = rig_positions(layout_case, count, screen, standoff, spacing)
    cams = tuple(camera_model.at(p, aim) for p in positions)
    return CameraRig(cameras=cams, layout_case=layout_case, positions=positions)


@dataclass(frozen=True)
class FeatureSet:
    """Glints (4, 2) in LED order, pupil (2,), all in pixels."""

    glints: np.ndarray
    pupil: np.ndarray
    valid: bool = True
    invalid_reason: str | None = None

    @classmethod
    def invalid(cls, reason: str) -> "FeatureSet":
        return cls(np.full((4, 2), np.nan), np.full(2, np.nan), False, reason)

    def points(self) -> np.ndarray:
        """(5, 2) stack: four glints then the pupil."""
        return np.vstack([self.glints, self.pupil[None, :]])


_REASON_MAP = {"behind": "behind_camera", "degenerate": "degenerate"}


def synthesize_features(
    screen: Screen, eye_state: EyeState, params: EyeParams, camera: PinholeCamera
) -> FeatureSet:
    """Noise-free glint and pupil pixels of one eye seen by one camera."""
    cam_center = camera.center
    c = eye_state.cornea_center
    r = params.cornea_radius
    try:
        pts3d = [reflect_on_sphere(c, r, led, cam_center) for led in screen.led_positions]
        pts3d.append(
            refract_entry_point(c, r, cam_center, eye_state.pupil_center, 1.0, params.n_cornea)
        )
        pix = []
        for p in pts3d:
            pix.append(project(camera, p))
    except GazeError as exc:
        return FeatureSet.invalid(_REASON_MAP.get(exc.reason, exc.reason))
    pix = np.array(pix)
    if not all(camera.in_bounds(p) for p in pix):
        return FeatureSet.invalid("out_of_fov")
    glints = pix[:4]
    if _has_collinear_triple(glints) or _quad_area(glints) <= 1.0:
        return FeatureSet.invalid("degenerate")
    return FeatureSet(glints=glints, pupil=pix[4], valid=True)


def _quad_area(q) -> float:
    x, y = q[:, 0], q[:, 1]
    return 0.5 * abs(float(x @ np.roll(y, -1) - y @ np.roll(x, -1)))


def inject_noise(features: FeatureSet, level: float, rng: np.random.Generator) -> FeatureSet:
    """Add independent uniform [-level, level] noise to every coordinate.

    Level 0 returns the input untouched and consumes no random numbers.
    """
    if level < 0:
        raise ValueError("noise level must be non-negative")
    if level == 0:
        return features
    delta = rng.uniform(-level, level, size=(5, 2))
    return replace(
        features, glints=features.glints + delta[:4], pupil=features.pupil + delta[4]
    )


def head_yaw_wrt_camera(head_forward, eye_pos, camera) -> float:
    """Unsigned horizontal angle (degrees) between the head direction and the
    direction from the eye to the camera, both projected on the XZ plane."""
    center = camera.center if isinstance(camera, PinholeCamera) else vec3(camera)
    to_cam = center - vec3(eye_pos)
    if np.linalg.norm(to_cam) < 1e-12:
        raise ValueError("camera coincides with the eye")
    hf = np.asarray(head_forward, dtype=float)
    a = np.array([hf[0], hf[2]])
    b = np.array([to_cam[0], to_cam[2]])
    if np.linalg.norm(a) < 1e-12 or np.linalg.norm(b) < 1e-12:
        raise YawUndefinedError("no horizontal component")
    cross = a[0] * b[1] - a[1] * b[0]
    return math.degrees(abs(math.atan2(cross, a @ b)))
