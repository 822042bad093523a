"""Cross-ratio point-of-regard estimation.

The projective equivalence between the LED rectangle, its corneal glints and
the image lets the pupil pixel be transferred to the screen with the
glint -> LED homography.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UnavailableError
from .geometry import (
    homographies_batch,
    homography_apply,
    homography_apply_batch,
    homography_from_correspondences,
)
from .scene import FeatureSet, Screen


@dataclass(frozen=True)
class SensorId:
    camera: int  # 1-based
    eye: str  # "L" or "R"

    def __str__(self):
        return f"c{self.camera}{self.eye}"


@dataclass(frozen=True)
class RawGaze:
    por: np.ndarray  # screen (X, Y), mm
    sensor: SensorId | None = None


def estimate_raw_por(features: FeatureSet, screen: Screen, sensor: SensorId | None = None) -> RawGaze:
    """Map the pupil pixel to the screen through the glint -> LED homography.

    Raises:
        UnavailableError: the feature set is invalid.
        DegenerateConfigurationError: the glint quad has a collinear triple.
    """
    if not features.valid:
        raise UnavailableError(f"invalid features ({features.invalid_reason})")
    # shifting every image point by the glint centroid is absorbed by H and
    # keeps the linear system well conditioned
    origin = features.glints.mean(axis=0)
    h = homography_from_correspondences(features.glints - origin, screen.led_xy)
    return RawGaze(por=homography_apply(h, features.pupil - origin), sensor=sensor)


def estimate_raw_por_batch(glints, pupils, led_xy):
    """Vectorized :func:`estimate_raw_por`.

    Args:
        glints: (N, 4, 2) glint pixels.
        pupils: (N, 2) pupil pixels.
        led_xy: (4, 2) LED screen coordinates.

    Returns:
        (por, ok) with por of shape (N, 2); ok is False where the glint quad is
        degenerate or the pupil maps to infinity.
    """
    glints = np.asarray(glints, dtype=float)
    pupils = np.asarray(pupils, dtype=float)
    if glints.shape[0] == 0:
        return np.zeros((0, 2)), np.zeros(0, dtype=bool)
    origin = glints.mean(axis=1)
    h, ok = homographies_batch(glints - origin[:, None, :], led_xy)
    por, ok_apply = homography_apply_batch(h, pupils - origin)
    ok &= ok_apply
    por[~ok] = np.nan
    return por, ok
