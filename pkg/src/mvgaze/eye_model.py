"""Spherical-cornea eye model with visual/optical axis offset."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .errors import GimbalDegenerateError
from .geometry import normalize, vec3

WORLD_UP = np.array([0.0, 1.0, 0.0])


class HeadMode(str, Enum):
    FOLLOW_TARGET = "follow-target"
    FACE_SCREEN = "face-screen"


@dataclass(frozen=True)
class EyeParams:
    """Person-specific eye constants.

    Defaults are the usual textbook values for a spherical-cornea model.
    ``alpha`` is the horizontal and ``beta`` the vertical angle (degrees)
    between the visual and the optical axis.
    """

    cornea_radius: float = 7.8
    cornea_to_pupil: float = 4.2
    alpha: float = 5.0
    beta: float = 1.5
    n_cornea: float = 1.3375
    eye_side: str = "R"

    def __post_init__(self):
        if self.cornea_radius <= 0:
            raise ValueError("cornea_radius must be positive")
        if not 0 < self.cornea_to_pupil < self.cornea_radius:
            raise ValueError("cornea_to_pupil must lie in (0, cornea_radius)")
        if abs(self.alpha) >= 15 or abs(self.beta) >= 15:
            raise ValueError("|alpha| and |beta| must be below 15 degrees")
        if self.n_cornea <= 1:
            raise ValueError("n_cornea must exceed 1")
        if self.eye_side not in ("L", "R"):
            raise ValueError("eye_side must be 'L' or 'R'")

    def mirrored(self) -> "EyeParams":
        """Same parameters for the other eye (alpha sign handled by eye_side)."""
        return replace(self, eye_side="L" if self.eye_side == "R" else "R")


@dataclass(frozen=True)
class EyeState:
    cornea_center: np.ndarray
    optical_axis: np.ndarray
    visual_axis: np.ndarray
    pupil_center: np.ndarray
    head_forward: np.ndarray


def eye_frame(visual) -> tuple[np.ndarray, np.ndarray]:
    """(side, up) axes of the eye-local frame whose forward is ``visual``.

    ``up`` is world +Y made orthogonal to ``visual``; ``side`` = visual x up,
    which is world +X for an eye looking down -Z.
    """
    v = np.asarray(visual, dtype=float)
    up = WORLD_UP - (WORLD_UP @ v) * v
    if np.linalg.norm(up) < 1e-9:
        raise GimbalDegenerateError("visual axis parallel to world up")
    up = normalize(up)
    return np.cross(v, up), up


def optical_from_visual(visual, alpha, beta, eye_side="R") -> np.ndarray:
    """Rotate the visual axis by the kappa offsets to get the optical axis.

    Yaw by ``alpha`` toward +side for the right eye (mirrored for the left),
    then pitch by ``beta`` toward +up.
    """
    v = normalize(visual)
    side, up = eye_frame(v)
    a = math.radians(alpha if eye_side == "R" else -alpha)
    b = math.radians(beta)
    yawed = math.cos(a) * v + math.sin(a) * side
    return normalize(math.cos(b) * yawed + math.sin(b) * up)


def build_eye_state(
    params: EyeParams,
    cornea_center,
    target,
    head_mode=HeadMode.FOLLOW_TARGET,
    screen_center=(0.0, 161.5, 0.0),
) -> EyeState:
    """Eye geometry for a given cornea position fixating ``target``."""
    c = vec3(cornea_center)
    t = vec3(target)
    if np.linalg.norm(t - c) < 1e-12:
        raise ValueError("target coincides with the cornea center")
    visual = normalize(t - c)
    optical = optical_from_visual(visual, params.alpha, params.beta, params.eye_side)
    if HeadMode(head_mode) is HeadMode.FOLLOW_TARGET:
        head_forward = visual
    else:
        head_forward = normalize(vec3(screen_center) - c)
    return EyeState(
        cornea_center=c,
        optical_axis=optical,
        visual_axis=visual,
        pupil_center=c + params.cornea_to_pupil * optical,
        head_forward=head_forward,
    )
