"""Fusion of per-sensor calibrated gaze outputs into one point of regard.

Two flavours of every fuser live here: a per-frame one working on
:class:`SensorOutput` lists, and an array version used by the experiment
runner (sensors on axis 0, any number of frame axes after it).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .calibration import WeightMap
from .estimator import SensorId
from .scene import Screen


class FusionMethod(str, Enum):
    SIMPLE = "simple"
    HEAD_POSE = "head_pose"
    BEHAVIOR = "behavior"
    BEST_CAMERA = "best_camera"


@dataclass(frozen=True)
class SensorOutput:
    sensor: SensorId
    por: np.ndarray
    available: bool = True
    head_yaw: float = 0.0  # degrees, relative to this sensor's camera


@dataclass(frozen=True)
class FusedGaze:
    por: np.ndarray | None
    available: bool
    weights: dict = field(default_factory=dict)


def _combine(outputs, raw_weights) -> FusedGaze:
    weights = {}
    total = 0.0
    for o, w in zip(outputs, raw_weights):
        w = float(w) if o.available else 0.0
        weights[o.sensor] = w
        total += w
    if total <= 0.0:
        return FusedGaze(None, False, {o.sensor: 0.0 for o in outputs})
    weights = {k: v / total for k, v in weights.items()}
    por = np.zeros(2)
    for o in outputs:
        if weights[o.sensor] > 0.0:
            por += weights[o.sensor] * np.asarray(o.por, dtype=float)
    return FusedGaze(por, True, weights)


def fuse_simple(outputs) -> FusedGaze:
    """Unweighted mean of the available outputs."""
    outputs = list(outputs)
    avail = [o for o in outputs if o.available]
    if len(avail) == 1:
        # verbatim: avoid 1.0 * por round-trips
        only = avail[0]
        return FusedGaze(
            np.asarray(only.por, dtype=float).copy(),
            True,
            {o.sensor: (1.0 if o is only else 0.0) for o in outputs},
        )
    return _combine(outputs, [1.0] * len(outputs))


def pose_lambda(yaw_deg, alpha_max=45.0):
    """(alpha_max - |yaw|) / alpha_max, clamped to [0, 1]."""
    return np.clip((alpha_max - np.abs(yaw_deg)) / alpha_max, 0.0, 1.0)


def fuse_head_pose(outputs, alpha_max=45.0) -> FusedGaze:
    """Weights proportional to the frontality of the head to each camera.

    Both eyes seen by a camera share its yaw, hence its weight. Falls back to
    simple averaging when every available sensor has zero weight.
    """
    if alpha_max <= 0:
        raise ValueError("alpha_max must be positive")
    outputs = list(outputs)
    lam = [float(pose_lambda(o.head_yaw, alpha_max)) for o in outputs]
    if sum(l for o, l in zip(outputs, lam) if o.available) <= 0.0:
        return fuse_simple(outputs)
    avail = [o for o in outputs if o.available]
    if len(avail) == 1:
        return fuse_simple(outputs)
    return _combine(outputs, lam)


def fuse_behavior(outputs, maps: WeightMap, screen: Screen | None = None) -> FusedGaze:
    """Weight-map fusion looked up at the simple-average anchor."""
    outputs = list(outputs)
    anchor = fuse_simple(outputs)
    if not anchor.available:
        return anchor
    avail = [o for o in outputs if o.available]
    if len(avail) == 1:
        return anchor
    screen = screen or Screen()
    looked_up = maps.lookup(screen.clamp(anchor.por))
    raw = [looked_up[maps.sensors.index(str(o.sensor))] for o in outputs]
    if sum(w for o, w in zip(outputs, raw) if o.available) <= 0.0:
        return anchor
    return _combine(outputs, raw)


def fuse_best_camera(outputs, alpha_max=45.0) -> FusedGaze:
    """Average of the available eyes of the most frontal camera."""
    outputs = list(outputs)
    best = None
    for o in outputs:
        if not o.available:
            continue
        lam = float(pose_lambda(o.head_yaw, alpha_max))
        if best is None or lam > best[0] or (lam == best[0] and o.sensor.camera < best[1]):
            best = (lam, o.sensor.camera)
    if best is None:
        return FusedGaze(None, False, {o.sensor: 0.0 for o in outputs})
    return fuse_simple(
        [o if o.sensor.camera == best[1] else _unavailable(o) for o in outputs]
    )


def _unavailable(o: SensorOutput) -> SensorOutput:
    return SensorOutput(o.sensor, o.por, False, o.head_yaw)


def fuse(outputs, method, maps=None, alpha_max=45.0, screen=None) -> FusedGaze:
    method = FusionMethod(method)
    if method is FusionMethod.SIMPLE:
        return fuse_simple(outputs)
    if method is FusionMethod.HEAD_POSE:
        return fuse_head_pose(outputs, alpha_max)
    if method is FusionMethod.BEHAVIOR:
        return fuse_behavior(outputs, maps, screen)
    return fuse_best_camera(outputs, alpha_max)


# -- array versions ---------------------------------------------------------


def _weighted(por, weights):
    """Normalize weights over axis 0 and average; returns (fused, available)."""
    total = weights.sum(axis=0)
    ok = total > 0
    w = weights / np.where(ok, total, 1.0)
    fused = np.einsum("s...,s...k->...k", w, np.nan_to_num(por))
    fused[~ok] = np.nan
    return fused, ok


def fuse_simple_batch(por, available):
    """por (S, ..., 2), available (S, ...) -> (fused (..., 2), ok (...))."""
    return _weighted(por, available.astype(float))


def fuse_head_pose_batch(por, available, yaw, alpha_max=45.0):
    """``yaw`` broadcastable to ``available``."""
    lam = np.broadcast_to(pose_lambda(yaw, alpha_max), available.shape)
    w = np.where(available, lam, 0.0)
    fused, ok = _weighted(por, w)
    simple, simple_ok = fuse_simple_batch(por, available)
    fallback = ~ok & simple_ok
    fused[fallback] = simple[fallback]
    return fused, ok | simple_ok


def fuse_behavior_batch(por, available, maps: WeightMap, screen: Screen):
    anchor, ok = fuse_simple_batch(por, available)
    safe = np.where(ok[..., None], anchor, 0.0)
    looked_up = maps.lookup(screen.clamp(safe))
    w = np.where(available, looked_up, 0.0)
    fused, wok = _weighted(por, w)
    fallback = ~wok & ok
    fused[fallback] = anchor[fallback]
    return fused, ok


def fuse_best_camera_batch(por, available, yaw, camera_index, alpha_max=45.0):
    """``camera_index`` (S,) maps sensors to cameras; ties go to the lowest camera."""
    lam = np.broadcast_to(pose_lambda(yaw, alpha_max), available.shape)
    cams = np.unique(camera_index)
    cam_lam = []
    cam_avail = []
    for c in cams:
        sel = camera_index == c
        cam_avail.append(available[sel].any(axis=0))
        cam_lam.append(np.where(available[sel], lam[sel], -1.0).max(axis=0))
    cam_avail = np.array(cam_avail)
    score = np.where(cam_avail, np.array(cam_lam), -1.0)
    best = cams[np.argmax(score, axis=0)]
    chosen = camera_index.reshape((-1,) + (1,) * (available.ndim - 1)) == best[None]
    return fuse_simple_batch(por, available & chosen)
