"""Quick randomized self-check of solvers, calibration and fusion.

Runs in a few seconds; each check prints one PASS/FAIL line.
"""

from __future__ import annotations

import numpy as np

from . import oracles
from .calibration import fit_bias_correction_arrays
from .errors import NoReflectionError, NoRefractionError
from .estimator import SensorId
from .fusion import SensorOutput, fuse_head_pose, fuse_simple, pose_lambda
from .geometry import homography_apply, homography_from_correspondences, reflect_on_sphere, refract_entry_point


def _check_reflection(rng, n):
    worst = 0.0
    for c, r, light, obs in oracles.random_reflection_configs(rng, n):
        try:
            q = reflect_on_sphere(c, r, light, obs)
        except NoReflectionError:
            continue
        worst = max(worst, float(np.linalg.norm(q - oracles.reflection_oracle(c, r, light, obs))))
    return worst < 1e-4, f"max deviation {worst:.2e} mm"


def _check_refraction(rng, n):
    worst = 0.0
    mismatched = 0
    for c, r, obs, p, n1, n2 in oracles.random_refraction_configs(rng, n):
        ref = oracles.refraction_oracle(c, r, obs, p, n1, n2)
        try:
            q = refract_entry_point(c, r, obs, p, n1, n2)
        except NoRefractionError:
            mismatched += ref is not None
            continue
        if ref is None:
            mismatched += 1
            continue
        worst = max(worst, float(np.linalg.norm(q - ref)))
    return worst < 1e-4 and mismatched == 0, f"max deviation {worst:.2e} mm, {mismatched} mismatched"


def _check_homography(rng, n):
    worst = 0.0
    for _ in range(n):
        src = rng.uniform(-1, 1, (4, 2)) + np.array([[-2, -2], [2, -2], [2, 2], [-2, 2]])
        dst = rng.uniform(-1, 1, (4, 2)) + np.array([[-3, -2], [3, -2], [3, 2], [-3, 2]])
        h = homography_from_correspondences(src, dst)
        ref = oracles.homography_oracle(src, dst)
        worst = max(worst, float(np.max(np.abs(h.matrix - ref))))
        for s, d in zip(src, dst):
            worst = max(worst, float(np.max(np.abs(homography_apply(h, s) - d))))
    return worst < 1e-9, f"max deviation {worst:.2e}"


def _check_calibration(rng, n):
    worst = 0.0
    for _ in range(n):
        targets = rng.uniform(0, 500, (9, 2))
        raw = targets @ rng.normal(1, 0.1, (2, 2)) + rng.normal(0, 5, (9, 2))
        model = fit_bias_correction_arrays(raw, targets, ridge=0.0)
        ref = oracles.lstsq_oracle(raw, targets)(raw)
        worst = max(worst, float(np.max(np.abs(model(raw) - ref)) / np.max(np.abs(ref))))
    return worst < 1e-9, f"max relative deviation {worst:.2e}"


def _check_fusion(rng, n):
    ok = np.allclose(pose_lambda(np.array([0.0, 45.0, 15.0, 30.0])), [1, 0, 2 / 3, 1 / 3], atol=1e-12, rtol=0)
    for _ in range(n):
        pts = rng.uniform(0, 500, (4, 2))
        yaws = rng.uniform(0, 60, 4)
        outs = [SensorOutput(SensorId(i, "L"), p, True, y) for i, (p, y) in enumerate(zip(pts, yaws))]
        for fused in (fuse_simple(outs), fuse_head_pose(outs)):
            ok &= abs(sum(fused.weights.values()) - 1.0) < 1e-12
            ok &= bool(np.all(fused.por >= pts.min(0) - 1e-9) and np.all(fused.por <= pts.max(0) + 1e-9))
        single = fuse_simple(outs[:1])
        ok &= bool(np.array_equal(single.por, pts[0]))
    return bool(ok), "weights, hull, identity and pose weights"


CHECKS = (
    ("reflection vs oracle", _check_reflection, 100),
    ("refraction vs oracle", _check_refraction, 100),
    ("homography vs oracle", _check_homography, 200),
    ("calibration vs least squares", _check_calibration, 50),
    ("fusion properties", _check_fusion, 200),
)


def run_selftest(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn, n in CHECKS:
        ok, detail = fn(rng, n)
        all_ok &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
