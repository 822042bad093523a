"""Elementary geometry: pinhole projection, corneal reflection/refraction
solvers and exact four-point homographies.

Conventions: world units are millimeters, image units are pixels with the
origin at the top-left corner, +x right and +y down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    NoReflectionError,
    NoRefractionError,
    PointAtInfinityError,
    ProjectionError,
)

ANGLE_TOL = 1e-13  # bisection stops once the bracket is narrower than this (rad)
_REFRACTION_SCAN = 64  # coarse samples before bisecting the first sign change


def vec3(x, y=None, z=None) -> np.ndarray:
    """Build a finite float64 3-vector from components or a sequence."""
    v = np.asarray([x, y, z] if y is not None else x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def pixel_pitch_from_fov(focal_length, resolution, diagonal_fov_deg) -> float:
    """Pixel pitch (micrometers) giving the requested diagonal field of view."""
    w, h = resolution
    sensor_diag = 2.0 * focal_length * math.tan(math.radians(diagonal_fov_deg) / 2.0)
    return 1000.0 * sensor_diag / math.hypot(w, h)


@dataclass(frozen=True)
class PinholeCamera:
    """Ideal pinhole camera.

    ``rotation`` and ``translation`` map world to camera coordinates:
    ``x_cam = rotation @ x_world + translation``. The camera looks along its
    +z axis; image x follows camera +x and image y follows camera +y.
    """

    rotation: np.ndarray
    translation: np.ndarray
    focal_length: float = 8.0  # mm
    pixel_pitch: float = 5.411  # micrometers / pixel
    resolution: tuple[int, int] = (1280, 1024)
    principal_point: tuple[float, float] | None = None
    center: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float).reshape(3, 3)
        trans = np.array(self.translation, dtype=float).reshape(3)
        if self.focal_length <= 0 or self.pixel_pitch <= 0:
            raise ValueError("focal length and pixel pitch must be positive")
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9, rtol=0.0):
            raise ValueError("rotation is not orthonormal")
        w, h = self.resolution
        pp = self.principal_point
        if pp is None:
            pp = (w / 2.0, h / 2.0)
        if not (0.0 <= pp[0] <= w and 0.0 <= pp[1] <= h):
            raise ValueError("principal point outside the sensor")
        rot.flags.writeable = False
        trans.flags.writeable = False
        center = -rot.T @ trans
        center.flags.writeable = False
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)
        object.__setattr__(self, "principal_point", (float(pp[0]), float(pp[1])))
        object.__setattr__(self, "center", center)

    @classmethod
    def look_at(cls, position, target, up=(0.0, 1.0, 0.0), **kwargs) -> "PinholeCamera":
        """Camera at ``position`` whose optical axis passes through ``target``.

        Image "up" (-y) is aligned with the projection of ``up`` on the image
        plane, so there is no roll.
        """
        position = vec3(position)
        forward = normalize(vec3(target) - position)
        right = np.cross(forward, vec3(up))
        if np.linalg.norm(right) < 1e-12:
            raise ValueError("viewing direction parallel to the up vector")
        right = normalize(right)
        down = np.cross(forward, right)
        rot = np.vstack([right, down, forward])
        return cls(rotation=rot, translation=-rot @ position, **kwargs)

    @property
    def optical_axis(self) -> np.ndarray:
        return self.rotation[2].copy()

    @property
    def focal_px(self) -> float:
        return self.focal_length / (self.pixel_pitch * 1e-3)

    def in_bounds(self, pixel) -> bool:
        w, h = self.resolution
        return bool(0.0 <= pixel[0] <= w and 0.0 <= pixel[1] <= h)


def project(camera: PinholeCamera, point) -> np.ndarray:
    """Project a world point to pixel coordinates.

    The result may fall outside the sensor; callers check bounds.

    Raises:
        ProjectionError: ``reason='behind'`` when the point is not strictly in
            front of the camera, ``reason='degenerate'`` at the optical center.
    """
    p = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("point must be finite")
    pc = camera.rotation @ p + camera.translation
    if np.all(np.abs(pc) < 1e-12):
        raise ProjectionError("point at optical center", reason="degenerate")
    if pc[2] <= 0.0:
        raise ProjectionError("point behind camera", reason="behind")
    f = camera.focal_px
    cx, cy = camera.principal_point
    return np.array([cx + f * pc[0] / pc[2], cy + f * pc[1] / pc[2]])


def _bisect(fn, lo, hi, f_lo, tol=ANGLE_TOL):
    # f_lo and f(hi) must have opposite signs
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _plane_basis(axis_point, other_point):
    """Orthonormal (u, v) with u along ``axis_point`` and v toward
    ``other_point`` inside their common plane; returns (u, v, angle, |other|).

    v is None when the two directions are (anti)parallel.
    """
    d_axis = np.linalg.norm(axis_point)
    u = axis_point / d_axis
    along = float(other_point @ u)
    perp = other_point - along * u
    perp_len = float(np.linalg.norm(perp))
    d_other = float(np.linalg.norm(other_point))
    if perp_len <= 1e-12 * max(d_other, 1.0):
        return u, None, (0.0 if along >= 0 else math.pi), d_other
    return u, perp / perp_len, math.atan2(perp_len, along), d_other


def reflect_on_sphere(center, radius, light, observer) -> np.ndarray:
    """Specular reflection point on a sphere for a light source and viewer.

    Solved in the plane through center, light and observer by bisection on
    the surface angle measured from the light direction.

    Raises:
        NoReflectionError: the light and the observer cannot both see any
            surface point satisfying the law of reflection.
    """
    c = vec3(center)
    lv = vec3(light) - c
    ov = vec3(observer) - c
    r = float(radius)
    d_light = float(np.linalg.norm(lv))
    if d_light <= r or np.linalg.norm(ov) <= r:
        raise ValueError("light and observer must lie outside the sphere")

    u, v, phi, d_obs = _plane_basis(lv, ov)
    if v is None:
        if phi == 0.0:
            return c + r * u
        raise NoReflectionError("light and observer on opposite sides")

    ox, oy = d_obs * math.cos(phi), d_obs * math.sin(phi)

    def residual(theta):
        nx, ny = math.cos(theta), math.sin(theta)
        qx, qy = r * nx, r * ny
        ax, ay = d_light - qx, -qy
        bx, by = ox - qx, oy - qy
        ang_light = math.atan2(nx * ay - ny * ax, nx * ax + ny * ay)
        ang_obs = math.atan2(nx * by - ny * bx, nx * bx + ny * by)
        return ang_light + ang_obs

    theta = _bisect(residual, 0.0, phi, residual(0.0))
    n2 = (math.cos(theta), math.sin(theta))
    q2 = (r * n2[0], r * n2[1])
    if (
        n2[0] * (d_light - q2[0]) + n2[1] * (-q2[1]) <= 0.0
        or n2[0] * (ox - q2[0]) + n2[1] * (oy - q2[1]) <= 0.0
    ):
        raise NoReflectionError("reflection point not visible from light and observer")
    return c + r * (n2[0] * u + n2[1] * v)


def reflection_residual(center, radius, light, observer, q) -> float:
    """|angle(light - q, n) - angle(observer - q, n)| in radians."""
    n = normalize(np.asarray(q, float) - np.asarray(center, float))
    a = normalize(np.asarray(light, float) - q)
    b = normalize(np.asarray(observer, float) - q)
    ang_a = math.atan2(np.linalg.norm(np.cross(n, a)), n @ a)
    ang_b = math.atan2(np.linalg.norm(np.cross(n, b)), n @ b)
    return abs(ang_a - ang_b)


def refract_entry_point(center, radius, observer, interior, n_outside, n_inside) -> np.ndarray:
    """Point on a sphere where the observer's ray refracts toward ``interior``.

    Raises:
        NoRefractionError: no visible surface point satisfies Snell's law
            (e.g. total internal reflection geometry).
    """
    if n_outside <= 0 or n_inside <= 0:
        raise ValueError("refractive indices must be positive")
    c = vec3(center)
    ov = vec3(observer) - c
    pv = vec3(interior) - c
    r = float(radius)
    d_obs = float(np.linalg.norm(ov))
    if d_obs <= r:
        raise ValueError("observer must lie outside the sphere")
    if np.linalg.norm(pv) >= r:
        raise ValueError("interior point must lie strictly inside the sphere")

    u, v, psi, d_int = _plane_basis(ov, pv)
    if v is None:
        # the interior point is on the observer's radial line: normal incidence
        return c + r * u

    px, py = d_int * math.cos(psi), d_int * math.sin(psi)

    def residual(theta):
        nx, ny = math.cos(theta), math.sin(theta)
        tx, ty = -ny, nx
        qx, qy = r * nx, r * ny
        ix, iy = qx - d_obs, qy
        jx, jy = px - qx, py - qy
        li = math.hypot(ix, iy)
        lj = math.hypot(jx, jy)
        return n_outside * (ix * tx + iy * ty) / li - n_inside * (jx * tx + jy * ty) / lj

    theta_visible = math.acos(r / d_obs)
    hi = min(psi, theta_visible * (1.0 - 1e-12))
    # the residual can change sign twice when the interior point lies behind
    # the center; take the first crossing from the observer axis
    f_lo = residual(0.0)
    if f_lo == 0.0:
        return c + r * u
    lo = 0.0
    for k in range(1, _REFRACTION_SCAN + 1):
        t = hi * k / _REFRACTION_SCAN
        f_t = residual(t)
        if (f_t > 0.0) != (f_lo > 0.0):
            theta = _bisect(residual, lo, t, f_lo)
            return c + r * (math.cos(theta) * u + math.sin(theta) * v)
        lo, f_lo = t, f_t
    raise NoRefractionError("no visible refraction point")


def snell_residual(center, radius, observer, interior, n_outside, n_inside, q) -> float:
    """|n_out sin(theta_i) - n_in sin(theta_t)| with signed in-plane sines.

    Signed sines catch rays bent to the wrong side of the normal, which the
    unsigned Snell relation would accept.
    """
    q = np.asarray(q, float)
    n = normalize(q - np.asarray(center, float))
    d_in = normalize(q - np.asarray(observer, float))
    d_t = normalize(np.asarray(interior, float) - q)
    tangent = d_in - (d_in @ n) * n
    t_len = np.linalg.norm(tangent)
    if t_len < 1e-15:
        # normal incidence: transmitted ray must also be along the normal
        return float(n_inside * np.linalg.norm(d_t - (d_t @ n) * n))
    tangent /= t_len
    coplanar = abs(np.cross(n, tangent) @ d_t)
    return float(abs(n_outside * (d_in @ tangent) - n_inside * (d_t @ tangent)) + coplanar)


def segment_sphere_entry(center, radius, outside, inside) -> np.ndarray:
    """First intersection of the segment outside->inside with the sphere."""
    c = vec3(center)
    o = vec3(outside) - c
    d = vec3(inside) - vec3(outside)
    a = d @ d
    b = 2.0 * (o @ d)
    cc = o @ o - radius * radius
    disc = b * b - 4.0 * a * cc
    t = (-b - math.sqrt(disc)) / (2.0 * a)
    return c + o + t * d


@dataclass(frozen=True)
class Homography:
    """Planar projective map stored as a 3x3 matrix with H[2, 2] == 1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float).reshape(3, 3)
        if abs(m[2, 2]) > 1e-15:
            m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise DegenerateConfigurationError("singular homography")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))


def _has_collinear_triple(pts, rel_tol=1e-9) -> bool:
    scale = max(float(np.ptp(pts[:, 0])), float(np.ptp(pts[:, 1])), 1e-300)
    for i in range(4):
        a, b, c = (pts[j] for j in range(4) if j != i)
        area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(area2) <= rel_tol * scale * scale:
            return True
    return False


def homography_system(src, dst):
    """The 8x8 system A h = b for the entries of H (with H[2, 2] = 1)."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, w)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -w * x, -w * y]
        b[2 * i] = u
        b[2 * i + 1] = w
    return a, b


def homography_from_correspondences(src, dst) -> Homography:
    """Exact homography mapping four source points onto four destination points.

    Raises:
        DegenerateConfigurationError: three points of either quad are collinear.
    """
    src = np.asarray(src, dtype=float).reshape(4, 2)
    dst = np.asarray(dst, dtype=float).reshape(4, 2)
    if _has_collinear_triple(src) or _has_collinear_triple(dst):
        raise DegenerateConfigurationError("three collinear points")
    a, b = homography_system(src, dst)
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfigurationError(str(exc)) from exc
    return Homography(np.append(h, 1.0).reshape(3, 3))


def homography_apply(h: Homography, p) -> np.ndarray:
    m = h.matrix if isinstance(h, Homography) else np.asarray(h, float)
    x, y = np.asarray(p, dtype=float).reshape(2)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("point must be finite")
    hx, hy, hw = m @ np.array([x, y, 1.0])
    if abs(hw) < 1e-12:
        raise PointAtInfinityError("point maps to infinity")
    return np.array([hx / hw, hy / hw])


def homographies_batch(src, dst):
    """Vectorized four-point homographies.

    Args:
        src: (N, 4, 2) source quads.
        dst: (4, 2) destination quad shared by every item, or (N, 4, 2).

    Returns:
        (H, ok): (N, 3, 3) matrices and a boolean mask; rows whose system is
        singular or badly conditioned have ok=False and an identity matrix.
    """
    src = np.asarray(src, dtype=float)
    n = src.shape[0]
    dst = np.broadcast_to(np.asarray(dst, dtype=float), (n, 4, 2))
    x, y = src[..., 0], src[..., 1]
    u, w = dst[..., 0], dst[..., 1]
    zero = np.zeros_like(x)
    one = np.ones_like(x)
    rows_u = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y], axis=-1)
    rows_w = np.stack([zero, zero, zero, x, y, one, -w * x, -w * y], axis=-1)
    a = np.stack([rows_u, rows_w], axis=2).reshape(n, 8, 8)
    b = np.stack([u, w], axis=2).reshape(n, 8)

    # reject collinear glint triples before solving
    ok = np.ones(n, dtype=bool)
    scale = np.maximum(np.ptp(src[..., 0], axis=1), np.ptp(src[..., 1], axis=1))
    for i in range(4):
        idx = [j for j in range(4) if j != i]
        p0, p1, p2 = src[:, idx[0]], src[:, idx[1]], src[:, idx[2]]
        area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (
            p2[:, 0] - p0[:, 0]
        )
        ok &= np.abs(area2) > 1e-9 * scale * scale
    a[~ok] = np.eye(8)
    b[~ok] = np.array([1.0, 0, 0, 0, 1.0, 0, 0, 0])
    h = np.linalg.solve(a, b[..., None])[..., 0]
    ok &= np.all(np.isfinite(h), axis=1)
    h[~ok] = np.array([1.0, 0, 0, 0, 1.0, 0, 0, 0])
    return np.concatenate([h, np.ones((n, 1))], axis=1).reshape(n, 3, 3), ok


def homography_apply_batch(h, points):
    """Apply (N, 3, 3) homographies to (N, 2) points; returns (points, ok)."""
    p = np.asarray(points, dtype=float)
    ph = np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)
    q = np.einsum("nij,nj->ni", h, ph)
    ok = np.abs(q[:, 2]) >= 1e-12
    wq = np.where(ok, q[:, 2], 1.0)
    return q[:, :2] / wq[:, None], ok
