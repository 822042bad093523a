"""Brute-force reference solutions used to cross-check the fast solvers.

Each oracle follows a different route from the production code: surface
grid search instead of in-plane bisection, ray tracing with vector Snell
refraction instead of tangential matching, projective-basis composition
instead of the 8x8 system, QR instead of normal equations.
"""

from __future__ import annotations

import numpy as np


def _sphere_points(center, radius, theta, phi):
    st = np.sin(theta)
    return center + radius * np.stack(
        [st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1
    )


def _reflection_misfit(center, light, observer, q):
    """|unit bisector of (light - q, observer - q) - outward normal|;
    large where either source is below the local horizon."""
    n = (q - center) / np.linalg.norm(q - center, axis=-1, keepdims=True)
    a = light - q
    b = observer - q
    a = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b / np.linalg.norm(b, axis=-1, keepdims=True)
    h = a + b
    h = h / np.linalg.norm(h, axis=-1, keepdims=True)
    misfit = np.linalg.norm(h - n, axis=-1)
    hidden = (np.sum(a * n, axis=-1) <= 0) | (np.sum(b * n, axis=-1) <= 0)
    return np.where(hidden, 10.0 + misfit, misfit)


def reflection_oracle(center, radius, light, observer, coarse=100, zoom_steps=15, zoom_grid=21):
    """Grid search over the whole sphere, then repeated local zoomed grids.

    ``coarse**2`` initial samples; each zoom step shrinks the window by 4x.
    """
    center = np.asarray(center, float)
    light = np.asarray(light, float)
    observer = np.asarray(observer, float)
    theta = np.linspace(0.0, np.pi, coarse)
    phi = np.linspace(-np.pi, np.pi, 2 * coarse, endpoint=False)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    q = _sphere_points(center, radius, tt, pp)
    m = _reflection_misfit(center, light, observer, q)
    i, j = np.unravel_index(np.argmin(m), m.shape)
    best_t, best_p = tt[i, j], pp[i, j]
    # work in a rotated frame so the zoom never sits on a coordinate pole
    z = (_sphere_points(center, radius, best_t, best_p) - center) / radius
    x = np.cross(z, [1.0, 0.0, 0.0])
    if np.linalg.norm(x) < 0.5:
        x = np.cross(z, [0.0, 1.0, 0.0])
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    u0 = v0 = 0.0
    half = 2.0 * np.pi / coarse
    for _ in range(zoom_steps):
        us = np.linspace(u0 - half, u0 + half, zoom_grid)
        vs = np.linspace(v0 - half, v0 + half, zoom_grid)
        uu, vv = np.meshgrid(us, vs, indexing="ij")
        d = z + uu[..., None] * x + vv[..., None] * y
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        q = center + radius * d
        m = _reflection_misfit(center, light, observer, q)
        a, b = np.unravel_index(np.argmin(m), m.shape)
        u0, v0 = uu[a, b], vv[a, b]
        half /= 4.0
    d = z + u0 * x + v0 * y
    return center + radius * d / np.linalg.norm(d)


def dense_reflection_oracle(center, radius, light, observer, n=1000):
    """Same as :func:`reflection_oracle` with an n x 2n (>= 1e6) first pass."""
    return reflection_oracle(center, radius, light, observer, coarse=n, zoom_steps=16)


def _snell_refract(d, n, eta):
    """Refract unit direction d at a surface with unit normal n (pointing
    against d) for index ratio eta = n1/n2. Returns None on TIR."""
    cos_i = -float(d @ n)
    k = 1.0 - eta * eta * (1.0 - cos_i * cos_i)
    if k < 0:
        return None
    return eta * d + (eta * cos_i - np.sqrt(k)) * n


def refraction_oracle(center, radius, observer, interior, n_outside, n_inside, step=1e-4):
    """Trace observer rays across the visible arc of the (observer, center,
    interior) plane, then bisect on the side of ``interior`` relative to the
    refracted ray."""
    center = np.asarray(center, float)
    o = np.asarray(observer, float) - center
    p = np.asarray(interior, float) - center
    u = o / np.linalg.norm(o)
    perp = p - (p @ u) * u
    if np.linalg.norm(perp) < 1e-12:
        return center + radius * u
    v = perp / np.linalg.norm(perp)
    eta = n_outside / n_inside
    theta_max = np.arccos(radius / np.linalg.norm(o))

    def side(theta):
        nrm = np.cos(theta) * u + np.sin(theta) * v
        q = radius * nrm
        d = (q - o) / np.linalg.norm(q - o)
        t = _snell_refract(d, nrm, eta)
        if t is None:
            return np.nan
        w = p - q
        # 2D cross product in the (u, v) plane
        return (t @ u) * (w @ v) - (t @ v) * (w @ u)

    thetas = np.arange(0.0, theta_max, step)
    # vectorized first pass
    nrm = np.cos(thetas)[:, None] * u + np.sin(thetas)[:, None] * v
    q = radius * nrm
    d = q - o
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    cos_i = -np.sum(d * nrm, axis=1)
    k = 1.0 - eta * eta * (1.0 - cos_i**2)
    t = eta * d + (eta * cos_i - np.sqrt(np.clip(k, 0, None)))[:, None] * nrm
    w = p - q
    s = (t @ u) * (w @ v) - (t @ v) * (w @ u)
    s[k < 0] = np.nan
    sign = np.sign(s)
    idx = np.flatnonzero((sign[:-1] * sign[1:]) < 0)
    if len(idx) == 0:
        return None
    lo, hi = thetas[idx[0]], thetas[idx[0] + 1]
    s_lo = side(lo)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        s_mid = side(mid)
        if np.sign(s_mid) == np.sign(s_lo):
            lo, s_lo = mid, s_mid
        else:
            hi = mid
    theta = 0.5 * (lo + hi)
    return center + radius * (np.cos(theta) * u + np.sin(theta) * v)


def _basis_to_points(pts):
    """Matrix sending the projective basis e1, e2, e3, (1,1,1) to four points."""
    p = np.column_stack([np.append(pt, 1.0) for pt in pts[:3]])
    lam = np.linalg.solve(p, np.append(pts[3], 1.0))
    return p * lam


def homography_oracle(src, dst) -> np.ndarray:
    """Four-point homography via two projective-basis maps."""
    src = np.asarray(src, float)
    dst = np.asarray(dst, float)
    h = _basis_to_points(dst) @ np.linalg.inv(_basis_to_points(src))
    return h / h[2, 2]


def lstsq_oracle(raw, targets, order=1):
    """Unregularized least squares via QR; returns a predict(z) callable."""
    z = np.asarray(raw, float)
    x, y = z[:, 0], z[:, 1]
    cols = [np.ones_like(x), x, y] + ([x * x, x * y, y * y] if order == 2 else [])
    a = np.column_stack(cols)
    qm, rm = np.linalg.qr(a)
    coef = np.linalg.solve(rm, qm.T @ np.asarray(targets, float))

    def predict(zq):
        zq = np.atleast_2d(np.asarray(zq, float))
        xq, yq = zq[:, 0], zq[:, 1]
        c = [np.ones_like(xq), xq, yq] + ([xq * xq, xq * yq, yq * yq] if order == 2 else [])
        return np.column_stack(c) @ coef

    return predict


def random_reflection_configs(rng, n):
    """Eye-like reflection set-ups: cornea near the viewing position, LED and
    camera near the screen plane. Yields (center, radius, light, observer)."""
    for _ in range(n):
        center = np.array([0.0, 200.0, 600.0]) + rng.uniform(-150.0, 150.0, 3)
        radius = rng.uniform(6.0, 10.0)
        light = np.array([rng.uniform(-300, 300), rng.uniform(-50, 400), rng.uniform(0, 30)])
        observer = np.array([rng.uniform(-400, 400), rng.uniform(-100, 450), rng.uniform(0, 60)])
        yield center, radius, light, observer


def random_refraction_configs(rng, n):
    """Yields (center, radius, observer, interior, n_out, n_in)."""
    for center, radius, _, observer in random_reflection_configs(rng, n):
        toward = np.array([0.0, 160.0, 0.0]) - center
        toward /= np.linalg.norm(toward)
        d = toward + rng.normal(0.0, 0.35, 3)
        d /= np.linalg.norm(d)
        interior = center + rng.uniform(0.3, 0.75) * radius * d
        yield center, radius, observer, interior, 1.0, rng.uniform(1.3, 1.4)
