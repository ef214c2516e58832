"""Planar rigid-body group SE(2): poses, twists and their integration.

Poses are stored as ``(x, y, theta)`` and twists (body velocities) as
``(vx, vy, omega)``.  Most functions accept either a single 3-vector or an
``(N, 3)`` array.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .signals import finite_diff

SE2_TOL = 1e-12


class Pose(NamedTuple):
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0


class BodyVelocity(NamedTuple):
    vx: float = 0.0
    vy: float = 0.0
    omega: float = 0.0


IDENTITY = Pose(0.0, 0.0, 0.0)


def wrap_angle(theta):
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


def angle_diff(a, b):
    """Wrapped difference ``a - b``."""
    return wrap_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


def hat(v) -> np.ndarray:
    """Map a twist 3-vector to its 3x3 se(2) matrix."""
    vx, vy, w = np.asarray(v, dtype=float)
    return np.array([[0.0, -w, vx],
                     [w, 0.0, vy],
                     [0.0, 0.0, 0.0]])


def vee(M) -> np.ndarray:
    """Inverse of :func:`hat`; rejects matrices that are not in se(2)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M))))
    if (np.max(np.abs(M[2])) > SE2_TOL * scale
            or abs(M[0, 0]) > SE2_TOL * scale or abs(M[1, 1]) > SE2_TOL * scale
            or abs(M[0, 1] + M[1, 0]) > SE2_TOL * scale):
        raise ValueError("matrix is not an element of se(2)")
    return np.array([M[0, 2], M[1, 2], 0.5 * (M[1, 0] - M[0, 1])])


def to_matrix(g) -> np.ndarray:
    x, y, th = np.asarray(g, dtype=float)
    c, s = np.cos(th), np.sin(th)
    return np.array([[c, -s, x], [s, c, y], [0.0, 0.0, 1.0]])


def from_matrix(M) -> Pose:
    M = np.asarray(M, dtype=float)
    return Pose(float(M[0, 2]), float(M[1, 2]),
                float(wrap_angle(np.arctan2(M[1, 0], M[0, 0]))))


def compose(g, h):
    """Group product ``g * h`` (``h`` expressed in the frame of ``g``).

    Broadcasts over leading dimensions.
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    c, s = np.cos(g[..., 2]), np.sin(g[..., 2])
    out = np.stack([g[..., 0] + c * h[..., 0] - s * h[..., 1],
                    g[..., 1] + s * h[..., 0] + c * h[..., 1],
                    wrap_angle(g[..., 2] + h[..., 2])], axis=-1)
    return out


def inverse(g):
    g = np.asarray(g, dtype=float)
    c, s = np.cos(g[..., 2]), np.sin(g[..., 2])
    return np.stack([-(c * g[..., 0] + s * g[..., 1]),
                     s * g[..., 0] - c * g[..., 1],
                     wrap_angle(-g[..., 2])], axis=-1)


def relative(g0, g1):
    """Pose of ``g1`` seen from ``g0``, i.e. ``g0^-1 g1``."""
    return compose(inverse(g0), g1)


def expmap(twist):
    """Group exponential of a twist (already multiplied by the time step)."""
    twist = np.asarray(twist, dtype=float)
    vx, vy, w = twist[..., 0], twist[..., 1], twist[..., 2]
    small = np.abs(w) < 1e-6
    ws = np.where(small, 1.0, w)
    w2 = w * w
    # series fallbacks for sin(w)/w and (1 - cos w)/w
    a = np.where(small, 1.0 - w2 / 6.0 + w2 * w2 / 120.0, np.sin(ws) / ws)
    b = np.where(small, w / 2.0 - w * w2 / 24.0, (1.0 - np.cos(ws)) / ws)
    return np.stack([a * vx - b * vy, b * vx + a * vy, wrap_angle(w)], axis=-1)


def logmap(g):
    """Inverse of :func:`expmap` for rotations within (-pi, pi]."""
    g = np.asarray(g, dtype=float)
    x, y, w = g[..., 0], g[..., 1], g[..., 2]
    small = np.abs(w) < 1e-6
    ws = np.where(small, 1.0, w)
    w2 = w * w
    a = np.where(small, 1.0 - w2 / 6.0, np.sin(ws) / ws)
    b = np.where(small, w / 2.0 - w * w2 / 24.0, (1.0 - np.cos(ws)) / ws)
    det = a * a + b * b
    return np.stack([(a * x + b * y) / det, (-b * x + a * y) / det, w], axis=-1)


def bracket(u, v):
    """Lie bracket ``[u, v]`` of two twists, as a 3-vector."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.stack([v[..., 2] * u[..., 1] - u[..., 2] * v[..., 1],
                     u[..., 2] * v[..., 0] - v[..., 2] * u[..., 0],
                     np.zeros(np.broadcast(u[..., 2], v[..., 2]).shape)], axis=-1)


def step_pose(g, xi, dt: float, method: str = "euler"):
    """Advance pose ``g`` by body velocity ``xi`` over ``dt``.

    ``euler`` is the first-order body-frame update; ``exp`` composes the
    exact group exponential of ``xi * dt`` on the right.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    g = np.asarray(g, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(xi))):
        raise ValueError("non-finite pose or velocity")
    if method == "exp":
        return compose(g, expmap(xi * dt))
    if method == "euler":
        c, s = np.cos(g[..., 2]), np.sin(g[..., 2])
        return np.stack([g[..., 0] + (c * xi[..., 0] - s * xi[..., 1]) * dt,
                         g[..., 1] + (s * xi[..., 0] + c * xi[..., 1]) * dt,
                         wrap_angle(g[..., 2] + xi[..., 2] * dt)], axis=-1)
    raise ValueError(f"unknown integration method {method!r}")


def integrate_poses(xi, dt: float, g0=IDENTITY, method: str = "euler") -> np.ndarray:
    """Integrate a body-velocity series; returns ``len(xi) + 1`` poses."""
    xi = np.asarray(xi, dtype=float)
    out = np.empty((len(xi) + 1, 3))
    out[0] = g0
    if method == "exp":
        steps = expmap(xi * dt)
        for i in range(len(xi)):
            out[i + 1] = compose(out[i], steps[i])
    else:
        for i in range(len(xi)):
            out[i + 1] = step_pose(out[i], xi[i], dt, method)
    return out


def body_velocity_from_poses(poses, dt: float) -> np.ndarray:
    """Body-frame velocity ``(g^-1 dg/dt)^vee`` from a uniformly sampled pose series.

    Central differences in the interior, one-sided at the ends.
    """
    poses = np.asarray(poses, dtype=float)
    if poses.ndim != 2 or poses.shape[1] != 3 or len(poses) < 3:
        raise ValueError("need at least 3 poses of shape (N, 3)")
    theta = np.unwrap(poses[:, 2])
    xd = finite_diff(poses[:, 0], dt)
    yd = finite_diff(poses[:, 1], dt)
    thd = finite_diff(theta, dt)
    c, s = np.cos(theta), np.sin(theta)
    return np.column_stack([c * xd + s * yd, -s * xd + c * yd, thd])
