"""Ground-truth plants used to generate data and verify optimized inputs.

``SwimmerPlant`` is a three-link Purcell swimmer in a viscous fluid
(resistive force theory, drag integrated analytically along each link)
whose two joints follow first-order lag dynamics towards a temperature
dependent equilibrium.  ``SurrogatePlant`` keeps the same body but lets each
joint relax at different rates when swelling and when shrinking, which is a
crude stand-in for a hydrogel bilayer.

Body frame: origin at the middle-link centre, x axis along the middle link.
Joint 1 sits at the front of the middle link, joint 2 at the rear; with the
default rates (front joint faster) the swimmer advances along +x.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import se2
from .waveforms import InputSeries


class PlantLimitError(RuntimeError):
    """Raised when a simulated shape leaves the configured joint limits."""


@dataclass
class SwimmerConfig:
    link_length: float = 1.0
    drag_ratio: float = 2.0             # lateral / longitudinal drag
    longitudinal_drag: float = 1.0
    c: tuple = (1.0, 0.5)               # joint relaxation rates, 1/time
    a: tuple = (0.5, 0.5)               # equilibrium slope, rad per unit input
    b: tuple = (0.0, 0.0)               # equilibrium offset, rad
    joint_limit: float = 0.5
    input_range: tuple = (-1.0, 1.0)

    def __post_init__(self):
        self.c = tuple(float(v) for v in self.c)
        self.a = tuple(float(v) for v in self.a)
        self.b = tuple(float(v) for v in self.b)
        self.input_range = tuple(float(v) for v in self.input_range)
        if len(self.c) != 2 or len(self.a) != 2 or len(self.b) != 2:
            raise ValueError("swimmer has exactly two joints")
        if min(self.c) <= 0:
            raise ValueError("relaxation rates must be positive")
        if not self.drag_ratio > 1:
            raise ValueError("drag_ratio must exceed 1")
        if not (self.link_length > 0 and self.longitudinal_drag > 0):
            raise ValueError("link length and drag must be positive")
        ends = np.outer(self.input_range, self.a) + np.asarray(self.b)
        if np.max(np.abs(ends)) > self.joint_limit + 1e-12:
            raise ValueError("equilibrium shapes over the input range exceed the joint limits")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class SurrogateConfig(SwimmerConfig):
    """Swimmer body with asymmetric relaxation.

    ``c`` is the swelling rate (equilibrium above the current shape);
    shrinking runs ``shrink_ratio`` times faster.
    """

    c: tuple = (0.5, 0.25)
    a: tuple = (-0.02, -0.02)           # rad per degree C, swells when cold
    b: tuple = (0.85, 0.85)
    input_range: tuple = (20.0, 65.0)
    shrink_ratio: float = 10.0

    def __post_init__(self):
        super().__post_init__()
        if not self.shrink_ratio > 0:
            raise ValueError("shrink_ratio must be positive")


# ---------------------------------------------------------------------------
# geometry and viscous drag

def link_geometry(r, L: float = 1.0):
    """Centres, headings and shape Jacobians of the three links.

    Returns ``(centers, headings, dcenter_dr, dheading_dr)`` with shapes
    ``(N, 3, 2)``, ``(N, 3)``, ``(N, 3, 2, 2)``, ``(3, 2)``.
    """
    r = np.atleast_2d(np.asarray(r, dtype=float))
    n = r.shape[0]
    h = 0.5 * L
    # links ordered rear, middle, front
    phi1 = -r[:, 1]
    phi3 = r[:, 0]
    centers = np.zeros((n, 3, 2))
    centers[:, 0, 0] = -h - h * np.cos(phi1)
    centers[:, 0, 1] = -h * np.sin(phi1)
    centers[:, 2, 0] = h + h * np.cos(phi3)
    centers[:, 2, 1] = h * np.sin(phi3)
    headings = np.column_stack([phi1, np.zeros(n), phi3])
    dc = np.zeros((n, 3, 2, 2))
    dc[:, 0, 0, 1] = -h * np.sin(phi1)
    dc[:, 0, 1, 1] = h * np.cos(phi1)
    dc[:, 2, 0, 0] = -h * np.sin(phi3)
    dc[:, 2, 1, 0] = h * np.cos(phi3)
    dh = np.array([[0.0, -1.0], [0.0, 0.0], [1.0, 0.0]])
    return centers, headings, dc, dh


def wrench_matrix(r, cfg: SwimmerConfig) -> np.ndarray:
    """Total viscous wrench as a linear map of ``(vx, vy, omega, rdot1, rdot2)``.

    Returns ``(N, 3, 5)``; force components first, torque about the body
    origin last.
    """
    L = cfg.link_length
    ct = cfg.longitudinal_drag
    cn = cfg.drag_ratio * ct
    centers, headings, dc, dh = link_geometry(r, L)
    n = centers.shape[0]
    W = np.zeros((n, 3, 5))
    for i in range(3):
        p = centers[:, i]
        # velocity of the link centre: rows (x, y), columns of the 5-vector
        Jv = np.zeros((n, 2, 5))
        Jv[:, 0, 0] = 1.0
        Jv[:, 1, 1] = 1.0
        Jv[:, 0, 2] = -p[:, 1]
        Jv[:, 1, 2] = p[:, 0]
        Jv[:, :, 3:] = dc[:, i]
        Jw = np.zeros((n, 5))
        Jw[:, 2] = 1.0
        Jw[:, 3:] = dh[i]
        t = np.stack([np.cos(headings[:, i]), np.sin(headings[:, i])], axis=-1)
        nrm = np.stack([-t[:, 1], t[:, 0]], axis=-1)
        M = -L * (ct * t[:, :, None] * t[:, None, :] + cn * nrm[:, :, None] * nrm[:, None, :])
        F = M @ Jv
        W[:, :2] += F
        W[:, 2] += p[:, 0, None] * F[:, 1] - p[:, 1, None] * F[:, 0]
        W[:, 2] += -cn * L ** 3 / 12.0 * Jw
    return W


def local_connection(r, cfg: SwimmerConfig) -> np.ndarray:
    """Local connection ``A(r)`` with ``xi = -A(r) rdot``.

    Accepts one shape (returns 3x2) or an ``(N, 2)`` batch (returns N x 3 x 2).
    """
    single = np.ndim(r) == 1
    W = wrench_matrix(r, cfg)
    Wb, Ws = W[:, :, :3], W[:, :, 3:]
    cond = np.linalg.cond(Wb)
    if np.any(~np.isfinite(cond)) or np.any(cond > 1e12):
        raise np.linalg.LinAlgError("drag system is singular for the requested shape")
    A = np.linalg.solve(Wb, Ws)
    return A[0] if single else A


def body_velocity(r, rdot, cfg: SwimmerConfig) -> np.ndarray:
    """``xi = -A(r) rdot`` for single samples or batches."""
    A = local_connection(np.atleast_2d(r), cfg)
    xi = -np.einsum("nij,nj->ni", A, np.atleast_2d(rdot))
    return xi[0] if np.ndim(r) == 1 else xi


# ---------------------------------------------------------------------------
# actuator dynamics

def steady_state(T, cfg: SwimmerConfig) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    return T[..., None] * np.asarray(cfg.a) + np.asarray(cfg.b)


def actuator_rhs(r, T, cfg: SwimmerConfig) -> np.ndarray:
    """First-order lag towards the equilibrium: ``rdot_i = c_i (a_i T + b_i - r_i)``."""
    return np.asarray(cfg.c) * (steady_state(T, cfg) - np.asarray(r, dtype=float))


def surrogate_rhs(r, T, cfg: SurrogateConfig) -> np.ndarray:
    """Lag dynamics with rate ``c`` while swelling and ``shrink_ratio * c`` while shrinking."""
    gap = steady_state(T, cfg) - np.asarray(r, dtype=float)
    c = np.asarray(cfg.c)
    rate = np.where(gap > 0, c, c * cfg.shrink_ratio)
    return rate * gap


class SwimmerPlant:
    name = "swimmer"

    def __init__(self, cfg: SwimmerConfig | None = None):
        self.cfg = cfg or SwimmerConfig()

    @property
    def shape_dim(self) -> int:
        return 2

    def rhs(self, r, T):
        return actuator_rhs(r, T, self.cfg)

    def connection(self, r):
        return local_connection(r, self.cfg)

    def steady_state(self, T):
        return steady_state(T, self.cfg)

    def simulate(self, u, dt=None, g0=se2.IDENTITY, r0=None) -> "Trajectory":
        return simulate(u, self, dt=dt, g0=g0, r0=r0)


class SurrogatePlant(SwimmerPlant):
    name = "surrogate"

    def __init__(self, cfg: SurrogateConfig | None = None):
        self.cfg = cfg or SurrogateConfig()

    def rhs(self, r, T):
        return surrogate_rhs(r, T, self.cfg)


def make_plant(name: str, **overrides):
    if name == "swimmer":
        return SwimmerPlant(SwimmerConfig(**overrides))
    if name == "surrogate":
        return SurrogatePlant(SurrogateConfig(**overrides))
    raise ValueError(f"unknown plant {name!r}")


# ---------------------------------------------------------------------------
# simulation

@dataclass
class Trajectory:
    """Uniformly sampled record of input, shape, shape velocity, body velocity and pose."""

    t: np.ndarray
    u: np.ndarray
    r: np.ndarray
    r_dot: np.ndarray
    xi: np.ndarray
    g: np.ndarray
    cycle_starts: np.ndarray | None = None
    phi: np.ndarray | None = None
    params: list = field(default_factory=list)

    def __post_init__(self):
        n = len(self.t)
        for name in ("u", "r", "r_dot", "xi", "g"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"series {name!r} has length {len(getattr(self, name))}, expected {n}")
        if self.phi is not None and len(self.phi) != n:
            raise ValueError("phase series length mismatch")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def n_cycles(self) -> int:
        return 0 if self.cycle_starts is None else len(self.cycle_starts) - 1

    def __len__(self):
        return len(self.t)

    def slice(self, i0: int, i1: int) -> "Trajectory":
        return Trajectory(self.t[i0:i1], self.u[i0:i1], self.r[i0:i1], self.r_dot[i0:i1],
                          self.xi[i0:i1], self.g[i0:i1], None,
                          None if self.phi is None else self.phi[i0:i1])


_GAUSS = (0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6)


def _hermite(r0, r1, d0, d1, s, h):
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * r0 + h10 * h * d0 + h01 * r1 + h11 * h * d1


def _integrate_magnus(xa, xb, dt, g0):
    """Fourth-order Magnus steps for ``dg/dt = g xi`` from Gauss-point twists."""
    omega = 0.5 * dt * (xa + xb) + (math.sqrt(3) / 12) * dt * dt * se2.bracket(xa, xb)
    steps = se2.expmap(omega)
    n = len(steps) + 1
    out = np.empty((n, 3))
    x, y, th = (float(v) for v in g0)
    out[0] = (x, y, th)
    for i, (sx, sy, sth) in enumerate(steps.tolist(), start=1):
        c, s = math.cos(th), math.sin(th)
        x, y = x + c * sx - s * sy, y + s * sx + c * sy
        th = math.pi - (math.pi - th - sth) % (2 * math.pi)
        out[i] = (x, y, th)
    return out


def simulate(u, plant, dt: float | None = None, g0=se2.IDENTITY, r0=None) -> Trajectory:
    """Integrate the actuator (RK4) and the body (4th-order Magnus) for an input series.

    ``u`` is an :class:`InputSeries` or a plain array sampled at ``dt``; the
    input is linear between samples.  The initial shape defaults to the
    equilibrium for ``u[0]``.
    """
    if isinstance(u, InputSeries):
        schedule, params = u.cycle_starts, list(u.params)
        dt = u.dt if dt is None else dt
        u = u.u
    else:
        schedule, params = None, []
    if dt is None or not dt > 0:
        raise ValueError("a positive dt is required")
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or len(u) < 2 or not np.all(np.isfinite(u)):
        raise ValueError("input must be a finite 1-D series of length >= 2")
    n = len(u)
    r = np.empty((n, plant.shape_dim))
    r[0] = plant.steady_state(u[0]) if r0 is None else np.asarray(r0, dtype=float)
    rhs = plant.rhs
    for i in range(n - 1):
        ri, u0, u1 = r[i], u[i], u[i + 1]
        um = 0.5 * (u0 + u1)
        k1 = rhs(ri, u0)
        k2 = rhs(ri + 0.5 * dt * k1, um)
        k3 = rhs(ri + 0.5 * dt * k2, um)
        k4 = rhs(ri + dt * k3, u1)
        r[i + 1] = ri + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    limit = plant.cfg.joint_limit
    bad = np.abs(r) > limit * (1 + 1e-9)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise PlantLimitError(f"joint {j + 1} reached {r[i, j]:.4f} rad at t={i * dt:.4g}, "
                              f"beyond the {limit} rad limit")
    r_dot = rhs(r, u)
    xi = -np.einsum("nij,nj->ni", plant.connection(r), r_dot)
    # twists at the two Gauss points of every step
    gauss = []
    for s in _GAUSS:
        rg = _hermite(r[:-1], r[1:], r_dot[:-1], r_dot[1:], s, dt)
        ug = (1 - s) * u[:-1] + s * u[1:]
        gauss.append(-np.einsum("nij,nj->ni", plant.connection(rg), rhs(rg, ug)))
    g = _integrate_magnus(gauss[0], gauss[1], dt, g0)
    t = np.arange(n) * dt
    return Trajectory(t=t, u=u, r=r, r_dot=r_dot, xi=xi, g=g, cycle_starts=schedule, params=params)


def shape_loop_area(r) -> float:
    """Signed area enclosed by a closed 2-D shape path (shoelace formula)."""
    r = np.asarray(r, dtype=float)
    x, y = r[:, 0], r[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def cycle_displacement(traj: Trajectory, k: int = -1):
    """Pose change over commanded cycle ``k``, expressed in the body frame at its start."""
    if traj.cycle_starts is None:
        raise ValueError("trajectory has no cycle schedule")
    idx = np.clip(np.rint(traj.cycle_starts / traj.dt).astype(int), 0, len(traj.t) - 1)
    k = k % traj.n_cycles
    return se2.relative(traj.g[idx[k]], traj.g[idx[k + 1]])
