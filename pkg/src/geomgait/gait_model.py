"""Phase-windowed first-order models of body velocity and actuator dynamics.

Within each of ``M`` phase windows two linear-in-parameters models are fit
by least squares against perturbations from the limit cycle:

    xi_k   ~ C_k + B_k dr + A_k drdot + dr^T dA_k drdot      (body velocity)
    drdot  ~ D + E_r dr + E_u du                             (actuator)

where ``dr = r - theta_r(phi)``, ``drdot = rdot - theta_r_dot(phi)`` and
``du = u - theta_u(phi)``.  Every coefficient is then smoothed across
windows with a low-order Fourier series so the model can be queried at any
phase.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .phase import LimitCycle, TWO_PI
from .signals import FourierSeries

log = logging.getLogger(__name__)

BODY_DIM = 3
# a window whose shape perturbations are below this fraction of the shape
# amplitude carries no first-order information; only its mean is fit
DEGENERATE_REL = 1e-2


class WindowFitError(ValueError):
    """A phase window is empty or has too few samples for its regressors."""


def assign_windows(phi, M: int = 24):
    """Uniform phase bins ``[2 pi m / M, 2 pi (m+1) / M)``.

    Returns ``(index, counts)``.
    """
    if M < 8:
        raise ValueError("use at least 8 phase windows")
    psi = np.mod(np.asarray(phi, dtype=float), TWO_PI)
    idx = np.minimum((psi * (M / TWO_PI)).astype(int), M - 1)
    counts = np.bincount(idx, minlength=M)
    if np.any(counts == 0):
        empty = np.flatnonzero(counts == 0).tolist()
        raise WindowFitError(f"empty phase window(s): {empty}")
    log.debug("window occupancy min %d max %d", counts.min(), counts.max())
    return idx, counts


def window_centers(M: int) -> np.ndarray:
    return (np.arange(M) + 0.5) * TWO_PI / M


@dataclass
class RegressionDataset:
    phi: np.ndarray
    delta_r: np.ndarray
    delta_r_dot: np.ndarray
    delta_u: np.ndarray
    xi: np.ndarray
    window: np.ndarray
    counts: np.ndarray
    r_scale: float = 0.0              # RMS shape amplitude about its mean

    @property
    def M(self) -> int:
        return len(self.counts)

    @property
    def shape_dim(self) -> int:
        return self.delta_r.shape[1]


def build_dataset(phi, r, r_dot, u, xi, lc: LimitCycle, M: int = 24) -> RegressionDataset:
    """Perturbations of every sample from the limit cycle at its own phase."""
    phi = np.asarray(phi, dtype=float)
    window, counts = assign_windows(phi, M)
    r = np.asarray(r, dtype=float)
    du = np.asarray(u, dtype=float).reshape(len(phi), -1) - lc.theta_u.eval(phi)
    r_scale = float(np.sqrt(np.mean(np.sum((r - r.mean(axis=0)) ** 2, axis=1))))
    return RegressionDataset(phi=phi,
                             delta_r=r - lc.r(phi),
                             delta_r_dot=np.asarray(r_dot, dtype=float) - lc.r_dot(phi),
                             delta_u=du,
                             xi=np.asarray(xi, dtype=float),
                             window=window, counts=counts, r_scale=r_scale)


def bodyvel_design(dr, drdot) -> np.ndarray:
    """Columns ``[1, dr, drdot, vec(dr drdot^T)]`` (row-major outer product)."""
    n = dr.shape[1]
    outer = (dr[:, :, None] * drdot[:, None, :]).reshape(len(dr), n * n)
    return np.column_stack([np.ones(len(dr)), dr, drdot, outer])


def actuator_design(dr, du) -> np.ndarray:
    return np.column_stack([np.ones(len(dr)), dr, du])


@dataclass
class LstsqResult:
    coef: np.ndarray
    cond: float
    ridge: bool
    degenerate: bool


def _lstsq(X, Y, cond_max: float = 1e3, ridge: float = 1e-6) -> LstsqResult:
    """OLS with column scaling; small ridge when the scaled design is ill-conditioned.

    Columns other than the intercept with no variance make the window
    degenerate: only the intercept (the mean) is fit.
    """
    scale = np.sqrt(np.mean(X ** 2, axis=0))
    live = scale[1:] > 1e-12
    if not np.any(live):
        return _mean_only(X, Y)
    scale[scale == 0] = 1.0
    Xs = X / scale
    sv = np.linalg.svd(Xs, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if cond > cond_max:
        G = Xs.T @ Xs
        lam = ridge * np.trace(G)
        beta = np.linalg.solve(G + lam * np.eye(G.shape[0]), Xs.T @ Y)
        used_ridge = True
    else:
        beta = np.linalg.lstsq(Xs, Y, rcond=None)[0]
        used_ridge = False
    return LstsqResult(beta / scale[:, None], cond, used_ridge, False)


@dataclass
class BodyVelWindows:
    C: np.ndarray        # (M, 3)
    B: np.ndarray        # (M, 3, n)
    A: np.ndarray        # (M, 3, n)
    dA: np.ndarray       # (M, 3, n, n)
    cond: np.ndarray
    degenerate: np.ndarray


@dataclass
class ActuatorWindows:
    D: np.ndarray        # (M, n)
    E_r: np.ndarray      # (M, n, n)
    E_u: np.ndarray      # (M, n, m)
    cond: np.ndarray
    degenerate: np.ndarray


def _is_flat(ds: RegressionDataset, sel) -> bool:
    """Shape perturbations in the window are negligible against the shape amplitude."""
    rms = np.sqrt(np.mean(np.sum(ds.delta_r[sel] ** 2, axis=1)))
    return bool(rms <= DEGENERATE_REL * ds.r_scale)


def _mean_only(X, Y) -> LstsqResult:
    coef = np.zeros((X.shape[1], Y.shape[1]))
    coef[0] = Y.mean(axis=0)
    return LstsqResult(coef, float("inf"), False, True)


def _check_counts(ds: RegressionDataset, n_reg: int):
    low = np.flatnonzero(ds.counts < 3 * n_reg)
    if low.size:
        raise WindowFitError(f"window(s) {low.tolist()} have fewer than {3 * n_reg} samples "
                             f"(min {ds.counts.min()})")


def fit_bodyvel_model(ds: RegressionDataset, cond_max: float = 1e3,
                      ridge: float = 1e-6) -> BodyVelWindows:
    n = ds.shape_dim
    n_reg = 1 + 2 * n + n * n
    _check_counts(ds, n_reg)
    M = ds.M
    C = np.zeros((M, BODY_DIM))
    B = np.zeros((M, BODY_DIM, n))
    A = np.zeros((M, BODY_DIM, n))
    dA = np.zeros((M, BODY_DIM, n, n))
    cond = np.zeros(M)
    degenerate = np.zeros(M, dtype=bool)
    for m in range(M):
        sel = ds.window == m
        X = bodyvel_design(ds.delta_r[sel], ds.delta_r_dot[sel])
        y = ds.xi[sel]
        res = _mean_only(X, y) if _is_flat(ds, sel) else _lstsq(X, y, cond_max, ridge)
        beta = res.coef.T                           # (3, n_reg)
        C[m] = beta[:, 0]
        B[m] = beta[:, 1:1 + n]
        A[m] = beta[:, 1 + n:1 + 2 * n]
        dA[m] = beta[:, 1 + 2 * n:].reshape(BODY_DIM, n, n)
        cond[m], degenerate[m] = res.cond, res.degenerate
    return BodyVelWindows(C, B, A, dA, cond, degenerate)


def fit_actuator_model(ds: RegressionDataset, cond_max: float = 1e3,
                       ridge: float = 1e-6) -> ActuatorWindows:
    n = ds.shape_dim
    mu = ds.delta_u.shape[1]
    n_reg = 1 + n + mu
    _check_counts(ds, n_reg)
    M = ds.M
    D = np.zeros((M, n))
    E_r = np.zeros((M, n, n))
    E_u = np.zeros((M, n, mu))
    cond = np.zeros(M)
    degenerate = np.zeros(M, dtype=bool)
    for m in range(M):
        sel = ds.window == m
        X = actuator_design(ds.delta_r[sel], ds.delta_u[sel])
        y = ds.delta_r_dot[sel]
        res = _mean_only(X, y) if _is_flat(ds, sel) else _lstsq(X, y, cond_max, ridge)
        beta = res.coef.T                           # (n, n_reg)
        D[m] = beta[:, 0]
        E_r[m] = beta[:, 1:1 + n]
        E_u[m] = beta[:, 1 + n:]
        cond[m], degenerate[m] = res.cond, res.degenerate
    return ActuatorWindows(D, E_r, E_u, cond, degenerate)


# ---------------------------------------------------------------------------
# smoothed model

_BODY_KEYS = ("C", "B", "A", "dA")
_ACT_KEYS = ("D", "E_r", "E_u")


@dataclass
class PhaseMap:
    """Periodic correction taking clock phase to the phase the model was fit in."""

    correction: FourierSeries | None = None

    def __call__(self, phi_clock) -> np.ndarray:
        phi_clock = np.asarray(phi_clock, dtype=float)
        if self.correction is None:
            return phi_clock
        return phi_clock + self.correction.eval(np.mod(phi_clock, TWO_PI))[..., 0]

    @classmethod
    def fit(cls, phi_clock, phi_data, order: int = 7) -> "PhaseMap":
        d = np.asarray(phi_data, dtype=float) - np.asarray(phi_clock, dtype=float)
        centre = np.angle(np.mean(np.exp(1j * d)))
        d = centre + np.angle(np.exp(1j * (d - centre)))
        return cls(FourierSeries.fit(np.mod(phi_clock, TWO_PI), d, order))

    def to_dict(self):
        return None if self.correction is None else self.correction.coef.tolist()

    @classmethod
    def from_dict(cls, d):
        return cls(None if d is None else FourierSeries(np.array(d, dtype=float)))


@dataclass
class GaitModel:
    """Limit cycle plus Fourier-smoothed window coefficients.

    Immutable after construction; :meth:`query` evaluates every coefficient
    at arbitrary phases.
    """

    limit_cycle: LimitCycle
    body: BodyVelWindows
    actuator: ActuatorWindows
    series: dict                         # name -> FourierSeries over flattened coefficient
    K: int
    phase_map: PhaseMap = field(default_factory=PhaseMap)
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return self.body.C.shape[0]

    @property
    def shape_dim(self) -> int:
        return self.body.A.shape[2]

    @property
    def input_dim(self) -> int:
        return self.actuator.E_u.shape[2]

    def _shape_of(self, name):
        n, mu = self.shape_dim, self.input_dim
        return {"C": (BODY_DIM,), "B": (BODY_DIM, n), "A": (BODY_DIM, n),
                "dA": (BODY_DIM, n, n), "D": (n,), "E_r": (n, n), "E_u": (n, mu)}[name]

    def query(self, phi) -> dict:
        """All smoothed coefficients at ``phi`` (scalar or array)."""
        scalar = np.ndim(phi) == 0
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        out = {}
        for name, fs in self.series.items():
            vals = fs.eval(phi).reshape((len(phi),) + self._shape_of(name))
            out[name] = vals[0] if scalar else vals
        return out

    def to_dict(self) -> dict:
        def arr(a):
            return np.asarray(a, dtype=float).tolist()

        def conds(a):
            return [float(v) if np.isfinite(v) else None for v in a]
        return {
            "meta": dict(self.meta, M=self.M, K=self.K, shape_dim=self.shape_dim,
                         input_dim=self.input_dim),
            "limit_cycle": self.limit_cycle.to_dict(),
            "phase_map": self.phase_map.to_dict(),
            "windows": {
                "C": arr(self.body.C), "B": arr(self.body.B), "A": arr(self.body.A),
                "dA": arr(self.body.dA), "body_cond": conds(self.body.cond),
                "body_degenerate": self.body.degenerate.astype(int).tolist(),
                "D": arr(self.actuator.D), "E_r": arr(self.actuator.E_r),
                "E_u": arr(self.actuator.E_u), "actuator_cond": conds(self.actuator.cond),
                "actuator_degenerate": self.actuator.degenerate.astype(int).tolist(),
            },
            "fourier": {name: arr(fs.coef) for name, fs in self.series.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaitModel":
        w = d["windows"]

        def conds(a):
            return np.array([np.inf if v is None else v for v in a], dtype=float)

        body = BodyVelWindows(np.array(w["C"]), np.array(w["B"]), np.array(w["A"]),
                              np.array(w["dA"]), conds(w["body_cond"]),
                              np.array(w["body_degenerate"], dtype=bool))
        act = ActuatorWindows(np.array(w["D"]), np.array(w["E_r"]), np.array(w["E_u"]),
                              conds(w["actuator_cond"]),
                              np.array(w["actuator_degenerate"], dtype=bool))
        series = {name: FourierSeries(np.array(c, dtype=float)) for name, c in d["fourier"].items()}
        meta = {k: v for k, v in d["meta"].items()
                if k not in ("M", "K", "shape_dim", "input_dim")}
        return cls(LimitCycle.from_dict(d["limit_cycle"]), body, act, series,
                   int(d["meta"]["K"]), PhaseMap.from_dict(d.get("phase_map")), meta)


def smooth_coefficients(body: BodyVelWindows, actuator: ActuatorWindows, lc: LimitCycle,
                        K: int = 4, phase_map: PhaseMap | None = None,
                        meta: dict | None = None) -> GaitModel:
    """Fit a Fourier series of order ``K`` through every coefficient's window values."""
    M = body.C.shape[0]
    centers = window_centers(M)
    series = {}
    for name in _BODY_KEYS:
        vals = getattr(body, name).reshape(M, -1)
        series[name] = FourierSeries.fit(centers, vals, K)
    for name in _ACT_KEYS:
        vals = getattr(actuator, name).reshape(M, -1)
        series[name] = FourierSeries.fit(centers, vals, K)
    return GaitModel(lc, body, actuator, series, K, phase_map or PhaseMap(), dict(meta or {}))
