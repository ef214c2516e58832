"""Phase assignment for forced oscillations and Fourier limit-cycle extraction.

Data phase is computed in three steps: a protophase from the angle of the
shape in its top-two principal-component plane, a monotone correction that
makes the average phase rate uniform, and a constant shift that puts phase
zero at the commanded cycle starts.  The clock phase is the commanded-cycle
fraction and needs no data at all.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signals import FourierSeries, pca_reduce

TWO_PI = 2.0 * np.pi


class DegenerateOscillationError(ValueError):
    """Shape data spans (numerically) a single direction; phase is undefined."""


class PhaseCorrectionError(ValueError):
    """The smoothed correction map is not monotone."""


def estimate_protophase(r, degenerate_ratio: float = 1e-6) -> np.ndarray:
    """Unwrapped angle of the shape in its principal plane.

    Each projected coordinate is scaled to unit variance before taking the
    angle, and the sign is chosen so the angle increases over the record.
    """
    r = np.asarray(r, dtype=float)
    if r.ndim == 1 or r.shape[1] < 2:
        raise DegenerateOscillationError("need at least two shape channels")
    pca = pca_reduce(r, min(2, r.shape[1]))
    var = pca.variances
    if pca.k < 2 or var[1] < degenerate_ratio * var[0]:
        raise DegenerateOscillationError(
            "second principal variance is negligible; the gait encloses no area "
            "(synchronized joints?) so phase is ill-defined")
    z = pca.transform(r)
    z = z / z.std(axis=0)
    proto = np.unwrap(np.arctan2(z[:, 1], z[:, 0]))
    if proto[-1] < proto[0]:
        proto = -proto
    return proto


def correct_phase(protophase, t, bins: int = 64, order: int = 7) -> np.ndarray:
    """Monotone reparameterization giving uniform average phase rate.

    The fraction of time spent in each protophase bin gives a cumulative map
    of the circle onto itself; its periodic part is smoothed by a Fourier
    series of the given order and added back to the protophase.
    """
    proto = np.asarray(protophase, dtype=float)
    t = np.asarray(t, dtype=float)
    if (proto[-1] - proto[0]) < 3 * TWO_PI:
        raise ValueError("protophase must wind at least 3 cycles")
    psi = np.mod(proto, TWO_PI)
    w = np.gradient(t)
    edges = np.linspace(0.0, TWO_PI, bins + 1)
    occupancy, _ = np.histogram(psi, bins=edges, weights=w)
    cdf = np.concatenate([[0.0], np.cumsum(occupancy)]) / occupancy.sum()
    h = TWO_PI * cdf[:-1] - edges[:-1]
    corr = FourierSeries.fit(edges[:-1], h, order)
    corr.coef[0] -= corr.eval(0.0)[0]
    grid = np.linspace(0.0, TWO_PI, 16 * bins, endpoint=False)
    slope = 1.0 + corr.derivative().eval(grid)[:, 0]
    if slope.min() <= 0:
        raise PhaseCorrectionError(
            f"smoothed phase map is not monotone (min slope {slope.min():.3g}); "
            "try fewer Fourier terms or more data")
    return proto + corr.eval(psi)[:, 0]


def align_origin(phi, t, cycle_starts) -> np.ndarray:
    """Shift phase so that its circular mean at the commanded cycle starts is zero."""
    phi = np.asarray(phi, dtype=float)
    at = np.interp(np.asarray(cycle_starts[:-1], dtype=float), t, phi)
    offset = np.angle(np.mean(np.exp(1j * at)))
    return phi - offset


def clock_phase(cycle_starts, t) -> np.ndarray:
    """Phase from the commanded schedule: ``2 pi`` times cycles elapsed (fractional)."""
    s = np.asarray(cycle_starts, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(s) < 2 or np.any(np.diff(s) <= 0):
        raise ValueError("schedule needs increasing cycle boundaries")
    span = s[-1] - s[0]
    if t.min() < s[0] - 1e-9 * span or t.max() > s[-1] + 1e-9 * span:
        raise ValueError("schedule does not cover the record")
    k = np.clip(np.searchsorted(s, t, side="right") - 1, 0, len(s) - 2)
    return TWO_PI * (k + (t - s[k]) / (s[k + 1] - s[k]))


def data_phase(r, t, cycle_starts=None, bins: int = 64, order: int = 7) -> np.ndarray:
    """Protophase, corrected, and (when a schedule is given) origin-aligned."""
    phi = correct_phase(estimate_protophase(r), t, bins=bins, order=order)
    if cycle_starts is not None:
        phi = align_origin(phi, t, cycle_starts)
    return phi


def circular_correlation(a, b) -> float:
    """Fisher-Lee circular correlation between two angle series.

    Unlike the mean-centred coefficient this stays well defined when both
    angles are close to uniformly distributed, as phases are.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.size
    s_diff = abs(np.sum(np.exp(1j * (a - b)))) ** 2
    s_sum = abs(np.sum(np.exp(1j * (a + b)))) ** 2
    va = n * n - abs(np.sum(np.exp(2j * a))) ** 2
    vb = n * n - abs(np.sum(np.exp(2j * b))) ** 2
    return float((s_diff - s_sum) / np.sqrt(va * vb))


def phase_rate_cov(phi, t, bins: int = 64) -> float:
    """Coefficient of variation across phase bins of the average phase rate.

    The average rate in a bin is its angular width over the time spent in it.
    """
    phi = np.asarray(phi, dtype=float)
    t = np.asarray(t, dtype=float)
    occupancy, _ = np.histogram(np.mod(phi, TWO_PI), bins=np.linspace(0, TWO_PI, bins + 1),
                                weights=np.gradient(t))
    if np.any(occupancy <= 0):
        return float("inf")
    rate = 1.0 / occupancy
    return float(rate.std() / rate.mean())


def winding_counts(phi, t, cycle_starts) -> np.ndarray:
    """Phase advance across every commanded cycle, in turns."""
    at = np.interp(np.asarray(cycle_starts, dtype=float), t, np.asarray(phi, dtype=float))
    return np.diff(at) / TWO_PI


@dataclass
class LimitCycle:
    """Fourier model of the average shape and input as functions of phase."""

    theta_r: FourierSeries
    theta_u: FourierSeries
    phase_rate: float

    @property
    def theta_r_dot(self) -> FourierSeries:
        return self.theta_r.derivative().scaled(self.phase_rate)

    def r(self, phi) -> np.ndarray:
        return self.theta_r.eval(phi)

    def u(self, phi) -> np.ndarray:
        out = self.theta_u.eval(phi)
        return out[..., 0]

    def r_dot(self, phi) -> np.ndarray:
        return self.theta_r_dot.eval(phi)

    def to_dict(self) -> dict:
        return {"phase_rate": float(self.phase_rate),
                "theta_r": self.theta_r.coef.tolist(),
                "theta_u": self.theta_u.coef.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LimitCycle":
        return cls(FourierSeries(np.array(d["theta_r"], dtype=float)),
                   FourierSeries(np.array(d["theta_u"], dtype=float)),
                   float(d["phase_rate"]))


def extract_limit_cycle(phi, r, u, K: int = 7, t=None) -> LimitCycle:
    """Least-squares Fourier fit of shape and input against phase.

    The limit-cycle shape velocity is the analytic phase derivative scaled by
    the mean phase rate over the record, which needs ``t``.
    """
    phi = np.asarray(phi, dtype=float)
    theta_r = FourierSeries.fit(phi, r, K)
    theta_u = FourierSeries.fit(phi, np.asarray(u, dtype=float).reshape(len(phi), -1), K)
    if t is None:
        rate = 1.0
    else:
        t = np.asarray(t, dtype=float)
        rate = float(np.polyfit(t, phi, 1)[0])
    return LimitCycle(theta_r, theta_u, rate)
