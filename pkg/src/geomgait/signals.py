"""Shared numerical toolkit: zero-phase smoothing, differencing, Fourier series, PCA."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import signal

log = logging.getLogger(__name__)


def settle_length(sos, tol: float = 1e-3) -> int:
    """Samples until a single pass's impulse response stays below ``tol`` of its peak."""
    n = 64
    while True:
        imp = np.zeros(n)
        imp[0] = 1.0
        h = np.abs(signal.sosfilt(sos, imp))
        above = np.nonzero(h > tol * h.max())[0]
        if above[-1] < n // 2 or n >= 1 << 22:
            return int(above[-1]) + 1
        n *= 2


def zero_phase_lowpass(x, cutoff: float, dt: float, order: int = 2) -> np.ndarray:
    """Butterworth low-pass run forward and backward along axis 0.

    ``order`` is the per-pass order, so the magnitude response is that of a
    ``2 * order`` filter with zero net phase.  Edges are padded by odd
    (point) reflection over three settle lengths.
    """
    x = np.asarray(x, dtype=float)
    nyquist = 0.5 / dt
    if not 0 < cutoff < nyquist:
        raise ValueError(f"cutoff {cutoff} must lie in (0, Nyquist={nyquist})")
    sos = signal.butter(order, cutoff / nyquist, btype="low", output="sos")
    padlen = 3 * settle_length(sos)
    if x.shape[0] <= padlen:
        raise ValueError(f"series of length {x.shape[0]} too short for filter (need > {padlen})")
    return signal.sosfiltfilt(sos, x, axis=0, padtype="odd", padlen=padlen)


def finite_diff(x, dt: float) -> np.ndarray:
    """Central differences in the interior, first-order one-sided at both ends."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 3:
        raise ValueError("finite_diff needs at least 3 samples")
    return np.gradient(x, dt, axis=0, edge_order=1)


def fourier_design(phi, order: int) -> np.ndarray:
    """Columns ``[1, cos phi, sin phi, ..., cos K phi, sin K phi]``."""
    phi = np.asarray(phi, dtype=float).reshape(-1)
    cols = [np.ones_like(phi)]
    for k in range(1, order + 1):
        cols.append(np.cos(k * phi))
        cols.append(np.sin(k * phi))
    return np.column_stack(cols)


@dataclass
class FourierSeries:
    """Real Fourier series in phase, one column of coefficients per channel.

    ``coef`` has shape ``(2K+1, channels)`` ordered as
    ``[dc, cos1, sin1, cos2, sin2, ...]``.
    """

    coef: np.ndarray

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        if self.coef.ndim == 1:
            self.coef = self.coef[:, None]
        if self.coef.shape[0] % 2 != 1:
            raise ValueError("coefficient rows must be 2K+1")

    @property
    def order(self) -> int:
        return (self.coef.shape[0] - 1) // 2

    @property
    def channels(self) -> int:
        return self.coef.shape[1]

    @classmethod
    def fit(cls, phi, values, order: int) -> "FourierSeries":
        """Least-squares fit of ``values`` (N or N x channels) against phases ``phi``."""
        phi = np.asarray(phi, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != phi.size:
            raise ValueError(f"{phi.size} phases for {values.shape[0]} samples")
        if phi.size < 2 * order + 1:
            raise ValueError(f"need at least {2 * order + 1} samples for order {order}")
        if order > 0:
            gap = max_phase_gap(phi)
            if gap >= np.pi / order:
                raise ValueError(f"phase coverage gap {gap:.3g} rad exceeds pi/K={np.pi / order:.3g}")
        X = fourier_design(phi, order)
        coef, _, rank, sv = np.linalg.lstsq(X, values, rcond=None)
        if rank < X.shape[1] or sv[-1] < 1e-10 * sv[0]:
            raise ValueError("ill-conditioned Fourier design (insufficient phase coverage)")
        return cls(coef)

    def __call__(self, phi) -> np.ndarray:
        return self.eval(phi)

    def eval(self, phi) -> np.ndarray:
        """Evaluate at phases; returns ``(N, channels)`` (or ``(channels,)`` for a scalar)."""
        scalar = np.ndim(phi) == 0
        out = fourier_design(phi, self.order) @ self.coef
        return out[0] if scalar else out

    def derivative(self) -> "FourierSeries":
        """Exact derivative with respect to phase."""
        d = np.zeros_like(self.coef)
        for k in range(1, self.order + 1):
            a, b = self.coef[2 * k - 1], self.coef[2 * k]
            d[2 * k - 1] = k * b
            d[2 * k] = -k * a
        return FourierSeries(d)

    def scaled(self, s: float) -> "FourierSeries":
        return FourierSeries(self.coef * s)

    @property
    def mean(self) -> np.ndarray:
        return self.coef[0].copy()


def fit_fourier(phases, values, K: int) -> FourierSeries:
    return FourierSeries.fit(phases, values, K)


def eval_fourier(fs: FourierSeries, phase) -> np.ndarray:
    return fs.eval(phase)


def max_phase_gap(phi) -> float:
    """Largest empty arc on the circle left by the sample phases."""
    p = np.sort(np.mod(np.asarray(phi, dtype=float).reshape(-1), 2 * np.pi))
    if p.size == 0:
        return 2 * np.pi
    gaps = np.diff(np.concatenate([p, [p[0] + 2 * np.pi]]))
    return float(gaps.max())


@dataclass
class PCAResult:
    mean: np.ndarray
    components: np.ndarray          # (k, features), orthonormal rows
    variances: np.ndarray           # per-component variance, all components
    k: int

    @property
    def variance_explained(self) -> np.ndarray:
        """Fraction of total variance per retained component."""
        total = self.variances.sum()
        return self.variances[:self.k] / total if total > 0 else np.zeros(self.k)

    @property
    def cumulative(self) -> float:
        return float(self.variance_explained.sum())

    @property
    def projector(self) -> np.ndarray:
        return self.components.T @ self.components

    def transform(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) @ self.components.T

    def reconstruct(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) @ self.components + self.mean


def pca_reduce(X, k: int, center: bool = True) -> PCAResult:
    """Principal components of a ``samples x features`` matrix.

    Components come out ordered by decreasing variance.  Asking for more
    components than the data rank truncates ``k`` to the rank.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be a samples x features matrix")
    n, f = X.shape
    if k > f:
        raise ValueError(f"k={k} exceeds feature count {f}")
    mean = X.mean(axis=0) if center else np.zeros(f)
    Xc = X - mean
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    variances = s ** 2 / max(n - 1, 1)
    tol = s[0] * max(n, f) * np.finfo(float).eps if s.size else 0.0
    rank = int((s > tol).sum())
    if k > rank:
        log.warning("requested %d components but data rank is %d; truncating", k, rank)
        k = rank
    full = np.zeros(f)
    full[:variances.size] = variances
    return PCAResult(mean=mean, components=vt[:k].copy(), variances=full, k=k)
