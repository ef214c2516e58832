"""Trapezoidal thermal-cycle inputs, parameter boxes and box shrinking.

Two waveform families are supported:

* ``CycleParams4`` -- ``(T_low, T_high, t_cycle, eta_ramp)``.  A period starts
  at ``T_low``, ramps up for ``eta_ramp * t_cycle / 2``, holds at ``T_high``,
  ramps down for the same time and holds at ``T_low``.
* ``CycleParams6`` -- ``(T_low, T_high, t_cool, t_heat, eta_cool, eta_heat)``.
  A period starts with the cooling span (ramp of ``eta_cool * t_cool`` down
  to ``T_low``, then hold) followed by the heating span.

When consecutive cycles use different parameters the first ramp of a cycle
starts from wherever the previous cycle ended, so the signal stays
continuous.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, astuple
from typing import Sequence, Union

import numpy as np

MIN_RAMP_SAMPLES = 4


@dataclass(frozen=True)
class CycleParams4:
    T_low: float
    T_high: float
    t_cycle: float
    eta_ramp: float

    family = "cycle4"

    def __post_init__(self):
        if not self.T_low < self.T_high:
            raise ValueError(f"T_low={self.T_low} must be below T_high={self.T_high}")
        if not self.t_cycle > 0:
            raise ValueError("t_cycle must be positive")
        if not 0 < self.eta_ramp <= 1:
            raise ValueError(f"eta_ramp={self.eta_ramp} outside (0, 1]")

    @property
    def period(self) -> float:
        return self.t_cycle

    @property
    def ramps(self) -> tuple[float, float]:
        t_ramp = 0.5 * self.eta_ramp * self.t_cycle
        return t_ramp, t_ramp

    def knots(self, start: float | None = None):
        """Knot times/levels for one period, relative to the cycle start."""
        u0 = self.T_low if start is None else start
        tr = 0.5 * self.eta_ramp * self.t_cycle
        half = 0.5 * self.t_cycle
        return ([0.0, tr, half, half + tr, self.t_cycle],
                [u0, self.T_high, self.T_high, self.T_low, self.T_low])

    @property
    def end_level(self) -> float:
        return self.T_low


@dataclass(frozen=True)
class CycleParams6:
    T_low: float
    T_high: float
    t_cool: float
    t_heat: float
    eta_cool: float
    eta_heat: float

    family = "cycle6"

    def __post_init__(self):
        if not self.T_low < self.T_high:
            raise ValueError(f"T_low={self.T_low} must be below T_high={self.T_high}")
        if not (self.t_cool > 0 and self.t_heat > 0):
            raise ValueError("cooling and heating spans must be positive")
        for name in ("eta_cool", "eta_heat"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name}={v} outside (0, 1]")

    @property
    def period(self) -> float:
        return self.t_cool + self.t_heat

    # the optimizer penalizes total cycle time under the same name for both families
    @property
    def t_cycle(self) -> float:
        return self.period

    @property
    def ramps(self) -> tuple[float, float]:
        return self.eta_cool * self.t_cool, self.eta_heat * self.t_heat

    def knots(self, start: float | None = None):
        u0 = self.T_high if start is None else start
        rc, rh = self.ramps
        return ([0.0, rc, self.t_cool, self.t_cool + rh, self.period],
                [u0, self.T_low, self.T_low, self.T_high, self.T_high])

    @property
    def end_level(self) -> float:
        return self.T_high


CycleParams = Union[CycleParams4, CycleParams6]
FAMILIES = {"cycle4": CycleParams4, "cycle6": CycleParams6}


def param_names(family: str) -> tuple[str, ...]:
    return tuple(f.name for f in fields(FAMILIES[family]))


def params_to_array(p: CycleParams) -> np.ndarray:
    return np.array(astuple(p), dtype=float)


def params_from_array(family: str, x) -> CycleParams:
    return FAMILIES[family](*(float(v) for v in x))


@dataclass
class InputSeries:
    """Sampled input plus the commanded cycle schedule that produced it."""

    t: np.ndarray
    u: np.ndarray
    cycle_starts: np.ndarray        # n_cycles + 1 boundaries, last one is the end
    params: list = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def n_cycles(self) -> int:
        return len(self.cycle_starts) - 1


def waveform_knots(params_seq: Sequence[CycleParams]):
    """Concatenated piecewise-linear knots for a sequence of cycles."""
    tk, uk = [], []
    t0 = 0.0
    level = None
    starts = [0.0]
    for p in params_seq:
        kt, ku = p.knots(level)
        tk.extend(t0 + np.asarray(kt) if not tk else (t0 + np.asarray(kt))[1:])
        uk.extend(ku if len(uk) == 0 else ku[1:])
        t0 += p.period
        starts.append(t0)
        level = p.end_level
    return np.asarray(tk, dtype=float), np.asarray(uk, dtype=float), np.asarray(starts)


def synth_waveform(params: CycleParams | Sequence[CycleParams], dt: float,
                   n_cycles: int | None = None) -> InputSeries:
    """Sample the trapezoidal input on a uniform grid of spacing ``dt``.

    ``params`` is either one parameter set (repeated ``n_cycles`` times) or a
    per-cycle sequence.
    """
    if isinstance(params, (CycleParams4, CycleParams6)):
        seq = [params] * (1 if n_cycles is None else int(n_cycles))
    else:
        seq = list(params)
        if n_cycles is not None and n_cycles != len(seq):
            raise ValueError("n_cycles does not match the per-cycle parameter list")
    if not seq:
        raise ValueError("no cycles requested")
    if not dt > 0:
        raise ValueError("dt must be positive")
    shortest = min(min(p.ramps) for p in seq)
    if shortest < MIN_RAMP_SAMPLES * dt * (1 - 1e-9):
        raise ValueError(f"dt={dt} too coarse for the shortest ramp ({shortest:.4g}); "
                         f"need at least {MIN_RAMP_SAMPLES} samples per ramp")
    tk, uk, starts = waveform_knots(seq)
    n = int(np.floor(starts[-1] / dt + 1e-9))
    t = np.arange(n + 1) * dt
    return InputSeries(t=t, u=np.interp(t, tk, uk), cycle_starts=starts, params=seq)


# ---------------------------------------------------------------------------
# parameter boxes

@dataclass
class ParamBox:
    """Axis-aligned sampling box inside a fixed admissible range."""

    family: str
    lo: np.ndarray
    hi: np.ndarray
    full_lo: np.ndarray = None
    full_hi: np.ndarray = None

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.full_lo = self.lo.copy() if self.full_lo is None else np.asarray(self.full_lo, dtype=float)
        self.full_hi = self.hi.copy() if self.full_hi is None else np.asarray(self.full_hi, dtype=float)
        n = len(self.names)
        for a in (self.lo, self.hi, self.full_lo, self.full_hi):
            if a.shape != (n,):
                raise ValueError(f"{self.family} boxes need {n} bounds per side")
        if np.any(self.lo >= self.hi):
            raise ValueError("every box coordinate needs lo < hi")
        eps = 1e-12 * np.maximum(1.0, np.abs(self.full_hi - self.full_lo))
        if np.any(self.lo < self.full_lo - eps) or np.any(self.hi > self.full_hi + eps):
            raise ValueError("box extends outside the admissible range")

    @property
    def names(self) -> tuple[str, ...]:
        return param_names(self.family)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        slack = tol * np.maximum(1.0, self.width)
        return bool(np.all(x >= self.lo - slack) and np.all(x <= self.hi + slack))

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.lo) / self.width

    def from_unit(self, z) -> np.ndarray:
        return self.lo + np.asarray(z, dtype=float) * self.width

    def make(self, x) -> CycleParams:
        return params_from_array(self.family, x)

    def to_dict(self) -> dict:
        return {"family": self.family,
                "bounds": {n: [float(a), float(b)] for n, a, b in zip(self.names, self.lo, self.hi)},
                "full": {n: [float(a), float(b)] for n, a, b in zip(self.names, self.full_lo, self.full_hi)}}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamBox":
        family = d["family"]
        if family not in FAMILIES:
            raise ValueError(f"unknown waveform family {family!r}")
        names = param_names(family)
        unknown = set(d["bounds"]) - set(names)
        if unknown:
            raise ValueError(f"unknown box parameter(s): {', '.join(sorted(unknown))}")
        lo = [d["bounds"][n][0] for n in names]
        hi = [d["bounds"][n][1] for n in names]
        full = d.get("full") or d["bounds"]
        return cls(family, lo, hi, [full[n][0] for n in names], [full[n][1] for n in names])


_BUILTIN = {
    # hydrogel crawler ranges (temperatures in C, spans in hours)
    "hydrogel-full": ("cycle6", [20.0, 45.0, 2.0, 0.5, 1 / 32, 1 / 32],
                      [41.0, 65.0, 8.0, 3.0, 1.0, 1.0]),
    # swimmer defaults: temperatures normalized to [-1, 1], time in units of 1/c_1
    "swimmer-full": ("cycle4", [-1.0, 0.2, 2.0, 1 / 32], [-0.2, 1.0, 8.0, 1.0]),
}


def builtin_box(name: str) -> ParamBox:
    try:
        family, lo, hi = _BUILTIN[name]
    except KeyError:
        raise ValueError(f"unknown built-in box {name!r}; choose from {sorted(_BUILTIN)}") from None
    return ParamBox(family, lo, hi)


def sample_params(box: ParamBox, n: int, seed=None) -> list:
    """``n`` independent uniform draws from the box (seed or Generator)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    X = rng.uniform(box.lo, box.hi, size=(int(n), len(box.names)))
    return [box.make(x) for x in X]


def shrink_box(box: ParamBox, center, factor: float) -> ParamBox:
    """Shrink every coordinate's width by ``factor`` about ``center``.

    The new window is shifted inward when it would cross the admissible
    range, so its width is kept whenever the range allows.
    """
    if not 0 <= factor < 1:
        raise ValueError("shrink factor must lie in [0, 1)")
    c = params_to_array(center) if not isinstance(center, np.ndarray) else np.asarray(center, float)
    if np.any(c < box.full_lo - 1e-12) or np.any(c > box.full_hi + 1e-12):
        raise ValueError("shrink center lies outside the admissible range")
    if factor == 0:
        return ParamBox(box.family, box.lo.copy(), box.hi.copy(), box.full_lo, box.full_hi)
    full_w = box.full_hi - box.full_lo
    w = np.minimum(box.width * (1.0 - factor), full_w)
    lo = c - 0.5 * w
    hi = c + 0.5 * w
    shift_up = np.clip(box.full_lo - lo, 0.0, None)
    shift_dn = np.clip(hi - box.full_hi, 0.0, None)
    lo, hi = lo + shift_up - shift_dn, hi + shift_up - shift_dn
    lo = np.maximum(lo, box.full_lo)
    hi = np.minimum(hi, box.full_hi)
    return ParamBox(box.family, lo, hi, box.full_lo, box.full_hi)
