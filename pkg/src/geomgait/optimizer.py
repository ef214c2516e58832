"""Gait optimization over waveform parameters with a fitted model.

The objective for one steady cycle is its forward displacement minus a
penalty on cycle time,

    F = dx - lam * t_cycle,

where ``dx`` is the x displacement over the cycle in the body frame at the
cycle start.  ``optimize_box`` maximizes F inside a parameter box with SLSQP
working in box-normalized coordinates and finite-difference gradients, and
``iterate_refine`` alternates sampling, fitting and optimizing while
shrinking the box about each plant-verified optimum.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import se2
from .datasets import perturbed_record
from .gait_model import GaitModel
from .plants import cycle_displacement, simulate
from .prediction import PipelineConfig, cross_validate, fit_model, predict, prepare
from .waveforms import ParamBox, params_to_array, sample_params, shrink_box, synth_waveform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Objective:
    """``F = dx - lam * t_cycle`` for a displacement evaluator ``dx(params)``."""

    displacement: object
    lam: float = 0.0

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")

    def value(self, dx: float, t_cycle: float) -> float:
        return dx - self.lam * t_cycle

    def __call__(self, params) -> float:
        return self.value(self.displacement(params), params.t_cycle)


SAMPLES_PER_CYCLE = 1024


def _cycle_input(params, warmup: int, samples_per_cycle: int):
    # a fixed sample count per cycle keeps the objective continuous in t_cycle
    dt = params.period / samples_per_cycle
    return synth_waveform(params, dt, n_cycles=warmup + 1), dt


def model_displacement(model: GaitModel, params, warmup: int = 1,
                       samples_per_cycle: int = SAMPLES_PER_CYCLE) -> float:
    """Predicted x displacement over one cycle after ``warmup`` cycles of the same input."""
    inp, dt = _cycle_input(params, warmup, samples_per_cycle)
    pred = predict(model, inp.u, dt, cycle_starts=inp.cycle_starts)
    i0 = warmup * samples_per_cycle
    return float(se2.relative(pred.g_hat[i0], pred.g_hat[-1])[0])


def plant_displacement(plant, params, warmup: int = 4,
                       samples_per_cycle: int = SAMPLES_PER_CYCLE) -> float:
    """Simulated x displacement over the last of ``warmup + 1`` identical cycles."""
    inp, _ = _cycle_input(params, warmup, samples_per_cycle)
    return float(cycle_displacement(simulate(inp, plant), -1)[0])


def objective_eval(model: GaitModel, params, lam: float = 0.0, warmup: int = 1,
                   samples_per_cycle: int = SAMPLES_PER_CYCLE) -> float:
    """Model-predicted ``F`` for one steady cycle of ``params``."""
    return Objective(lambda p: model_displacement(model, p, warmup, samples_per_cycle), lam)(params)


# ---------------------------------------------------------------------------
# derivatives and box-constrained search

def fd_gradient(f, x, h=1e-3, lo=None, hi=None) -> np.ndarray:
    """Finite-difference gradient of a scalar function.

    Central differences are used where ``x +- h`` stays inside ``[lo, hi]``;
    coordinates closer than ``h`` to a bound get a one-sided difference
    pointing into the box.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    h = np.broadcast_to(np.asarray(h, dtype=float), (n,))
    lo = np.full(n, -np.inf) if lo is None else np.broadcast_to(np.asarray(lo, float), (n,))
    hi = np.full(n, np.inf) if hi is None else np.broadcast_to(np.asarray(hi, float), (n,))
    f0 = None
    grad = np.empty(n)
    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        up, down = x[i] + h[i] <= hi[i], x[i] - h[i] >= lo[i]
        if up and down:
            fp, fm = f(x + e), f(x - e)
            d = (fp - fm) / (2 * h[i])
        else:
            if f0 is None:
                f0 = f(x)
            d = (f(x + e) - f0) / h[i] if up else (f0 - f(x - e)) / h[i]
        if not np.isfinite(d):
            raise FloatingPointError(f"non-finite objective near coordinate {i}")
        grad[i] = d
    return grad


class _Converged(Exception):
    pass


def _snap(z, tol: float = 1e-10) -> np.ndarray:
    # SLSQP lands a few ulps inside active bounds; put such points on the bound
    z = np.clip(z, 0.0, 1.0)
    return np.where(z < tol, 0.0, np.where(z > 1.0 - tol, 1.0, z))


@dataclass
class OptimizeResult:
    x: np.ndarray
    F: float
    x0: np.ndarray
    F0: float
    trace: list                       # (unit-coordinate iterate, F) per accepted step
    n_iter: int
    n_eval: int
    status: str


def optimize_box(f, box: ParamBox, x0=None, h: float = 1e-3, step_tol: float = 1e-6,
                 max_iter: int = 200) -> OptimizeResult:
    """Maximize ``f(params)`` over ``box`` starting from ``x0`` (default: centre).

    The search runs on ``z = (x - lo) / width`` in the unit cube, so rescaling a
    coordinate together with its box does not change the path.  It stops when
    an SLSQP step moves less than ``step_tol`` in unit coordinates or after
    ``max_iter`` iterations; the best point seen (never worse than ``x0``) is
    returned, clipped exactly into the box.
    """
    x0 = box.center if x0 is None else np.asarray(x0, dtype=float)
    if not box.contains(x0):
        raise ValueError("start point lies outside the box")
    z0 = np.clip(box.to_unit(x0), 0.0, 1.0)
    cache = {}

    def neg(z):
        z = _snap(z)
        key = z.tobytes()
        if key not in cache:
            cache[key] = -float(f(box.make(box.from_unit(z))))
        return cache[key]

    def jac(z):
        return fd_gradient(neg, _snap(z), h, 0.0, 1.0)

    F0 = -neg(z0)
    trace = [(z0.copy(), F0)]
    best = [z0.copy(), F0]

    def callback(zk):
        zk = _snap(zk)
        Fk = -neg(zk)
        step = float(np.max(np.abs(zk - trace[-1][0])))
        trace.append((zk.copy(), Fk))
        if Fk > best[1]:
            best[:] = [zk.copy(), Fk]
        if step < step_tol:
            raise _Converged

    status = "converged"
    try:
        res = minimize(neg, z0, jac=jac, method="SLSQP", bounds=[(0.0, 1.0)] * len(z0),
                       callback=callback,
                       options={"maxiter": max_iter, "ftol": 1e-12})
        zr = _snap(res.x)
        Fr = -neg(zr)
        if Fr > best[1]:
            best[:] = [zr, Fr]
        if not res.success:
            status = f"stopped: {res.message}"
    except _Converged:
        pass
    x_star = np.clip(box.from_unit(best[0]), box.lo, box.hi)
    return OptimizeResult(x=x_star, F=float(best[1]), x0=box.from_unit(z0), F0=F0,
                          trace=trace, n_iter=len(trace) - 1, n_eval=len(cache), status=status)


# ---------------------------------------------------------------------------
# iterative refinement

@dataclass
class IterationRecord:
    iteration: int
    box: dict
    seed: int
    sampled: list                     # parameter vectors, one per sampled cycle
    model: object                     # GaitModel, or a path once persisted
    x0: list
    x_star: list
    dx_pred: float
    F_pred: float
    dx_plant: float
    F_plant: float
    t_cycle: float
    lam: float
    accepted: bool
    gamma: dict
    mean_sample_dx: float
    n_iter: int
    status: str
    seconds: float

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["model"] = self.model if isinstance(self.model, str) else None
        return d


@dataclass
class OptimizationHistory:
    lam: float
    shrink_factor: float
    iterations: list = field(default_factory=list)

    def __len__(self):
        return len(self.iterations)

    @property
    def verified(self) -> np.ndarray:
        return np.array([it.F_plant for it in self.iterations])

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "shrink_factor": self.shrink_factor,
                "width_ratio": 1.0 - self.shrink_factor,
                "iterations": [it.to_dict() for it in self.iterations]}


def auto_lambda(traj, scale: float = 0.1) -> float:
    """``scale`` times the mean ``|dx| / t_cycle`` over the cycles of a sampled record."""
    rates = [abs(float(cycle_displacement(traj, k)[0])) / p.t_cycle
             for k, p in enumerate(traj.params)]
    return scale * float(np.mean(rates))


def iterate_refine(plant, full_box: ParamBox, n_iters: int = 3, n_samples: int = 100,
                   lam: float | None = None, seed=0, dt: float = 1 / 128,
                   shrink_factor: float = 0.35, cfg: PipelineConfig | None = None,
                   cross_val: bool = True, verify_warmup: int = 4,
                   keep_best: bool = True) -> OptimizationHistory:
    """Alternate sampling, model fitting and box-constrained optimization.

    Every iteration draws ``n_samples`` cycles from the current box, simulates
    them back to back on the plant, fits and cross-validates a gait model,
    optimizes the model objective (from the box centre first, then from the
    previous optimum), checks the optimum on the plant and shrinks the box
    about it.  With ``keep_best`` an optimum whose verified objective is worse
    than the best so far is recorded but not used as the next centre.

    ``lam=None`` picks the penalty from the first iteration's samples
    (see ``auto_lambda``).  ``seed`` feeds a ``SeedSequence`` that is split
    into one child per iteration.
    """
    cfg = cfg or PipelineConfig()
    children = np.random.SeedSequence(seed).spawn(n_iters)
    box = full_box
    history = None
    x_prev = None
    best_x, best_F = None, -np.inf
    for i in range(n_iters):
        t0 = time.perf_counter()
        it_seed = int(children[i].generate_state(1)[0])
        params = sample_params(box, n_samples, it_seed)
        traj = perturbed_record(plant, box, n_samples, dt, params=params)
        if lam is None:
            lam = auto_lambda(traj)
            log.info("auto lambda %.4g", lam)
        if history is None:
            history = OptimizationHistory(lam=float(lam), shrink_factor=shrink_factor)
        prep = prepare(traj, cfg)
        model = fit_model(prep, cfg)
        gamma = cross_validate(prep, cfg, seed=it_seed).summary() if cross_val else {}
        mean_dx = float(np.mean([cycle_displacement(traj, k)[0] for k in range(traj.n_cycles)]))

        x0 = box.center if x_prev is None else np.clip(x_prev, box.lo, box.hi)
        obj = Objective(lambda p: model_displacement(model, p), lam)
        res = optimize_box(obj, box, x0)
        p_star = box.make(res.x)
        dx_pred = model_displacement(model, p_star)
        dx_plant = plant_displacement(plant, p_star, verify_warmup)
        F_plant = obj.value(dx_plant, p_star.t_cycle)
        accepted = (not keep_best) or F_plant >= best_F
        if accepted:
            best_x, best_F = res.x.copy(), F_plant
        history.iterations.append(IterationRecord(
            iteration=i, box=box.to_dict(), seed=it_seed,
            sampled=[params_to_array(p).tolist() for p in params], model=model,
            x0=x0.tolist(), x_star=res.x.tolist(), dx_pred=dx_pred,
            F_pred=obj.value(dx_pred, p_star.t_cycle), dx_plant=dx_plant, F_plant=F_plant,
            t_cycle=p_star.t_cycle, lam=float(lam), accepted=accepted, gamma=gamma,
            mean_sample_dx=mean_dx, n_iter=res.n_iter, status=res.status,
            seconds=time.perf_counter() - t0))
        log.info("iteration %d: F_pred %.5g F_plant %.5g x* %s", i, history.iterations[-1].F_pred,
                 F_plant, np.array2string(res.x, precision=4))
        x_prev = best_x
        if i + 1 < n_iters:
            box = shrink_box(box, best_x, shrink_factor)
    return history
