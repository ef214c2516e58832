"""Perturbed-cycle experiments on a plant, and the measurement step that
turns a raw record into smoothed shapes, shape velocities and body velocities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se2
from .plants import Trajectory, simulate
from .signals import finite_diff, zero_phase_lowpass
from .waveforms import ParamBox, synth_waveform, sample_params


def perturbed_record(plant, box: ParamBox, n_cycles: int, dt: float, seed=None,
                     warmup: int = 2, params=None) -> Trajectory:
    """Simulate ``n_cycles`` consecutive cycles with freshly drawn parameters.

    ``warmup`` cycles at the box centre run first so the record starts near
    the orbit; they are cut from the returned trajectory, whose time and
    schedule restart at zero.
    """
    if params is None:
        params = sample_params(box, n_cycles, seed)
    centre = box.make(box.center)
    seq = [centre] * warmup + list(params)
    full = simulate(synth_waveform(seq, dt), plant)
    i0 = int(round(full.cycle_starts[warmup] / dt))
    t0 = i0 * dt
    tr = full.slice(i0, len(full.t))
    tr.t = tr.t - t0
    tr.g = se2.relative(tr.g[0], tr.g)
    tr.cycle_starts = full.cycle_starts[warmup:] - t0
    tr.params = list(params)
    return tr


@dataclass
class Measurement:
    """Smoothed, differentiated view of a trajectory as a sensor would give it."""

    t: np.ndarray
    u: np.ndarray
    r: np.ndarray
    r_dot: np.ndarray
    xi: np.ndarray
    g: np.ndarray


def measure(traj: Trajectory, cutoff: float | None = None, order: int = 2,
            fundamental: float | None = None) -> Measurement:
    """Zero-phase low-pass the input, shape and pose, then finite-difference them.

    The input goes through the same filter so that regressions relating it
    to the smoothed shape see matching bandwidths.

    The default cutoff is ten times the forcing fundamental (taken from the
    mean commanded period when the trajectory has a schedule).
    """
    dt = traj.dt
    if cutoff is None:
        if fundamental is None:
            if traj.cycle_starts is None:
                raise ValueError("need a cutoff or a cycle schedule to default it")
            fundamental = 1.0 / float(np.mean(np.diff(traj.cycle_starts)))
        cutoff = min(10.0 * fundamental, 0.45 / dt)
    r = zero_phase_lowpass(traj.r, cutoff, dt, order)
    u = zero_phase_lowpass(traj.u, cutoff, dt, order)
    pose = np.column_stack([traj.g[:, 0], traj.g[:, 1], np.unwrap(traj.g[:, 2])])
    pose = zero_phase_lowpass(pose, cutoff, dt, order)
    xi = se2.body_velocity_from_poses(pose, dt)
    g = np.column_stack([pose[:, :2], se2.wrap_angle(pose[:, 2])])
    return Measurement(t=traj.t, u=u, r=r, r_dot=finite_diff(r, dt), xi=xi, g=g)
