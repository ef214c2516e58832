"""Optional figures rendered from exported plot tables.

Each renderer takes the header and data of a table written by
``export_plot_data`` and saves a PNG.  The non-interactive Agg backend is
selected so this works on headless machines.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _col(header, data, name):
    return data[:, header.index(name)]


def _shape_space_loop(ax, header, data):
    cyc = _col(header, data, "cycle")
    r1, r2 = _col(header, data, "r1"), _col(header, data, "r2")
    for k in np.unique(cyc):
        s = cyc == k
        ax.plot(r1[s], r2[s], color="0.6", lw=0.6)
    ax.set_xlabel(r"$r_1$ (rad)")
    ax.set_ylabel(r"$r_2$ (rad)")
    ax.set_aspect("equal", adjustable="datalim")


def _input_cycles(ax, header, data):
    cyc = _col(header, data, "cycle")
    tc, u = _col(header, data, "t_in_cycle"), _col(header, data, "u")
    for k in np.unique(cyc):
        s = cyc == k
        ax.plot(tc[s], u[s], color="0.5", lw=0.6)
    ax.set_xlabel("time in cycle")
    ax.set_ylabel("input")


def _phase_error(ax, header, data):
    phi = _col(header, data, "phi")
    order = np.argsort(phi)
    bins = np.linspace(0, 2 * np.pi, 33)
    idx = np.clip(np.digitize(phi[order], bins) - 1, 0, 31)
    mid = 0.5 * (bins[1:] + bins[:-1])
    for name, style in (("xi_err_model", "C0-"), ("xi_err_baseline", "C0--"),
                        ("rdot_err_model", "C1-"), ("rdot_err_baseline", "C1--")):
        v = _col(header, data, name)[order]
        mean = np.array([v[idx == b].mean() if np.any(idx == b) else np.nan for b in range(32)])
        ax.plot(mid, mean, style, label=name.replace("_err_", " "))
    ax.set_xlabel("phase (rad)")
    ax.set_ylabel("mean error norm")
    ax.legend(fontsize=7)


def _iteration_objective(ax, header, data):
    it = _col(header, data, "iteration") + 1
    ax.plot(it, _col(header, data, "mean_displacement"), "o-", label="mean sampled dx")
    ax.plot(it, _col(header, data, "F_plant"), "s--", label="verified F at optimum")
    ax.set_xlabel("iteration")
    ax.set_ylabel("displacement per cycle")
    ax.set_xticks(it)
    ax.legend(fontsize=7)


RENDERERS = {
    "shape_space_loop": _shape_space_loop,
    "input_cycles": _input_cycles,
    "phase_error": _phase_error,
    "iteration_objective": _iteration_objective,
}


def render(kind: str, header, data, path) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 3.5), constrained_layout=True)
    try:
        RENDERERS[kind](ax, list(header), np.asarray(data))
        fig.savefig(path, dpi=150)
    finally:
        plt.close(fig)
