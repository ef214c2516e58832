"""Command-line entry point.

    geomgait simulate  -o traj.csv
    geomgait fit       --traj traj.csv -o model.json
    geomgait predict   --model model.json --traj traj.csv -o pred.csv
    geomgait evaluate  --traj traj.csv -o evaluation.json
    geomgait optimize  --model model.json -o optimum.json
    geomgait iterate   -o history.json
    geomgait export    --kind shape_space_loop --artifact traj.csv

Every run writes ``<output>.manifest.json`` next to its main output.  A
manifest is also a valid ``--config``, which replays the run's settings.

Exit status: 0 success, 2 invalid configuration, 3 missing or mismatched
artifact, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .datasets import perturbed_record
from .experiment import (EVAL_FORMAT, HISTORY_FORMAT, PLOT_KINDS, ConfigError, ExperimentConfig,
                         RunManifest, default_export_path, export_plot_data, set_override)
from .optimizer import (IterationRecord, Objective, OptimizationHistory, auto_lambda,
                        iterate_refine, model_displacement, optimize_box, plant_displacement)
from .prediction import (cross_validate, fit_model, gamma_metric, baseline_predict, predict,
                         prepare)
from .waveforms import sample_params

log = logging.getLogger("geomgait")

EXIT_OK, EXIT_CONFIG, EXIT_ARTIFACT, EXIT_NUMERIC = 0, 2, 3, 4


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")


def _stage(name, fn, *args, **kwargs):
    """Run one numerical stage; anything but artifact/config errors becomes exit 4."""
    try:
        return fn(*args, **kwargs)
    except (ConfigError, io.ArtifactError):
        raise
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _manifest_path(out) -> Path:
    p = io.resolve(out)
    return p.with_name(p.name + ".manifest.json")


def _sibling(out, suffix) -> Path:
    p = io.resolve(out)
    return p.with_name(p.stem + suffix)


def _figure(kind, table_path, enabled):
    if not enabled:
        return None
    from .plotting import render
    header, data = io.read_table(table_path)
    png = Path(table_path).with_suffix(".png")
    render(kind, header, data, png)
    return png


def _export(artifact, kind, out, figures, manifest):
    header, data = export_plot_data(artifact, kind)
    path = io.write_table(out, header, [data[:, i] for i in range(data.shape[1])])
    manifest.add_output(path)
    png = _figure(kind, path, figures)
    if png:
        manifest.add_output(png)
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(args, cfg: ExperimentConfig, man: RunManifest):
    seed = man.stage_seeds["simulate"] = cfg.stage_seed("simulate")
    box = cfg.make_box()
    params = sample_params(box, cfg.data.n_cycles, seed)
    traj = _stage("simulate", perturbed_record, cfg.make_plant(), box, cfg.data.n_cycles,
                  cfg.data.dt, warmup=cfg.data.warmup, params=params)
    out = io.save_trajectory(args.out, traj, {"plant": cfg.plant.name, "seed": seed})
    man.add_output(out)
    man.add_output(out.with_name(out.name + ".json"))
    for kind in ("shape_space_loop", "input_cycles") if args.figures else ():
        _export(out, kind, default_export_path(out, kind), True, man)
    man.summary = {"rows": len(traj.t), "cycles": traj.n_cycles}
    return out


def _finite_max(a):
    # mean-only windows carry an infinite condition number; JSON has no infinity
    a = np.asarray(a, dtype=float)
    a = a[np.isfinite(a)]
    return float(a.max()) if a.size else None


def cmd_fit(args, cfg, man):
    traj = io.load_trajectory(args.traj)
    man.add_input(io.resolve(args.traj))
    prep = _stage("phase", prepare, traj, cfg.pipeline)
    model = _stage("fit", fit_model, prep, cfg.pipeline)
    out = io.save_model(args.out, model)
    man.add_output(out)
    body, act = model.body, model.actuator
    report = {
        "samples": model.meta["n_samples"], "windows": model.M, "K": model.K,
        "phase_source": cfg.pipeline.phase_source,
        "phase_rate": model.limit_cycle.phase_rate,
        "body_cond_max": _finite_max(body.cond),
        "body_ridge_windows": int(np.sum(np.isfinite(body.cond) & (body.cond > cfg.pipeline.cond_max))),
        "body_mean_only_windows": int(np.sum(~np.isfinite(body.cond))),
        "actuator_cond_max": _finite_max(act.cond),
        "actuator_mean_only_windows": int(np.sum(~np.isfinite(act.cond))),
        "E_r_window_mean": act.E_r.mean(axis=0), "E_u_window_mean": act.E_u.mean(axis=0),
    }
    rep = io.save_document(_sibling(out, ".report.json"), report)
    man.add_output(rep)
    man.summary = {"E_r_diag": np.diag(report["E_r_window_mean"]).tolist(),
                   "E_u": report["E_u_window_mean"][:, 0].tolist()}
    return out


def cmd_predict(args, cfg, man):
    model = io.load_model(args.model)
    traj = io.load_trajectory(args.traj)
    man.add_input(io.resolve(args.model))
    man.add_input(io.resolve(args.traj))
    if traj.cycle_starts is None:
        raise io.ArtifactError(f"{args.traj} carries no cycle schedule")
    pred = _stage("predict", predict, model, traj.u, traj.dt, cycle_starts=traj.cycle_starts,
                  integrator=cfg.pipeline.integrator)
    base = baseline_predict(model, traj.u, traj.dt, cycle_starts=traj.cycle_starts)
    out = io.save_prediction(args.out, pred)
    man.add_output(out)
    man.summary = {"gamma_rdot": gamma_metric(pred.r_dot_hat, base.r_dot_hat, traj.r_dot),
                   "gamma_xi": gamma_metric(pred.xi_hat, base.xi_hat, traj.xi),
                   "final_pose": pred.g_hat[-1].tolist(), "true_final_pose": traj.g[-1].tolist()}
    return out


def cmd_evaluate(args, cfg, man):
    traj = io.load_trajectory(args.traj)
    man.add_input(io.resolve(args.traj))
    seed = man.stage_seeds["evaluate"] = cfg.stage_seed("evaluate")
    prep = _stage("phase", prepare, traj, cfg.pipeline)
    rep = _stage("cross-validate", cross_validate, prep, cfg.pipeline, seed=seed)
    out = io.resolve(args.out)
    table = io.write_table(_sibling(out, ".phase_error.csv"),
                           ["fold", "phi", "rdot_err_model", "rdot_err_baseline",
                            "xi_err_model", "xi_err_baseline"],
                           [rep.phase_error[:, i] for i in range(rep.phase_error.shape[1])])
    doc = {"format": EVAL_FORMAT, "norm": "euclidean", "folds": cfg.pipeline.folds,
           "seed": seed, "phase_error_table": table.name, **rep.to_dict()}
    io.save_document(out, doc)
    man.add_output(out)
    man.add_output(table)
    png = _figure("phase_error", table, args.figures)
    if png:
        man.add_output(png)
    man.summary = rep.summary()
    return out


def cmd_optimize(args, cfg, man):
    model = io.load_model(args.model)
    man.add_input(io.resolve(args.model))
    box, plant, oc = cfg.make_box(), cfg.make_plant(), cfg.optimizer
    lam = oc.lam
    if lam is None:
        if args.traj is None:
            lam = 0.0
            log.warning("optimizer.lam is null and no --traj given; using lambda = 0")
        else:
            lam = auto_lambda(io.load_trajectory(args.traj))
            man.add_input(io.resolve(args.traj))
    obj = Objective(lambda p: model_displacement(model, p, samples_per_cycle=oc.samples_per_cycle), lam)
    t0 = time.perf_counter()
    res = _stage("optimize", optimize_box, obj, box, None, oc.h, oc.step_tol, oc.max_iter)
    p = box.make(res.x)
    dx_pred = model_displacement(model, p, samples_per_cycle=oc.samples_per_cycle)
    dx_plant = _stage("verify", plant_displacement, plant, p, oc.verify_warmup, oc.samples_per_cycle)
    hist = OptimizationHistory(lam=float(lam), shrink_factor=oc.shrink_factor)
    hist.iterations.append(IterationRecord(
        iteration=0, box=box.to_dict(), seed=0, sampled=[], model=str(args.model),
        x0=res.x0.tolist(), x_star=res.x.tolist(), dx_pred=dx_pred,
        F_pred=obj.value(dx_pred, p.t_cycle), dx_plant=dx_plant,
        F_plant=obj.value(dx_plant, p.t_cycle), t_cycle=p.t_cycle, lam=float(lam),
        accepted=True, gamma={}, mean_sample_dx=None, n_iter=res.n_iter,
        status=res.status, seconds=time.perf_counter() - t0))
    out = io.save_document(args.out, {"format": HISTORY_FORMAT, **hist.to_dict()})
    man.add_output(out)
    man.summary = {"x_star": res.x.tolist(), "F_pred": hist.iterations[0].F_pred,
                   "F_plant": hist.iterations[0].F_plant}
    return out


def cmd_iterate(args, cfg, man):
    seed = man.stage_seeds["iterate"] = cfg.stage_seed("iterate")
    oc = cfg.optimizer
    hist = _stage("iterate", iterate_refine, cfg.make_plant(), cfg.make_box(), n_iters=oc.n_iters,
                  n_samples=oc.n_samples, lam=oc.lam, seed=seed, dt=cfg.data.dt,
                  shrink_factor=oc.shrink_factor, cfg=cfg.pipeline,
                  verify_warmup=oc.verify_warmup, keep_best=oc.keep_best)
    out = io.resolve(args.out)
    for it in hist.iterations:
        mpath = io.save_model(_sibling(out, f".model{it.iteration}.json"), it.model)
        man.add_output(mpath)
        it.model = mpath.name
    io.save_document(out, {"format": HISTORY_FORMAT, **hist.to_dict()})
    man.add_output(out)
    if args.figures:
        _export(out, "iteration_objective", default_export_path(out, "iteration_objective"), True, man)
    man.summary = {"lambda": hist.lam, "F_plant": hist.verified.tolist(),
                   "x_star": [it.x_star for it in hist.iterations]}
    return out


def cmd_export(args, cfg, man):
    man.add_input(io.resolve(args.artifact))
    out = args.out or default_export_path(args.artifact, args.kind)
    path = _export(args.artifact, args.kind, out, args.figures, man)
    man.summary = {"kind": args.kind, "table": str(path)}
    return path


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "predict": cmd_predict,
            "evaluate": cmd_evaluate, "optimize": cmd_optimize, "iterate": cmd_iterate,
            "export": cmd_export}


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config or run manifest (JSON)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. pipeline.M=32 (repeatable)")
    common.add_argument("--figures", action="store_true",
                        help="also render PNG figures next to the plot tables")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="geomgait", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="simulate perturbed cycles on the plant")
    s.add_argument("-o", "--out", default="trajectory.csv")
    s = sub.add_parser("fit", parents=[common], help="fit phase and gait model to a trajectory")
    s.add_argument("--traj", required=True)
    s.add_argument("-o", "--out", default="model.json")
    s = sub.add_parser("predict", parents=[common], help="predict a trajectory's response from its input")
    s.add_argument("--model", required=True)
    s.add_argument("--traj", required=True)
    s.add_argument("-o", "--out", default="prediction.csv")
    s = sub.add_parser("evaluate", parents=[common], help="cross-validated improvement metric")
    s.add_argument("--traj", required=True)
    s.add_argument("-o", "--out", default="evaluation.json")
    s = sub.add_parser("optimize", parents=[common], help="optimize the model objective in the box")
    s.add_argument("--model", required=True)
    s.add_argument("--traj", help="sampled trajectory used to set lambda when it is null")
    s.add_argument("-o", "--out", default="optimum.json")
    s = sub.add_parser("iterate", parents=[common], help="sample, fit, optimize and shrink repeatedly")
    s.add_argument("-o", "--out", default="history.json")
    s = sub.add_parser("export", parents=[common], help="write a plot-ready table from an artifact")
    s.add_argument("--kind", required=True, choices=PLOT_KINDS)
    s.add_argument("--artifact", required=True)
    s.add_argument("-o", "--out")
    return p


def load_config(path, overrides) -> ExperimentConfig:
    doc = {}
    if path:
        doc = io.load_document(path)
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a mapping")
    for ov in overrides:
        doc = set_override(doc, ov)
    return ExperimentConfig.from_dict(doc)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, args.overrides)
        man = RunManifest(command=args.command, config=cfg)
        out = COMMANDS[args.command](args, cfg, man)
        man.seconds = time.perf_counter() - t0
        mpath = io.save_document(_manifest_path(out), man.to_dict())
    except ConfigError as exc:
        print(f"geomgait: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"geomgait: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except StageError as exc:
        print(f"geomgait: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"output": str(out), "manifest": str(mpath), "summary": man.summary},
                     default=io._plain))
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
