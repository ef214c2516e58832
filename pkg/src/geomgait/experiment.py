"""Experiment configuration, run manifests, per-stage seeds and plot-data export."""

from __future__ import annotations

import copy
import json
import datetime as _dt
import platform
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .io import ArtifactError, load_document, load_trajectory, read_table, resolve, sha256
from .phase import clock_phase
from .plants import SurrogateConfig, SwimmerConfig, make_plant
from .prediction import PipelineConfig
from .waveforms import ParamBox, builtin_box

CONFIG_FORMAT = "geomgait-config/1"
MANIFEST_FORMAT = "geomgait-manifest/1"
EVAL_FORMAT = "geomgait-evaluation/1"
HISTORY_FORMAT = "geomgait-history/1"

STAGES = ("simulate", "evaluate", "optimize", "iterate")
PLANT_CONFIGS = {"swimmer": SwimmerConfig, "surrogate": SurrogateConfig}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass
class PlantSection:
    name: str = "swimmer"
    constants: dict = field(default_factory=dict)


@dataclass
class WaveformSection:
    box: object = "swimmer-full"       # built-in box name or an explicit box document


@dataclass
class DataSection:
    n_cycles: int = 100
    dt: float = 1 / 128
    warmup: int = 2


@dataclass
class OptimizerSection:
    lam: object = None                 # None: auto from the first iteration's samples
    n_iters: int = 3
    n_samples: int = 100
    shrink_factor: float = 0.35        # width reduction per iteration (new width 0.65)
    h: float = 1e-3
    step_tol: float = 1e-6
    max_iter: int = 200
    verify_warmup: int = 4
    samples_per_cycle: int = 1024
    keep_best: bool = True


_SECTIONS = {"plant": PlantSection, "waveform": WaveformSection, "data": DataSection,
             "pipeline": PipelineConfig, "optimizer": OptimizerSection}


def _coerce(key, value, default):
    """Check a leaf value against the type of its default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"config key '{key}' expects true/false, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key '{key}' expects an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key '{key}' expects a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str) and not isinstance(default, bool):
        if key != "waveform.box" and not isinstance(value, str):
            raise ConfigError(f"config key '{key}' expects a string, got {value!r}")
    elif isinstance(default, dict) and not isinstance(value, dict):
        raise ConfigError(f"config key '{key}' expects a mapping, got {value!r}")
    return value


@dataclass
class ExperimentConfig:
    plant: PlantSection = field(default_factory=PlantSection)
    waveform: WaveformSection = field(default_factory=WaveformSection)
    data: DataSection = field(default_factory=DataSection)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    seed: int = 0

    # -- construction ------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict | None) -> "ExperimentConfig":
        d = dict(d or {})
        if d.get("format") == MANIFEST_FORMAT:
            d = dict(d["config"])
        d.pop("format", None)
        cfg = cls()
        for key, value in d.items():
            if key == "seed":
                cfg.seed = _coerce("seed", value, 0)
                if cfg.seed < 0:
                    raise ConfigError("config key 'seed' must be non-negative")
                continue
            if key not in _SECTIONS:
                raise ConfigError(f"unknown config key '{key}'")
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{key}' must be a section")
            section = getattr(cfg, key)
            defaults = {f.name: getattr(section, f.name) for f in fields(section)}
            for sub, v in value.items():
                full = f"{key}.{sub}"
                if sub not in defaults:
                    raise ConfigError(f"unknown config key '{full}'")
                if full == "optimizer.lam":
                    if v is not None and (isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0):
                        raise ConfigError(f"config key '{full}' must be null or a non-negative number")
                    defaults[sub] = None if v is None else float(v)
                else:
                    defaults[sub] = _coerce(full, v, defaults[sub])
            try:
                setattr(cfg, key, type(section)(**defaults))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config section '{key}': {exc}") from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.plant.name not in PLANT_CONFIGS:
            raise ConfigError(f"config key 'plant.name': unknown plant {self.plant.name!r}")
        known = {f.name for f in fields(PLANT_CONFIGS[self.plant.name])}
        for k in self.plant.constants:
            if k not in known:
                raise ConfigError(f"unknown config key 'plant.constants.{k}'")
        try:
            self.make_plant()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config key 'plant': {exc}") from None
        try:
            self.make_box()
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"config key 'waveform.box': {exc}") from None
        checks = [("data.n_cycles", self.data.n_cycles >= 1), ("data.dt", self.data.dt > 0),
                  ("data.warmup", self.data.warmup >= 0),
                  ("optimizer.n_iters", self.optimizer.n_iters >= 1),
                  ("optimizer.n_samples", self.optimizer.n_samples >= 1),
                  ("optimizer.shrink_factor", 0 <= self.optimizer.shrink_factor < 1),
                  ("optimizer.h", 0 < self.optimizer.h < 0.5),
                  ("optimizer.max_iter", self.optimizer.max_iter >= 1),
                  ("pipeline.folds", self.pipeline.folds >= 2)]
        for key, ok in checks:
            if not ok:
                raise ConfigError(f"config key '{key}' is out of range")

    def make_plant(self):
        return make_plant(self.plant.name, **self.plant.constants)

    def make_box(self) -> ParamBox:
        box = self.waveform.box
        return builtin_box(box) if isinstance(box, str) else ParamBox.from_dict(box)

    def stage_seed(self, stage: str) -> int:
        return stage_seed(self.seed, stage)

    def to_dict(self) -> dict:
        return {"format": CONFIG_FORMAT, "seed": self.seed,
                **{name: asdict(getattr(self, name)) for name in _SECTIONS}}


def stage_seed(root: int, stage: str) -> int:
    """Independent 64-bit seed for a named stage, derived from the root seed."""
    ss = np.random.SeedSequence(root, spawn_key=(STAGES.index(stage),))
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


def set_override(doc: dict, assignment: str) -> dict:
    """Apply ``section.key=value`` to a config document (value parsed as JSON when possible)."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    doc = copy.deepcopy(doc)
    if doc.get("format") == MANIFEST_FORMAT:
        doc = doc["config"]
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"config key '{key}' does not name a setting")
    node[parts[-1]] = value
    return doc


# ---------------------------------------------------------------------------
# manifests

@dataclass
class RunManifest:
    command: str
    config: ExperimentConfig
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    stage_seeds: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    started: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    seconds: float = 0.0

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256(path)

    def to_dict(self) -> dict:
        return {"format": MANIFEST_FORMAT, "command": self.command,
                "config": self.config.to_dict(), "stage_seeds": self.stage_seeds,
                "inputs": self.inputs, "outputs": self.outputs, "summary": self.summary,
                "versions": {"geomgait": __version__, "python": platform.python_version(),
                             "numpy": np.__version__, "scipy": scipy.__version__},
                "wall_clock": {"started": self.started, "seconds": self.seconds}}


# ---------------------------------------------------------------------------
# plot-ready tables

PLOT_KINDS = ("shape_space_loop", "input_cycles", "phase_error", "iteration_objective")


def _trajectory_for(path, kind):
    if not str(path).endswith(".csv"):
        raise ArtifactError(f"{kind} export needs a trajectory table, got {path}")
    traj = load_trajectory(path)
    if traj.cycle_starts is None:
        raise ArtifactError(f"{path} has no cycle schedule")
    phi = clock_phase(traj.cycle_starts, traj.t)
    cycle = np.minimum(np.floor(phi / (2 * np.pi)), traj.n_cycles - 1)
    return traj, cycle


def export_plot_data(artifact, kind: str):
    """Header and rows of a plot-ready table built from a stored artifact."""
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind '{kind}'; choose from {', '.join(PLOT_KINDS)}")
    if kind == "shape_space_loop":
        traj, cycle = _trajectory_for(artifact, kind)
        ns = traj.r.shape[1]
        return ["cycle", "t"] + [f"r{i + 1}" for i in range(ns)], np.column_stack([cycle, traj.t, traj.r])
    if kind == "input_cycles":
        traj, cycle = _trajectory_for(artifact, kind)
        starts = np.asarray(traj.cycle_starts)[cycle.astype(int)]
        return ["cycle", "t_in_cycle", "u"], np.column_stack([cycle, traj.t - starts, traj.u])
    if str(artifact).endswith(".csv"):
        raise ArtifactError(f"{kind} export needs a JSON report, got table {artifact}")
    doc = load_document(artifact)
    if kind == "phase_error":
        if doc.get("format") != EVAL_FORMAT:
            raise ArtifactError(f"phase_error export needs an evaluation report, got {artifact}")
        table = resolve(artifact).parent / doc["phase_error_table"]
        return read_table(table)
    if doc.get("format") != HISTORY_FORMAT:
        raise ArtifactError(f"iteration_objective export needs an optimizer history, got {artifact}")
    rows = []
    for it in doc["iterations"]:
        g = it.get("gamma") or {}
        rows.append([it["iteration"], it["mean_sample_dx"],
                     g.get("gamma_rdot", {}).get("mean", np.nan),
                     g.get("gamma_xi", {}).get("mean", np.nan), it["F_pred"], it["F_plant"]])
    header = ["iteration", "mean_displacement", "gamma_rdot", "gamma_xi", "F_pred", "F_plant"]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def default_export_path(artifact, kind: str) -> Path:
    p = Path(artifact)
    return p.with_name(f"{p.stem}.{kind}.csv")
