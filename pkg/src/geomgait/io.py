"""Artifact persistence: trajectory and prediction tables, model and manifest
documents, plot-data tables.

Tables are comma-separated text with a one-line header, numbers written with
17 significant digits.  Documents are indented JSON; Python writes floats in
their shortest round-tripping form, so ``save -> load -> save`` is
byte-identical.  Every write goes to a temporary file in the target directory
that is then renamed over the destination.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .gait_model import GaitModel
from .phase import clock_phase
from .plants import Trajectory
from .waveforms import FAMILIES, params_from_array, params_to_array

ROOT_ENV = "GEOMGAIT_ARTIFACT_ROOT"
MODEL_FORMAT = "geomgait-model/1"
TRAJ_FORMAT = "geomgait-trajectory/1"


class ArtifactError(FileNotFoundError):
    """An input artifact is missing or is not of the expected kind."""


def artifact_root() -> Path:
    return Path(os.environ.get(ROOT_ENV, ".")).expanduser()


def resolve(path) -> Path:
    """Relative paths are taken under the artifact root."""
    p = Path(path).expanduser()
    return p if p.is_absolute() else artifact_root() / p


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write_text(path, text: str) -> Path:
    path = resolve(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_text(path) -> str:
    p = resolve(path)
    if not p.is_file():
        raise ArtifactError(f"missing artifact: {p}")
    return p.read_text(encoding="utf-8")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(resolve(path), "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# structured documents

def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, default=_plain) + "\n"


def save_document(path, doc) -> Path:
    return atomic_write_text(path, dumps(doc))


def load_document(path) -> dict:
    text = read_text(path)
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{resolve(path)} is not a structured document: {exc}") from None


def save_model(path, model: GaitModel) -> Path:
    return save_document(path, {"format": MODEL_FORMAT, **model.to_dict()})


def load_model(path) -> GaitModel:
    doc = load_document(path)
    if doc.get("format") != MODEL_FORMAT:
        raise ArtifactError(f"{resolve(path)} is not a gait model document")
    return GaitModel.from_dict(doc)


# ---------------------------------------------------------------------------
# tables

def table_text(header, columns) -> str:
    cols = [np.asarray(c, dtype=float).reshape(len(c), -1) for c in columns]
    data = np.hstack(cols) if cols else np.empty((0, 0))
    lines = [",".join(header)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in data]
    return "\n".join(lines) + "\n"


def write_table(path, header, columns) -> Path:
    return atomic_write_text(path, table_text(header, columns))


def read_table(path):
    """Header names and an ``(n, k)`` float array."""
    text = read_text(path)
    lines = text.splitlines()
    if not lines:
        raise ArtifactError(f"{resolve(path)} is empty")
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:] if ln],
                    dtype=float).reshape(-1, len(header))
    return header, data


def trajectory_header(shape_dim: int) -> list:
    r = [f"r{i + 1}" for i in range(shape_dim)]
    rd = [f"rdot{i + 1}" for i in range(shape_dim)]
    return ["t", "u"] + r + rd + ["vx", "vy", "omega", "x", "y", "theta", "phi"]


def _sidecar(path) -> Path:
    p = resolve(path)
    return p.with_name(p.name + ".json")


def save_trajectory(path, traj: Trajectory, extra: dict | None = None) -> Path:
    """Table of every series plus a sidecar document with the cycle schedule."""
    n = len(traj.t)
    if traj.phi is not None:
        phi = traj.phi
    elif traj.cycle_starts is not None:
        phi = clock_phase(traj.cycle_starts, traj.t)
    else:
        phi = np.full(n, np.nan)
    ns = traj.r.shape[1]
    out = write_table(path, trajectory_header(ns),
                      [traj.t, traj.u, traj.r, traj.r_dot, traj.xi, traj.g, phi])
    family = traj.params[0].family if traj.params else None
    meta = {"format": TRAJ_FORMAT, "table": out.name, "rows": n, "dt": traj.dt,
            "cycle_starts": None if traj.cycle_starts is None else np.asarray(traj.cycle_starts),
            "family": family, "params": [params_to_array(p) for p in traj.params]}
    meta.update(extra or {})
    save_document(_sidecar(path), meta)
    return out


def load_trajectory(path) -> Trajectory:
    header, data = read_table(path)
    side = _sidecar(path)
    meta = load_document(side) if side.is_file() else {}
    ns = sum(1 for h in header if h.startswith("r") and h[1:].isdigit())
    if header != trajectory_header(ns):
        raise ArtifactError(f"{resolve(path)} does not have trajectory columns")
    col = {h: i for i, h in enumerate(header)}
    r0 = col["r1"]
    rd0 = col["rdot1"]
    family = meta.get("family")
    params = [params_from_array(family, p) for p in meta.get("params", [])] if family in FAMILIES else []
    cs = meta.get("cycle_starts")
    return Trajectory(t=data[:, col["t"]], u=data[:, col["u"]],
                      r=data[:, r0:r0 + ns], r_dot=data[:, rd0:rd0 + ns],
                      xi=data[:, col["vx"]:col["omega"] + 1],
                      g=data[:, col["x"]:col["theta"] + 1],
                      cycle_starts=None if cs is None else np.asarray(cs, dtype=float),
                      params=params)


def save_prediction(path, pred) -> Path:
    ns = pred.r_hat.shape[1]
    header = (["t", "u", "phi"] + [f"r{i + 1}" for i in range(ns)]
              + [f"rdot{i + 1}" for i in range(ns)] + ["vx", "vy", "omega", "x", "y", "theta"])
    return write_table(path, header, [pred.t, pred.u, pred.phi, pred.r_hat, pred.r_dot_hat,
                                      pred.xi_hat, pred.g_hat])
