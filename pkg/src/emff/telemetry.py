"""Telemetry frames and their CSV / JSONL / summary-JSON persistence.

Floats are written with Python's shortest round-trip representation, so
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

AXES = ("x", "y", "z")

# per-satellite vector fields: name -> unit
_SAT_FIELDS = {
    "r": "m",
    "v": "m/s",
    "sigma": "-",
    "omega": "rad/s",
    "h": "N m s",
    "mu_sin": "A m^2",
    "mu_cos": "A m^2",
    "mu_dc": "A m^2",
}

# scalar fields: name -> unit
_SCALAR_FIELDS = {
    "t": "s",
    "f_cmd_max": "N",
    "tau_cmd_max": "N m",
    "hdot_cmd_max": "N m/s",
    "alloc_residual": "-",
    "alloc_iterations": "count",
    "alloc_restarts": "count",
    "lyapunov_V": "J",
    "momentum_neutrality": "-",
    "linear_momentum": "N s",
    "dipole_energy_interval": "A^2 m^4 s",
    "saturated": "flag",
}


@dataclass
class TelemetryFrame:
    """Snapshot at time ``t`` plus statistics over the steps since the previous frame.

    Vectors are I frame except ``sigma``, ``omega``, ``h`` (body).  ``L`` is
    the total angular momentum about satellite 1 in I components.
    """

    t: float
    r: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray
    h: np.ndarray
    L: np.ndarray
    mu_sin: np.ndarray
    mu_cos: np.ndarray
    mu_dc: np.ndarray
    f_cmd_max: float
    tau_cmd_max: float
    hdot_cmd_max: float
    alloc_residual: float
    alloc_iterations: int
    alloc_restarts: int
    lyapunov_V: float
    momentum_neutrality: float
    linear_momentum: float
    dipole_energy_interval: float
    saturated: int

    @property
    def n(self):
        return self.r.shape[0]


def column_names(n):
    """Header names with unit suffixes, e.g. ``r1_x[m]``."""
    cols = [f"t[{_SCALAR_FIELDS['t']}]"]
    for name, unit in _SAT_FIELDS.items():
        for j in range(n):
            cols += [f"{name}{j + 1}_{a}[{unit}]" for a in AXES]
    cols += [f"L_{a}[N m s]" for a in AXES]
    cols += [f"{k}[{u}]" for k, u in _SCALAR_FIELDS.items() if k != "t"]
    return cols


def _num(x):
    x = float(x)
    if math.isnan(x):
        return "nan"
    return repr(x)


def frame_row(fr):
    row = [_num(fr.t)]
    for name in _SAT_FIELDS:
        row += [_num(x) for x in np.asarray(getattr(fr, name)).ravel()]
    row += [_num(x) for x in fr.L]
    for k in _SCALAR_FIELDS:
        if k == "t":
            continue
        val = getattr(fr, k)
        row.append(str(int(val)) if k in ("alloc_iterations", "alloc_restarts", "saturated") else _num(val))
    return row


def write_csv(frames, path, metadata=None):
    """CSV with ``#``-prefixed metadata lines, a unit-suffixed header, then one row per frame."""
    path = Path(path)
    n = frames[0].n if frames else 0
    buf = io.StringIO()
    buf.write("# emff telemetry\n")
    buf.write("# frames: vectors in I frame except sigma/omega/h (body); L about satellite 1\n")
    for k, v in (metadata or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(column_names(n))
    for fr in frames:
        w.writerow(frame_row(fr))
    path.write_text(buf.getvalue())
    return path


def _frame_dict(fr):
    out = {}
    for f in fields(TelemetryFrame):
        val = getattr(fr, f.name)
        if isinstance(val, np.ndarray):
            out[f.name] = val.tolist()
            continue
        if isinstance(val, np.generic):
            val = val.item()
        out[f.name] = None if isinstance(val, float) and math.isnan(val) else val
    return out


def write_jsonl(frames, path):
    path = Path(path)
    with path.open("w") as fh:
        for fr in frames:
            fh.write(json.dumps(_frame_dict(fr), separators=(",", ":")) + "\n")
    return path


def read_jsonl(path):
    """Inverse of :func:`write_jsonl`."""
    frames = []
    arrays = {"r", "v", "sigma", "omega", "h", "L", "mu_sin", "mu_cos", "mu_dc"}
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            kw = {}
            for f in fields(TelemetryFrame):
                val = d[f.name]
                if f.name in arrays:
                    kw[f.name] = np.asarray(val, dtype=float)
                elif val is None:
                    kw[f.name] = float("nan")
                else:
                    kw[f.name] = val
            frames.append(TelemetryFrame(**kw))
    return frames


def write_summary(summary, path):
    path = Path(path)
    clean = {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in summary.items()}
    path.write_text(json.dumps(clean, indent=2, sort_keys=True) + "\n")
    return path


def emit_telemetry(frames, path, fmt="csv", metadata=None):
    fmt = fmt.lower()
    if fmt == "csv":
        return write_csv(frames, path, metadata)
    if fmt == "jsonl":
        return write_jsonl(frames, path)
    raise ValueError(f"unknown telemetry format {fmt!r}")
