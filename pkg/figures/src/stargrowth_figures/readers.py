"""Readers and validators for the simulator's run-directory formats.

Supported layouts:

* trajectory runs: meta.json, snapshots.csv (t, theta_index, theta, r),
  particle.csv, jumps.csv, monitors.json;
* lattice runs: lattice_range.csv (x, y, sqrt_first_visit_time),
  lattice_meta.json;
* sweep runs: sweep_results.csv (epsilon, seed, sup_l2, ...),
  sweep_summary.json;
* kernel validation: kernel_validation.json.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

__all__ = [
    "FormatError",
    "detect_kind",
    "read_snapshots_csv",
    "read_trajectory_run",
    "read_lattice_run",
    "read_sweep_run",
    "read_kernel_validation",
]


class FormatError(Exception):
    """A run directory is missing files or violates the documented format."""


def _require(path: Path) -> Path:
    if not path.exists():
        raise FormatError(f"missing required file: {path}")
    return path


def _load_json(path: Path) -> dict:
    try:
        with open(_require(path)) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise FormatError(f"corrupt JSON in {path}: {e}") from e


def detect_kind(run_dir) -> str:
    run = Path(run_dir)
    if (run / "snapshots.csv").exists():
        return "trajectory"
    if (run / "lattice_range.csv").exists():
        return "lattice"
    if (run / "sweep_results.csv").exists():
        return "sweep"
    if (run / "kernel_validation.json").exists():
        return "kernel-validation"
    raise FormatError(f"{run} is not a recognized run directory")


def read_snapshots_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a long-format snapshot table into (times, thetas, values)."""
    ts, idx, th, vals = [], [], [], []
    with open(_require(Path(path)), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["t", "theta_index"]:
            raise FormatError(f"{path}: unexpected header {header}")
        for row in reader:
            try:
                ts.append(float(row[0]))
                idx.append(int(row[1]))
                th.append(float(row[2]))
                vals.append(float(row[3]))
            except (ValueError, IndexError) as e:
                raise FormatError(f"{path}: bad row {row}") from e
    if not vals:
        raise FormatError(f"{path}: no data rows")
    M = max(idx) + 1
    if len(vals) % M:
        raise FormatError(f"{path}: ragged snapshot blocks (M={M})")
    times = np.array(ts[::M])
    return times, np.array(th[:M]), np.array(vals).reshape(len(times), M)


def read_trajectory_run(run_dir) -> dict:
    run = Path(run_dir)
    meta = _load_json(run / "meta.json")
    times, thetas, values = read_snapshots_csv(run / "snapshots.csv")
    _require(run / "particle.csv")
    _require(run / "jumps.csv")
    monitors = _load_json(run / "monitors.json")
    return {"meta": meta, "times": times, "thetas": thetas,
            "values": values, "monitors": monitors}


def read_lattice_run(run_dir) -> dict:
    run = Path(run_dir)
    meta = _load_json(run / "lattice_meta.json")
    xs, ys, vs = [], [], []
    with open(_require(run / "lattice_range.csv"), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x", "y", "sqrt_first_visit_time"]:
            raise FormatError(f"lattice_range.csv: unexpected header {header}")
        for row in reader:
            try:
                xs.append(int(row[0]))
                ys.append(int(row[1]))
                vs.append(float(row[2]))
            except (ValueError, IndexError) as e:
                raise FormatError(f"lattice_range.csv: bad row {row}") from e
    if not xs:
        raise FormatError("lattice_range.csv: no data rows")
    return {"meta": meta, "x": np.array(xs), "y": np.array(ys),
            "value": np.array(vs)}


def read_sweep_run(run_dir) -> dict:
    run = Path(run_dir)
    summary = _load_json(run / "sweep_summary.json")
    rows = []
    with open(_require(run / "sweep_results.csv"), newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            try:
                rows.append({"epsilon": float(row["epsilon"]),
                             "seed": int(row["seed"]),
                             "sup_l2": float(row["sup_l2"])})
            except (KeyError, ValueError, TypeError) as e:
                raise FormatError(f"sweep_results.csv: bad row {row}") from e
    if not rows:
        raise FormatError("sweep_results.csv: no data rows")
    return {"summary": summary, "rows": rows}


def read_kernel_validation(run_dir) -> dict:
    report = _load_json(Path(run_dir) / "kernel_validation.json")
    for key in ("kernel_norm_error", "wos_ks"):
        if key not in report:
            raise FormatError(f"kernel_validation.json: missing {key!r}")
    return report
