"""On-disk run artifacts: CSV/JSON formats shared with downstream tooling.

All writers are atomic (write to a temp file in the target directory, then
rename) and format floats with 17 significant digits so that read-back
round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .lattice import LatticeWalkState, range_table
from .ode import OdeTrajectory
from .process import Trajectory
from .sphere import RadialField, SphereGrid, make_grid

__all__ = [
    "write_field",
    "read_field",
    "write_trajectory_dir",
    "read_snapshots",
    "write_ode_trajectory",
    "write_bbar_stderr",
    "write_residuals",
    "write_sweep",
    "write_lattice",
    "TRAJECTORY_FILES",
]

TRAJECTORY_FILES = (
    "meta.json",
    "snapshots.csv",
    "particle.csv",
    "jumps.csv",
    "monitors.json",
)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path, write_fn) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_csv(path, header, rows) -> None:
    def go(fh):
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)

    _atomic_write(path, go)


def _write_json(path, obj) -> None:
    _atomic_write(path, lambda fh: json.dump(obj, fh, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# radial fields


def write_field(path, r: RadialField, quantity: str = "r") -> None:
    """CSV (theta_index, theta, value) plus a JSON sidecar <path>.json."""
    g = r.grid
    thetas = g.thetas if g.n == 2 else np.zeros(g.M)
    rows = [
        (i, _fmt(thetas[i]), _fmt(r.values[i]))
        for i in range(g.M)
    ]
    _write_csv(path, ("theta_index", "theta", quantity), rows)
    sidecar = {"n": g.n, "M": g.M, "quantity": quantity}
    if g.n == 3:
        sidecar["nodes"] = [[_fmt(c) for c in node] for node in g.nodes]
    _write_json(str(path) + ".json", sidecar)


def read_field(path, grid: SphereGrid | None = None) -> RadialField:
    """Read a field CSV written by write_field; the grid is rebuilt from the
    sidecar unless one is supplied."""
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    if grid is None:
        grid = make_grid(meta["n"], meta["M"])
    vals = np.empty(grid.M)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            vals[int(row[0])] = float(row[2])
    return RadialField(grid, vals)


# ---------------------------------------------------------------------------
# jump-process trajectories


def write_trajectory_dir(out_dir, traj: Trajectory, config: dict | None = None):
    """The five-file trajectory layout: meta.json, snapshots.csv,
    particle.csv, jumps.csv, monitors.json."""
    out = Path(out_dir)
    g = traj.grid
    thetas = g.thetas if g.n == 2 else np.zeros(g.M)

    snap_rows = []
    for i, t in enumerate(traj.snapshot_times):
        ts = _fmt(t)
        snap_rows.extend(
            (ts, j, _fmt(thetas[j]), _fmt(traj.snapshots[i, j]))
            for j in range(g.M)
        )
    _write_csv(out / "snapshots.csv", ("t", "theta_index", "theta", "r"), snap_rows)

    coord_names = ["x", "y", "z"][: g.n]
    _write_csv(
        out / "particle.csv",
        ("t", *coord_names),
        [
            (_fmt(t), *map(_fmt, traj.particle_track[i]))
            for i, t in enumerate(traj.particle_times)
        ],
    )
    _write_csv(
        out / "jumps.csv",
        ("t", "xi_angle", "eta", "y", "dleb"),
        [
            (_fmt(traj.jump_times[i]), _fmt(traj.jump_angles[i]),
             _fmt(traj.jump_etas[i]), _fmt(traj.jump_ys[i]),
             _fmt(traj.jump_dlebs[i]))
            for i in range(len(traj.jump_times))
        ],
    )
    _write_json(out / "monitors.json", traj.monitors.as_dict())
    meta = {
        "kind": "trajectory",
        "n": g.n,
        "M": g.M,
        "jumps": int(traj.final.jumps),
        "clamp_count": int(traj.final.clamp_count),
        "resolution_warnings": int(traj.final.resolution_warnings),
        "final_time": traj.final.t,
    }
    meta.update(traj.meta)
    if config:
        meta["config"] = config
    _write_json(out / "meta.json", meta)
    return out


def read_snapshots(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read snapshots.csv (or ode_trajectory.csv): returns (times, thetas,
    values) with values shaped (n_times, M)."""
    ts, idx, th, vals = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            ts.append(float(row[0]))
            idx.append(int(row[1]))
            th.append(float(row[2]))
            vals.append(float(row[3]))
    M = max(idx) + 1
    times = np.array(ts[::M])
    thetas = np.array(th[:M])
    values = np.array(vals).reshape(len(times), M)
    return times, thetas, values


# ---------------------------------------------------------------------------
# ODE artifacts


def write_ode_trajectory(path, ode: OdeTrajectory) -> None:
    g = ode.grid
    thetas = g.thetas if g.n == 2 else np.zeros(g.M)
    rows = []
    for i, t in enumerate(ode.times):
        ts = _fmt(t)
        rows.extend(
            (ts, j, _fmt(thetas[j]), _fmt(ode.states[i, j])) for j in range(g.M)
        )
    _write_csv(path, ("t", "theta_index", "theta", "r"), rows)


def write_bbar_stderr(path, ode: OdeTrajectory) -> None:
    g = ode.grid
    rows = []
    for i, t in enumerate(ode.times):
        ts = _fmt(t)
        for j in range(g.M):
            se = 0.0 if ode.bbar_stderr is None else ode.bbar_stderr[i, j]
            rows.append((ts, j, _fmt(ode.bbar_values[i, j]), _fmt(se)))
    _write_csv(path, ("t", "theta_index", "bbar", "stderr"), rows)


def write_residuals(path, entries: list[dict]) -> None:
    """residuals.json: a list of {label, residual, stderr (nullable), ...}."""
    _write_json(path, {"residuals": entries})


# ---------------------------------------------------------------------------
# sweeps and lattice walks


def write_sweep(out_dir, result: dict) -> Path:
    out = Path(out_dir)
    _write_csv(
        out / "sweep_results.csv",
        ("epsilon", "seed", "sup_l2", "radius_trigger", "density_trigger",
         "jumps"),
        [
            (_fmt(row["epsilon"]), row["seed"], _fmt(row["sup_l2"]),
             int(row["radius_trigger"]), int(row["density_trigger"]),
             row["jumps"])
            for row in result["rows"]
        ],
    )
    summary = {k: v for k, v in result.items() if k != "rows"}
    _write_json(out / "sweep_summary.json", summary)
    return out


def write_lattice(out_dir, s: LatticeWalkState, meta: dict | None = None) -> Path:
    out = Path(out_dir)
    tbl = range_table(s)
    _write_csv(
        out / "lattice_range.csv",
        ("x", "y", "sqrt_first_visit_time"),
        [(int(x), int(y), _fmt(v)) for x, y, v in tbl],
    )
    info = {
        "kind": "lattice",
        "walk": "oerw" if s.rule else "orrw",
        "a": s.a,
        "rule": s.rule,
        "steps": int(s.steps),
        "range_size": len(s.first_visit),
        "left_box": bool(s.left_box),
        "box_halfwidth": int(s.box_halfwidth),
    }
    if meta:
        info.update(meta)
    _write_json(out / "lattice_meta.json", info)
    return out
