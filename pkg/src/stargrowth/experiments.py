"""Experiment harnesses: averaging sweeps, shape-rescaling runs, and
anisotropic snapshot series, plus the metrics they report.

All outputs are deterministic functions of (config, seed list): every run
derives its random stream from the seed and a label, and aggregation folds
over sorted run order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .exceptions import ConfigError, GridError
from .ode import OdeTrajectory, has_closed_form, integrate_ode
from .process import Trajectory, simulate
from .rng import derive_rng
from .rules import RuleSet, preset_ruleset
from .sphere import RadialField, SphereGrid, leb_volume, make_grid, oscillation

__all__ = [
    "ExperimentConfig",
    "MetricSeries",
    "shape_from_spec",
    "l2_distance_series",
    "averaging_sweep",
    "shape_rescale_experiment",
    "shape_metric_series",
    "figure3_run",
]

SHAPE_PRESETS = ("ball", "sunflower", "ellipse")


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str                      # rule-set id (see rules.PRESET_NAMES)
    shape: dict = field(default_factory=lambda: {"kind": "ball"})
    eps_list: tuple = (1e-2, 1e-3)
    seeds: tuple = (0, 1, 2, 3, 4)
    T: float = 1.0
    M: int = 1024
    n: int = 2
    estimator: dict = field(default_factory=dict)  # chain burn/length overrides
    # shape-rescale specifics
    N_list: tuple = (100, 1000)
    c: float = 1.0

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.eps_list, self.eps_list[1:])):
            raise ConfigError("eps list must be strictly decreasing")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.T <= 0:
            raise ConfigError("horizon T must be positive")
        if any(e <= 0 for e in self.eps_list):
            raise ConfigError("all eps must be positive")

    def rules(self) -> RuleSet:
        return preset_ruleset(self.preset)

    def grid(self) -> SphereGrid:
        return make_grid(self.n, self.M)

    def r0(self, grid: SphereGrid) -> RadialField:
        return shape_from_spec(grid, self.shape)


def shape_from_spec(grid: SphereGrid, spec: dict) -> RadialField:
    """Named initial shapes: ball(radius), sunflower(k, amp), ellipse(b)."""
    kind = spec.get("kind", "ball")
    if kind == "ball":
        radius = float(spec.get("radius", 1.0))
        if radius <= 0:
            raise ConfigError("ball radius must be positive")
        return grid.constant_field(radius)
    if kind == "sunflower":
        if grid.n != 2:
            raise ConfigError("sunflower shape is planar only")
        k = int(spec.get("k", 6))
        amp = float(spec.get("amp", 0.3))
        if not 0 <= amp < 1:
            raise ConfigError("sunflower amp must be in [0, 1)")
        return grid.field(1.0 + amp * np.cos(k * grid.thetas))
    if kind == "ellipse":
        if grid.n != 2:
            raise ConfigError("ellipse shape is planar only")
        b = float(spec.get("b", 0.5))
        if b <= 0:
            raise ConfigError("ellipse semi-axis must be positive")
        th = grid.thetas
        return grid.field(1.0 / np.sqrt(np.cos(th) ** 2 + np.sin(th) ** 2 / b**2))
    raise ConfigError(f"unknown shape kind {kind!r}")


@dataclass
class MetricSeries:
    times: np.ndarray
    values: np.ndarray       # per-time metric
    running_sup: np.ndarray

    @property
    def sup(self) -> float:
        return float(self.running_sup[-1])


def _held_ode_values(ode: OdeTrajectory, t: float) -> np.ndarray:
    i = int(np.searchsorted(ode.times, t, side="right")) - 1
    return ode.states[max(i, 0)]


def l2_distance_series(traj: Trajectory, ode: OdeTrajectory) -> MetricSeries:
    """Per-snapshot L2 distance between a stochastic run and an ODE reference,
    the ODE resampled onto the trajectory's snapshot grid by held values."""
    g = traj.grid
    if ode.grid is not g and not np.array_equal(ode.grid.nodes, g.nodes):
        raise GridError("trajectory and ODE reference live on different grids")
    vals = np.empty(len(traj.snapshot_times))
    for i, t in enumerate(traj.snapshot_times):
        diff = traj.snapshots[i] - _held_ode_values(ode, t)
        vals[i] = math.sqrt(float(np.sum(diff * diff * g.weights)))
    return MetricSeries(
        times=traj.snapshot_times.copy(),
        values=vals,
        running_sup=np.maximum.accumulate(vals),
    )


def _ode_reference(r0, rules, T, cfg_estimator, seed):
    if has_closed_form(rules):
        return integrate_ode(r0, rules, T=T, dt=min(1e-3 * (1 + leb_volume(r0)),
                                                    0.04 * leb_volume(r0)))
    burn = int(cfg_estimator.get("burn", 1_000))
    length = int(cfg_estimator.get("length", 20_000))
    dt = float(cfg_estimator.get("dt", 0.02 * leb_volume(r0)))
    return integrate_ode(
        r0, rules, T=T, dt=dt, estimator="chain",
        rng=derive_rng(seed, "ode-reference"), burn=burn, length=length,
    )


def averaging_sweep(cfg: ExperimentConfig, ref_seed: int = 0) -> dict:
    """Stochastic runs against a shared ODE reference across the eps ladder.

    Returns a results table: one row per (eps, seed) with the sup L2
    distance and monitor flags, plus per-eps medians/IQR and a one-sided
    sign test that the sup distance decreases along the ladder.
    """
    rules = cfg.rules()
    g = cfg.grid()
    r0 = cfg.r0(g)
    ode = _ode_reference(r0, rules, cfg.T, cfg.estimator, ref_seed)
    snap = np.linspace(0.0, cfg.T, 33)[1:]
    snap = np.concatenate([[0.0], snap])

    rows = []
    sups = {}  # eps -> per-seed sup in seed order
    for eps in cfg.eps_list:
        per_seed = []
        for seed in cfg.seeds:
            rng = derive_rng(seed, "sweep", f"{eps:.6g}")
            traj = simulate(r0, np.zeros(g.n), rules, eps, cfg.T, rng,
                            snapshot_times=snap)
            m = l2_distance_series(traj, ode)
            rows.append({
                "epsilon": eps,
                "seed": seed,
                "sup_l2": m.sup,
                "radius_trigger": traj.monitors.radius_triggered,
                "density_trigger": traj.monitors.density_triggered,
                "jumps": int(traj.final.jumps),
            })
            per_seed.append(m.sup)
        sups[eps] = np.array(per_seed)

    summary = []
    for eps in cfg.eps_list:
        q25, q50, q75 = np.percentile(sups[eps], [25, 50, 75])
        summary.append({"epsilon": eps, "median_sup_l2": float(q50),
                        "iqr_sup_l2": float(q75 - q25)})
    medians = [s["median_sup_l2"] for s in summary]
    monotone = all(a > b for a, b in zip(medians, medians[1:]))
    # one-sided sign test on paired per-seed sups across adjacent eps
    wins = trials = 0
    for a, b in zip(cfg.eps_list, cfg.eps_list[1:]):
        wins += int(np.sum(sups[a] > sups[b]))
        trials += len(cfg.seeds)
    p_sign = (
        float(stats.binomtest(wins, trials, 0.5, "greater").pvalue)
        if trials else 1.0
    )
    return {
        "rows": rows,
        "summary": summary,
        "monotone_medians": monotone,
        "sign_test_pvalue": p_sign,
        "config": {
            "preset": cfg.preset, "shape": cfg.shape,
            "eps_list": list(cfg.eps_list), "seeds": list(cfg.seeds),
            "T": cfg.T, "M": cfg.M, "n": cfg.n,
        },
    }


def shape_metric_series(
    traj: Trajectory, psi: RadialField, c: float, N: float
) -> MetricSeries:
    """Shape distance sup_s || (N(c+s))^{-1/n} R_{sN} - psi ||_2 for a
    scale-1 trajectory whose snapshot times are s*N."""
    g = traj.grid
    s_grid = traj.snapshot_times / N
    vals = np.empty(len(s_grid))
    for i, s in enumerate(s_grid):
        scaled = traj.snapshots[i] / (N * (c + s)) ** (1.0 / g.n)
        diff = scaled - psi.values
        vals[i] = math.sqrt(float(np.sum(diff * diff * g.weights)))
    return MetricSeries(times=s_grid, values=vals,
                        running_sup=np.maximum.accumulate(vals))


def shape_rescale_experiment(cfg: ExperimentConfig, n_snap: int = 17) -> dict:
    """Theorem-2-style rescaled runs: start the scale-1 process from
    (cN)^{1/n} psi and report the sup shape distance over s in [1, T]."""
    rules = cfg.rules()
    if not rules.scale_invariant:
        raise ConfigError(
            f"shape-rescale experiment needs a scale-invariant rule set, "
            f"got {cfg.preset!r}"
        )
    if cfg.T <= 1.0:
        raise ConfigError("shape-rescale horizon T must exceed 1")
    g = cfg.grid()
    psi_raw = cfg.r0(g)
    psi = RadialField(g, psi_raw.values / leb_volume(psi_raw) ** (1.0 / g.n))

    s_grid = np.linspace(1.0, cfg.T, n_snap)
    rows = []
    sups = {}
    for N in cfg.N_list:
        per_seed = []
        for seed in cfg.seeds:
            r0 = RadialField(g, (cfg.c * N) ** (1.0 / g.n) * psi.values)
            rng = derive_rng(seed, "shape-rescale", f"{N:g}")
            traj = simulate(r0, np.zeros(g.n), rules, 1.0, cfg.T * N, rng,
                            snapshot_times=s_grid * N)
            m = shape_metric_series(traj, psi, cfg.c, N)
            rows.append({"N": N, "seed": seed, "sup_shape_l2": m.sup,
                         "jumps": int(traj.final.jumps)})
            per_seed.append(m.sup)
        sups[N] = np.array(per_seed)
    summary = [
        {"N": N, "median_sup_shape_l2": float(np.median(sups[N]))}
        for N in cfg.N_list
    ]
    meds = [s["median_sup_shape_l2"] for s in summary]
    return {
        "rows": rows,
        "summary": summary,
        "decreasing_in_N": all(a > b for a, b in zip(meds, meds[1:])),
        "config": {"preset": cfg.preset, "shape": cfg.shape,
                   "N_list": list(cfg.N_list), "c": cfg.c,
                   "seeds": list(cfg.seeds), "T": cfg.T, "M": cfg.M},
    }


def figure3_run(
    cfg: ExperimentConfig,
    eps: float | None = None,
    seed: int | None = None,
    n_snap: int = 17,
) -> dict:
    """Single anisotropic run with snapshot export and a diameter series.

    Returns snapshot times/fields plus diameter(t) = max_theta r_t and the
    oscillation of the volume-normalized profile at each snapshot.
    """
    g = cfg.grid()
    if g.n != 2:
        raise ConfigError("snapshot-series runs are planar only")
    rules = cfg.rules()
    eps = cfg.eps_list[0] if eps is None else eps
    seed = cfg.seeds[0] if seed is None else seed
    r0 = cfg.r0(g)
    snap = np.concatenate([[0.0],
                           cfg.T * np.geomspace(1.0 / 2 ** (n_snap - 2), 1.0,
                                                n_snap - 1)])
    rng = derive_rng(seed, "figure3", f"{eps:.6g}")
    traj = simulate(r0, np.zeros(2), rules, eps, cfg.T, rng,
                    snapshot_times=snap)
    leb0 = leb_volume(r0)
    diam = traj.snapshots.max(axis=1)
    oscs = np.array([
        oscillation(RadialField(g, traj.snapshots[i]
                                / (leb0 + t) ** 0.5))
        for i, t in enumerate(snap)
    ])
    return {
        "times": snap,
        "snapshots": traj.snapshots,
        "diameter": diam,
        "normalized_oscillation": oscs,
        "grid": g,
        "trajectory": traj,
        "config": {"preset": cfg.preset, "shape": cfg.shape, "eps": eps,
                   "seed": seed, "T": cfg.T, "M": cfg.M},
    }
