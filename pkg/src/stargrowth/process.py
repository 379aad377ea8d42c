"""The pure-jump growth process: Poisson clock, bump deposition, transport.

A single trajectory is strictly sequential; parallelism belongs at the
seed/sweep level.  Each jump: draw an exponential holding time at rate
1/eps, sample a boundary angle from the hitting rule, deposit a bump of
expected volume eps centered there, then transport the particle using the
pre-jump domain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import UnderResolvedBumpError
from .rng import derive_rng
from .rules import RuleSet, bump_scale, wos_exit_angles, y_factor
from .sphere import (
    RadialField,
    add_bump,
    interp_values,
    leb_volume,
    lp_norm,
    make_bump_kernel,
)

__all__ = [
    "GrowthState",
    "Monitors",
    "Trajectory",
    "step",
    "simulate",
    "geometric_snapshot_times",
    "rescale_trajectory",
    "check_monitors",
    "coupled_scale_runs",
]

_KERNEL_QUANTUM = 1e-3  # relative quantization of eta for kernel memoization
_HARMONIC_MC_Y_BATCH = 16


@dataclass
class GrowthState:
    r: RadialField
    x: np.ndarray
    t: float = 0.0
    jumps: int = 0
    clamp_count: int = 0
    resolution_warnings: int = 0


@dataclass
class Monitors:
    """Runtime stopping-time monitors; they inform, never abort.

    Flags latch at the first trigger: the radius monitor fires when the
    sup-norm of the boundary exceeds 1/delta_radius, the density monitor
    when the minimal hitting-density value drops below delta_density.
    """

    delta_density: float = 1e-6
    delta_radius: float = 1e-6
    radius_trigger_time: float | None = None
    density_trigger_time: float | None = None

    @property
    def radius_triggered(self) -> bool:
        return self.radius_trigger_time is not None

    @property
    def density_triggered(self) -> bool:
        return self.density_trigger_time is not None

    def observe(self, t: float, sup_radius: float, min_density: float) -> None:
        if self.radius_trigger_time is None and sup_radius > 1.0 / self.delta_radius:
            self.radius_trigger_time = t
        if self.density_trigger_time is None and min_density < self.delta_density:
            self.density_trigger_time = t

    def as_dict(self) -> dict:
        return {
            "delta_density": self.delta_density,
            "delta_radius": self.delta_radius,
            "radius_trigger_time": self.radius_trigger_time,
            "density_trigger_time": self.density_trigger_time,
        }


@dataclass
class Trajectory:
    snapshot_times: np.ndarray          # strictly increasing
    snapshots: np.ndarray               # (S, M) boundary fields, cadlag values
    particle_times: np.ndarray          # (J,)
    particle_track: np.ndarray          # (J, n)
    jump_times: np.ndarray              # (J,)
    jump_angles: np.ndarray             # (J,) angle of xi for n=2, else node index
    jump_etas: np.ndarray
    jump_ys: np.ndarray
    jump_dlebs: np.ndarray
    monitors: Monitors
    final: GrowthState
    grid: object = None
    meta: dict = field(default_factory=dict)


class _KernelCache:
    """Bump kernels memoized on a geometric eta ladder (relative step 1e-3)."""

    def __init__(self, grid):
        self.grid = grid
        self._cache = {}

    def get(self, eta: float):
        key = int(round(math.log(eta) / _KERNEL_QUANTUM))
        k = self._cache.get(key)
        if k is None:
            k = make_bump_kernel(
                math.exp(key * _KERNEL_QUANTUM), self.grid, min_cap_nodes=1
            )
            self._cache[key] = k
        return k


def _resolution_ok(grid, eta: float) -> bool:
    return grid.spacing <= eta / 3.0


def step(
    state: GrowthState,
    rules: RuleSet,
    eps: float,
    rng: np.random.Generator,
    kernel_cache: _KernelCache | None = None,
    strict: bool = False,
    fixed_clock: bool = False,
) -> GrowthState:
    """Advance the growth state by one jump (returns a new state)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if kernel_cache is None or kernel_cache.grid is not state.r.grid:
        kernel_cache = _KernelCache(state.r.grid)
    new_state, _ = _jump(state, rules, eps, rng, kernel_cache, strict, fixed_clock)
    return new_state


def _jump(state, rules, eps, rng, kernel_cache, strict, fixed_clock, forced_xi=None,
          forced_dt=None):
    r, x = state.r, state.x
    g = r.grid
    rtilde = rules.smoothed(r)

    if forced_dt is not None:
        dt = forced_dt
    elif fixed_clock:
        dt = eps  # non-canonical fixed-increment clock, for variance studies
    else:
        dt = rng.exponential(eps)

    min_density = None
    if rules.F.variant == "harmonic-mc":
        exits = wos_exit_angles(
            rtilde, x, _HARMONIC_MC_Y_BATCH, rng, rules.F.wos_shell_frac
        )
        xi = exits[0] if forced_xi is None else np.asarray(forced_xi, float)
        rvals = interp_values(r, exits)
        y = g.area * float(np.mean(rvals ** (g.n - 1)))
    else:
        density = rules.eval_density(r, x, rng=rng, rtilde=rtilde)
        min_density = float(np.min(density.values))
        y = y_factor(r, density)
        if forced_xi is None:
            xi = rules.sample_angle(r, x, rng, density=density, rtilde=rtilde)
        else:
            xi = np.asarray(forced_xi, float)

    eta = bump_scale(eps, y, g.n)
    warned = 0
    if not _resolution_ok(g, eta):
        if strict:
            raise UnderResolvedBumpError(
                f"bump scale eta={eta:g} under-resolved on M={g.M} grid "
                f"(spacing {g.spacing:g} > eta/3); increase M or eps"
            )
        warned = 1
    kernel = kernel_cache.get(eta)
    vol_before = leb_volume(r)
    r_new = add_bump(r, xi, eps / y, kernel)
    dleb = leb_volume(r_new) - vol_before
    # transport reads the pre-jump domain
    x_new, clamped = rules.transport(r, xi, rtilde=rtilde)

    new_state = GrowthState(
        r=r_new,
        x=x_new,
        t=state.t + dt,
        jumps=state.jumps + 1,
        clamp_count=state.clamp_count + int(clamped),
        resolution_warnings=state.resolution_warnings + warned,
    )
    record = {
        "t": new_state.t,
        "xi": xi,
        "eta": eta,
        "y": y,
        "dleb": dleb,
        "min_density": min_density,
    }
    return new_state, record


def geometric_snapshot_times(T: float, count: int = 17, ratio: float = 2.0):
    """Default snapshot plan: 0, then a geometric ladder ending at T."""
    times = [T / ratio**k for k in range(count - 2, -1, -1)]
    return np.array([0.0] + times)


def simulate(
    r0: RadialField,
    x0: np.ndarray,
    rules: RuleSet,
    eps: float,
    T: float,
    rng: np.random.Generator,
    snapshot_times: np.ndarray | None = None,
    monitors: Monitors | None = None,
    strict: bool = False,
    fixed_clock: bool = False,
    forced_schedule: tuple[np.ndarray, np.ndarray] | None = None,
) -> Trajectory:
    """Run the jump process on [0, T] and record a trajectory.

    ``forced_schedule`` replays an explicit (jump_times, xi_vectors) pair
    instead of drawing the clock and the hitting angles; this is how coupled
    scale comparisons are built.
    """
    if T <= 0:
        raise ValueError("horizon T must be positive")
    if np.any(r0.values <= 0):
        raise ValueError("initial boundary must be strictly positive")
    if snapshot_times is None:
        snapshot_times = geometric_snapshot_times(T)
    snapshot_times = np.asarray(snapshot_times, dtype=float)
    if np.any(np.diff(snapshot_times) <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    monitors = monitors if monitors is not None else Monitors()

    g = r0.grid
    state = GrowthState(r=r0, x=np.asarray(x0, dtype=float))
    cache = _KernelCache(g)

    snaps = np.empty((len(snapshot_times), g.M))
    snap_i = 0
    jt, ja, je, jy, jd = [], [], [], [], []
    pt, px = [], []

    forced_i = 0
    while True:
        if forced_schedule is not None:
            times, xis = forced_schedule
            if forced_i >= len(times) or times[forced_i] > T:
                break
            dt = times[forced_i] - state.t
            new_state, rec = _jump(
                state, rules, eps, rng, cache, strict, fixed_clock,
                forced_xi=xis[forced_i], forced_dt=dt,
            )
            forced_i += 1
        else:
            new_state, rec = _jump(state, rules, eps, rng, cache, strict, fixed_clock)
        # cadlag: snapshots strictly before the jump time hold the old field
        while snap_i < len(snapshot_times) and snapshot_times[snap_i] < rec["t"]:
            snaps[snap_i] = state.r.values
            snap_i += 1
        if rec["t"] > T:
            break
        state = new_state
        jt.append(rec["t"])
        ja.append(_angle_of(rec["xi"], g))
        je.append(rec["eta"])
        jy.append(rec["y"])
        jd.append(rec["dleb"])
        pt.append(rec["t"])
        px.append(state.x)
        sup_r = lp_norm(state.r, math.inf)
        mind = rec["min_density"]
        if mind is None:
            mind = math.inf  # harmonic-mc: no full density per jump
        monitors.observe(state.t, sup_r, mind)
    while snap_i < len(snapshot_times):
        snaps[snap_i] = state.r.values
        snap_i += 1

    return Trajectory(
        snapshot_times=snapshot_times,
        snapshots=snaps,
        particle_times=np.array(pt),
        particle_track=np.array(px) if px else np.empty((0, g.n)),
        jump_times=np.array(jt),
        jump_angles=np.array(ja),
        jump_etas=np.array(je),
        jump_ys=np.array(jy),
        jump_dlebs=np.array(jd),
        monitors=monitors,
        final=state,
        grid=g,
        meta={"eps": eps, "T": T, "rules": rules.name or rules.F.variant},
    )


def _angle_of(xi: np.ndarray, grid) -> float:
    if grid.n == 2:
        return float(np.mod(math.atan2(xi[1], xi[0]), 2.0 * math.pi))
    return float(np.argmax(grid.nodes @ xi))


def check_monitors(state: GrowthState, rules: RuleSet, m: Monitors) -> Monitors:
    """Evaluate both monitors against the current state (latched flags)."""
    sup_r = lp_norm(state.r, math.inf)
    try:
        density = rules.eval_density(state.r, state.x, rng=None)
        mind = float(np.min(density.values))
    except ValueError:
        mind = math.inf  # harmonic-mc needs an rng; density monitor undefined
    m.observe(state.t, sup_r, mind)
    return m


def rescale_trajectory(traj: Trajectory, c: float) -> Trajectory:
    """Map a scale-1 trajectory into the scale-c clock.

    Times contract by c and lengths by c^{1/n}, matching the exact coupling
    between the unit-rate process and the rate-1/c process.
    """
    if c <= 0:
        raise ValueError("scale must be positive")
    n = traj.grid.n
    s = c ** (1.0 / n)
    final = GrowthState(
        r=RadialField(traj.final.r.grid, s * traj.final.r.values),
        x=s * traj.final.x,
        t=c * traj.final.t,
        jumps=traj.final.jumps,
        clamp_count=traj.final.clamp_count,
        resolution_warnings=traj.final.resolution_warnings,
    )
    return Trajectory(
        snapshot_times=c * traj.snapshot_times,
        snapshots=s * traj.snapshots,
        particle_times=c * traj.particle_times,
        particle_track=s * traj.particle_track,
        jump_times=c * traj.jump_times,
        jump_angles=traj.jump_angles.copy(),
        jump_etas=traj.jump_etas.copy(),
        jump_ys=s ** (n - 1) * traj.jump_ys,
        jump_dlebs=c * traj.jump_dlebs,
        monitors=traj.monitors,
        final=final,
        grid=traj.grid,
        meta=dict(traj.meta, rescaled_by=c),
    )


def coupled_scale_runs(
    r0_unit: RadialField,
    x0_unit: np.ndarray,
    rules: RuleSet,
    eps: float,
    T: float,
    seed: int,
) -> tuple[Trajectory, Trajectory, float]:
    """Run the scale-1 process and its eps-rescaled twin on a shared schedule.

    Returns (eps-trajectory, scale-1 trajectory, max node-wise deviation of
    the boundary fields at the shared jump epochs).
    """
    g = r0_unit.grid
    n = g.n
    rng1 = derive_rng(seed, "coupling-hits")
    traj1 = simulate(
        r0_unit, x0_unit, rules, 1.0, T / eps, rng1,
        snapshot_times=np.array([T / eps]),
    )
    # replay the epsilon run with the recorded angles on the scaled clock
    if g.n == 2:
        xis = np.column_stack([np.cos(traj1.jump_angles), np.sin(traj1.jump_angles)])
    else:
        xis = g.nodes[traj1.jump_angles.astype(int)]
    s = eps ** (1.0 / n)
    rng_eps = derive_rng(seed, "coupling-eps")
    traj_eps = simulate(
        RadialField(g, s * r0_unit.values),
        s * np.asarray(x0_unit, float),
        rules,
        eps,
        T,
        rng_eps,
        snapshot_times=np.array([T]),
        forced_schedule=(eps * traj1.jump_times, xis),
    )
    ref = rescale_trajectory(traj1, eps)
    max_dev = float(
        np.max(np.abs(traj_eps.final.r.values - ref.final.r.values))
    )
    return traj_eps, ref, max_dev
