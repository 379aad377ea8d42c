"""Hitting kernels F(r,x,.), transport rules H(r,xi) and derived quantities.

A RuleSet bundles one hitting rule, one transport rule and the smoothing
kernel used to regularize the boundary before either rule looks at it.
Rule evaluation is pure given (rule, boundary, position, rng stream).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .exceptions import DegenerateDomainError, DomainViolationError, ConfigError
from .sphere import (
    BumpKernel,
    RadialField,
    SphereGrid,
    add_bump,  # noqa: F401  (re-exported for callers building steps by hand)
    interp_values,
    make_bump_kernel,
    oscillation,
    spherical_convolve,
    surface_area,
)

__all__ = [
    "HittingRule",
    "TransportRule",
    "RuleSet",
    "UnderSamplingWarning",
    "smooth",
    "y_factor",
    "drift_b",
    "bump_scale",
    "wos_exit_angles",
    "sample_from_density",
    "poisson_kernel_ball",
    "preset_ruleset",
    "ruleset_from_config",
    "PRESET_NAMES",
]

HITTING_VARIANTS = (
    "uniform",
    "boundary-proportional",
    "distance-power",
    "harmonic-exact-ball",
    "harmonic-mc",
)
TRANSPORT_VARIANTS = (
    "origin",
    "radial-pull",
    "gamma-linear",
    "anisotropic-pull",
    "statistical-center",
)
ANISO_KINDS = ("plus-shift", "linf-shift", "l1-shift", "linf-scale", "l1-scale")

_INTERIOR_MARGIN = 1e-6   # radial margin required of the particle, rel. max rtilde
_CLAMP_FRACTION = 1.0 - 1e-9


class UnderSamplingWarning(UserWarning):
    """Monte Carlo hitting density estimated from too few exits."""


@dataclass(frozen=True)
class HittingRule:
    variant: str
    beta: float = -1.0
    distance_fn: Callable | None = None   # overrides t**beta when given
    n_exits: int = 100_000
    wos_shell_frac: float = 1e-6

    def __post_init__(self):
        if self.variant not in HITTING_VARIANTS:
            raise ConfigError(f"unknown hitting rule variant {self.variant!r}")


@dataclass(frozen=True)
class TransportRule:
    variant: str
    gamma: float = 0.5
    alpha: Callable | None = None  # radial-pull alpha(ell, z) -> pull radius
    aniso: str | None = None

    def __post_init__(self):
        if self.variant not in TRANSPORT_VARIANTS:
            raise ConfigError(f"unknown transport rule variant {self.variant!r}")
        if self.variant == "anisotropic-pull" and self.aniso not in ANISO_KINDS:
            raise ConfigError(f"unknown anisotropic pull kind {self.aniso!r}")
        if self.variant == "gamma-linear" and not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma-linear requires gamma in [0, 1)")


def smooth(r: RadialField, g: BumpKernel) -> RadialField:
    """Regularized boundary r~ = r * g."""
    return spherical_convolve(r, g)


_SMOOTHER_CACHE: dict[tuple, BumpKernel] = {}


def _smoother_kernel(eta: float, grid: SphereGrid) -> BumpKernel:
    key = (round(eta, 12), grid.n, grid.M)
    k = _SMOOTHER_CACHE.get(key)
    if k is None or k.grid is not grid:
        k = make_bump_kernel(eta, grid)
        _SMOOTHER_CACHE[key] = k
    return k


def poisson_kernel_ball(rho: float, x: np.ndarray, nodes: np.ndarray, n: int):
    """Exact harmonic-measure density (w.r.t. sigma on S^{n-1}) of the ball
    of radius rho seen from interior point x."""
    x = np.asarray(x, dtype=float)
    d = np.linalg.norm(rho * nodes - x, axis=1)
    return rho ** (n - 2) * (rho * rho - float(x @ x)) / (surface_area(n) * d**n)


def wos_exit_angles(
    rtilde: RadialField,
    x: np.ndarray,
    count: int,
    rng: np.random.Generator,
    shell_frac: float = 1e-6,
    max_iters: int = 100_000,
) -> np.ndarray:
    """Walk-on-spheres exit angles (unit vectors) from x in the star domain.

    For constant boundaries the inscribed-ball radius is exact; otherwise the
    distance to the discretized boundary is used with a small safety factor,
    and a walker that steps past the boundary is absorbed where it stands.
    """
    g = rtilde.grid
    n = g.n
    shell = shell_frac * float(np.max(rtilde.values))
    is_ball = oscillation(rtilde) < 1e-12 * float(np.max(rtilde.values))
    radius = float(rtilde.values[0])
    boundary = rtilde.values[:, None] * g.nodes  # (M, n)

    pos = np.tile(np.asarray(x, dtype=float), (count, 1))
    out = np.empty((count, n))
    alive = np.arange(count)
    for _ in range(max_iters):
        if alive.size == 0:
            return out
        p = pos[alive]
        norms = np.linalg.norm(p, axis=1)
        if is_ball:
            d = radius - norms
        else:
            d = 0.98 * np.min(
                np.linalg.norm(p[:, None, :] - boundary[None, :, :], axis=2), axis=1
            )
            # absorbed as soon as the walker leaves the discretized domain
            ang_r = np.where(
                norms > 0, interp_values(rtilde, p / np.maximum(norms, 1e-300)[:, None]), radius
            )
            d = np.where(norms >= ang_r, 0.0, d)
        done = d <= shell
        if np.any(done):
            hit = p[done]
            hn = np.linalg.norm(hit, axis=1)
            # radial projection onto the boundary graph
            safe = np.where(hn > 0, hn, 1.0)
            out[alive[done]] = hit / safe[:, None]
            zero = hn == 0  # degenerate: absorbed at the center, pick uniformly
            if np.any(zero):
                out[alive[done][zero]] = _uniform_directions(int(np.sum(zero)), n, rng)
        live = ~done
        if np.any(live):
            steps = _uniform_directions(int(np.sum(live)), n, rng)
            pos[alive[live]] = p[live] + d[live, None] * steps
        alive = alive[live]
    raise RuntimeError("walk-on-spheres failed to terminate")


def _uniform_directions(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if n == 2:
        ang = rng.uniform(0.0, 2.0 * math.pi, size=count)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_from_density(
    density: RadialField, rng: np.random.Generator, size: int | None = None
) -> np.ndarray:
    """Inverse-CDF draw of boundary angles from a grid density.

    n=2 interpolates linearly within each cell so the samples are continuous
    in angle; n=3 returns grid nodes weighted by their cell masses.
    """
    g = density.grid
    count = 1 if size is None else int(size)
    masses = density.values * g.weights
    cum = np.cumsum(masses)
    total = cum[-1]
    u = rng.uniform(0.0, total, size=count)
    j = np.searchsorted(cum, u, side="right")
    j = np.minimum(j, g.M - 1)
    if g.n == 2:
        prev = np.where(j > 0, cum[j - 1], 0.0)
        frac = (u - prev) / np.maximum(masses[j], 1e-300)
        dth = 2.0 * math.pi / g.M
        ang = g.thetas[j] + (frac - 0.5) * dth
        pts = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        pts = g.nodes[j]
    return pts[0] if size is None else pts


def y_factor(r: RadialField, density: RadialField) -> float:
    """Bump normalizer y = area * sum r^{n-1} density w."""
    g = r.grid
    y = float(g.area * np.sum(r.values ** (g.n - 1) * density.values * g.weights))
    if y < 1e-12:
        raise DegenerateDomainError(f"normalizer y={y:g} below numerical floor")
    return y


def drift_b(r: RadialField, density: RadialField) -> RadialField:
    """Pre-averaged drift b = area * density / y."""
    y = y_factor(r, density)
    return RadialField(r.grid, r.grid.area * density.values / y)


def bump_scale(eps: float, y: float, n: int) -> float:
    """Spherical scale of one deposited bump: eps^{1/n} * y^{-1/(n-1)}."""
    if eps <= 0 or y <= 0:
        raise ValueError("eps and y must be positive")
    return eps ** (1.0 / n) * y ** (-1.0 / (n - 1))


@dataclass(frozen=True)
class RuleSet:
    """One hitting rule, one transport rule and the shared smoothing scale."""

    F: HittingRule
    H: TransportRule
    smoother_eta: float = 0.1
    force_unsmoothed: bool = False  # bypass the smoother ("r~ = r")
    scale_invariant: bool = False
    name: str = ""

    def smoother(self, grid: SphereGrid) -> BumpKernel:
        return _smoother_kernel(self.smoother_eta, grid)

    def smoothed(self, r: RadialField) -> RadialField:
        if self.force_unsmoothed:
            return r
        return smooth(r, self.smoother(r.grid))

    # -- hitting side ------------------------------------------------------

    def _check_interior(self, rtilde: RadialField, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=float)
        rmax = float(np.max(rtilde.values))
        norm = float(np.linalg.norm(x))
        if norm == 0.0:
            return
        bound = float(interp_values(rtilde, x[None, :] / norm)[0])
        if norm > bound - _INTERIOR_MARGIN * rmax:
            raise DomainViolationError(
                f"particle |x|={norm:g} not strictly inside boundary {bound:g}"
            )

    def eval_density(
        self,
        r: RadialField,
        x: np.ndarray,
        rng: np.random.Generator | None = None,
        rtilde: RadialField | None = None,
    ) -> RadialField:
        """Hitting density on the grid, renormalized to quadrature-sum one."""
        g = r.grid
        F = self.F
        if rtilde is None:
            rtilde = self.smoothed(r)
        x = np.asarray(x, dtype=float)
        if F.variant == "uniform":
            vals = np.full(g.M, 1.0 / g.area)
        elif F.variant == "boundary-proportional":
            vals = r.values.copy()
        elif F.variant == "distance-power":
            self._check_interior(rtilde, x)
            d = np.linalg.norm(rtilde.values[:, None] * g.nodes - x, axis=1)
            fn = F.distance_fn
            vals = fn(d) if fn is not None else d**F.beta
        elif F.variant == "harmonic-exact-ball":
            self._check_interior(rtilde, x)
            rho = float(np.mean(rtilde.values))
            if oscillation(rtilde) > 1e-6 * rho:
                raise DomainViolationError(
                    "exact-ball hitting rule requires a (near) constant boundary"
                )
            vals = poisson_kernel_ball(rho, x, g.nodes, g.n)
        elif F.variant == "harmonic-mc":
            self._check_interior(rtilde, x)
            if rng is None:
                raise ValueError("harmonic-mc density estimation needs an rng stream")
            if F.n_exits < 1000:
                warnings.warn(
                    f"harmonic-mc density from only {F.n_exits} exits",
                    UnderSamplingWarning,
                )
            exits = wos_exit_angles(rtilde, x, F.n_exits, rng, F.wos_shell_frac)
            counts = self._bin_exits(g, exits)
            raw = RadialField(g, counts / g.weights)
            vals = smooth(raw, self.smoother(g)).values
        else:  # pragma: no cover
            raise ConfigError(F.variant)
        total = float(np.sum(vals * g.weights))
        if total <= 0:
            raise DegenerateDomainError("hitting density has no mass on the grid")
        return RadialField(g, vals / total)

    @staticmethod
    def _bin_exits(g: SphereGrid, exits: np.ndarray) -> np.ndarray:
        if g.n == 2:
            ang = np.mod(np.arctan2(exits[:, 1], exits[:, 0]), 2.0 * math.pi)
            idx = np.rint(ang / (2.0 * math.pi / g.M)).astype(int) % g.M
        else:
            idx = np.argmax(exits @ g.nodes.T, axis=1)
        return np.bincount(idx, minlength=g.M).astype(float)

    def sample_angle(
        self,
        r: RadialField,
        x: np.ndarray,
        rng: np.random.Generator,
        density: RadialField | None = None,
        rtilde: RadialField | None = None,
    ) -> np.ndarray:
        """One boundary angle distributed per the hitting rule."""
        if self.F.variant == "harmonic-mc":
            if rtilde is None:
                rtilde = self.smoothed(r)
            self._check_interior(rtilde, np.asarray(x, dtype=float))
            return wos_exit_angles(rtilde, x, 1, rng, self.F.wos_shell_frac)[0]
        if density is None:
            density = self.eval_density(r, x, rng=rng, rtilde=rtilde)
        return sample_from_density(density, rng)

    # -- transport side ----------------------------------------------------

    def transport(
        self, r: RadialField, xi: np.ndarray, rtilde: RadialField | None = None
    ) -> tuple[np.ndarray, bool]:
        """New particle position and whether the interior clamp fired."""
        H = self.H
        g = r.grid
        xi = np.asarray(xi, dtype=float)
        if rtilde is None:
            rtilde = self.smoothed(r)
        if H.variant == "origin":
            return np.zeros(g.n), False
        if H.variant == "statistical-center":
            p = (rtilde.values * g.weights) @ g.nodes
            return p, False  # checked downstream, never clamped
        ell = float(interp_values(rtilde, xi[None, :])[0])
        if H.variant == "gamma-linear":
            p = H.gamma * ell * xi
        elif H.variant == "radial-pull":
            if H.alpha is None:
                raise ConfigError("radial-pull requires an alpha(ell, z) callable")
            p = float(H.alpha(ell, xi)) * xi
        else:  # anisotropic-pull
            p = _anisotropic_pull(H.aniso, ell, xi)
        return self._clamp(rtilde, p)

    def _clamp(
        self, rtilde: RadialField, p: np.ndarray
    ) -> tuple[np.ndarray, bool]:
        norm = float(np.linalg.norm(p))
        if norm == 0.0:
            return p, False
        bound = _CLAMP_FRACTION * float(interp_values(rtilde, p[None, :] / norm)[0])
        if norm > bound:
            return p * (bound / norm), True
        return p, False


def _anisotropic_pull(kind: str, ell: float, xi: np.ndarray) -> np.ndarray:
    l1 = float(np.sum(np.abs(xi)))
    linf = float(np.max(np.abs(xi)))
    if kind == "plus-shift":
        return max(ell - 1.0, 0.0) * xi
    if kind == "linf-shift":
        return max(ell - linf, 0.0) * xi
    if kind == "l1-shift":
        return max(ell - l1, 0.0) * xi
    if kind == "linf-scale":
        return (1.0 - linf / 10.0) * ell * xi
    if kind == "l1-scale":
        return (1.0 - l1 / 10.0) * ell * xi
    raise ConfigError(kind)  # pragma: no cover


# --------------------------------------------------------------------------
# Named presets and JSON configuration

PRESET_NAMES = (
    "uniform_origin",
    "boundary_prop_origin",
    "distpow_gamma",
    "distpow_origin_raw",
    "harmonic_ball_gamma",
    "harmonic_mc_gamma",
    "harmonic_mc_plus_shift",
    "harmonic_mc_l1_shift",
    "l1_scale_distpow",
)


def preset_ruleset(name: str) -> RuleSet:
    if name == "uniform_origin":
        return RuleSet(
            HittingRule("uniform"), TransportRule("origin"),
            scale_invariant=True, name=name,
        )
    if name == "boundary_prop_origin":
        return RuleSet(
            HittingRule("boundary-proportional"), TransportRule("origin"),
            scale_invariant=True, name=name,
        )
    if name == "distpow_gamma":
        return RuleSet(
            HittingRule("distance-power", beta=-1.0),
            TransportRule("gamma-linear", gamma=0.5),
            scale_invariant=True, name=name,
        )
    if name == "distpow_origin_raw":
        return RuleSet(
            HittingRule("distance-power", beta=-1.0),
            TransportRule("origin"),
            force_unsmoothed=True, scale_invariant=True, name=name,
        )
    if name == "harmonic_ball_gamma":
        return RuleSet(
            HittingRule("harmonic-exact-ball"),
            TransportRule("gamma-linear", gamma=0.5),
            scale_invariant=True, name=name,
        )
    if name == "harmonic_mc_gamma":
        return RuleSet(
            HittingRule("harmonic-mc"),
            TransportRule("gamma-linear", gamma=0.9),
            name=name,
        )
    if name == "harmonic_mc_plus_shift":
        return RuleSet(
            HittingRule("harmonic-mc"),
            TransportRule("anisotropic-pull", aniso="plus-shift"),
            name=name,
        )
    if name == "harmonic_mc_l1_shift":
        return RuleSet(
            HittingRule("harmonic-mc"),
            TransportRule("anisotropic-pull", aniso="l1-shift"),
            name=name,
        )
    if name == "l1_scale_distpow":
        return RuleSet(
            HittingRule("distance-power", beta=-1.0),
            TransportRule("anisotropic-pull", aniso="l1-scale"),
            scale_invariant=True, name=name,
        )
    raise ConfigError(f"unknown rule-set preset {name!r}")


_F_KEYS = {"variant", "beta", "n_exits", "wos_shell_frac"}
_H_KEYS = {"variant", "gamma", "aniso"}
_SMOOTHER_KEYS = {"eta"}
_TOP_KEYS = {"F", "H", "smoother", "force_unsmoothed", "scale_invariant", "preset"}


def _check_keys(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def ruleset_from_config(cfg: dict) -> RuleSet:
    """Build a RuleSet from the JSON rule configuration schema."""
    _check_keys(cfg, _TOP_KEYS, "rule config")
    if "preset" in cfg:
        base = preset_ruleset(cfg["preset"])
        extra = {k: v for k, v in cfg.items() if k != "preset"}
        if "smoother" in extra:
            _check_keys(extra["smoother"], _SMOOTHER_KEYS, "smoother")
            base = replace(base, smoother_eta=float(extra.pop("smoother")["eta"]))
        if extra:
            raise ConfigError("preset configs only accept a smoother override")
        return base
    if "F" not in cfg or "H" not in cfg:
        raise ConfigError("rule config requires F and H sections (or a preset)")
    fcfg, hcfg = dict(cfg["F"]), dict(cfg["H"])
    _check_keys(fcfg, _F_KEYS, "F")
    _check_keys(hcfg, _H_KEYS, "H")
    F = HittingRule(
        fcfg["variant"],
        beta=float(fcfg.get("beta", -1.0)),
        n_exits=int(fcfg.get("n_exits", 100_000)),
        wos_shell_frac=float(fcfg.get("wos_shell_frac", 1e-6)),
    )
    H = TransportRule(
        hcfg["variant"],
        gamma=float(hcfg.get("gamma", 0.5)),
        aniso=hcfg.get("aniso"),
    )
    smoother_eta = 0.1
    if "smoother" in cfg:
        _check_keys(cfg["smoother"], _SMOOTHER_KEYS, "smoother")
        smoother_eta = float(cfg["smoother"]["eta"])
    return RuleSet(
        F,
        H,
        smoother_eta=smoother_eta,
        force_unsmoothed=bool(cfg.get("force_unsmoothed", False)),
        scale_invariant=bool(cfg.get("scale_invariant", False)),
    )
