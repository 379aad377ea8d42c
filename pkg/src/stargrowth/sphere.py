"""Discretized functions on the unit sphere.

Provides the angular grid, radial boundary fields, Lp norms, enclosed
volumes, localized bump kernels and spherical convolution.  Everything here
is a pure function of immutable value objects; fields never mutate in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.special import gamma as gamma_fn

from .exceptions import GridError, UnderResolvedBumpError

__all__ = [
    "SphereGrid",
    "RadialField",
    "BumpKernel",
    "surface_area",
    "make_grid",
    "lp_norm",
    "leb_volume",
    "oscillation",
    "make_bump_kernel",
    "cosine_profile",
    "spherical_convolve",
    "add_bump",
    "interp_values",
]


def surface_area(n: int) -> float:
    """Surface area of the unit sphere in R^n: 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / gamma_fn(n / 2.0)


def cosine_profile(s):
    """Default bump profile (1 + cos(pi s)) / 2 on [-1, 1], sup-norm 1."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) <= 1.0, 0.5 * (1.0 + np.cos(np.pi * s)), 0.0)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SphereGrid:
    """Quadrature grid on S^{n-1}.

    For n=2 the nodes are equispaced angles with uniform trapezoid weights
    (spectrally accurate for periodic integrands).  For n=3 a Fibonacci
    layout with spherical-Voronoi cell areas as weights is used.
    """

    n: int
    M: int
    nodes: np.ndarray          # (M, n) unit vectors
    weights: np.ndarray        # (M,) area weights, sum = surface_area(n)
    thetas: np.ndarray | None  # (M,) angles in [0, 2pi), n=2 only

    @property
    def area(self) -> float:
        return surface_area(self.n)

    @property
    def spacing(self) -> float:
        """Representative angular spacing between neighboring nodes."""
        if self.n == 2:
            return 2.0 * math.pi / self.M
        # mean Voronoi cell diameter scale
        return math.sqrt(self.area / self.M)

    def constant_field(self, value: float) -> "RadialField":
        return RadialField(self, np.full(self.M, float(value)))

    def field(self, values) -> "RadialField":
        return RadialField(self, np.asarray(values, dtype=float))


@dataclass(frozen=True)
class RadialField:
    """Real-valued function on the grid nodes (length units when a boundary)."""

    grid: SphereGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise GridError(f"values shape {v.shape} != grid size ({self.grid.M},)")
        object.__setattr__(self, "values", _freeze(v))

    def with_values(self, values) -> "RadialField":
        return RadialField(self.grid, values)

    def __add__(self, other):
        if isinstance(other, RadialField):
            _require_same_grid(self, other)
            return RadialField(self.grid, self.values + other.values)
        return RadialField(self.grid, self.values + other)

    def __mul__(self, c):
        return RadialField(self.grid, self.values * float(c))

    __rmul__ = __mul__


def _require_same_grid(a: RadialField, b) -> None:
    if a.grid is not b.grid and (
        a.grid.n != b.grid.n
        or a.grid.M != b.grid.M
        or not np.array_equal(a.grid.nodes, b.grid.nodes)
    ):
        raise GridError("operands live on different grids")


def make_grid(n: int, M: int) -> SphereGrid:
    """Build a quadrature grid on S^{n-1} with M nodes."""
    if n not in (2, 3):
        raise GridError(f"unsupported ambient dimension n={n}")
    if M < 16:
        raise GridError(f"grid too coarse: M={M} < 16")
    if n == 2:
        thetas = 2.0 * math.pi * np.arange(M) / M
        nodes = np.column_stack([np.cos(thetas), np.sin(thetas)])
        weights = np.full(M, 2.0 * math.pi / M)
        return SphereGrid(2, M, _freeze(nodes), _freeze(weights), _freeze(thetas))
    # n == 3: Fibonacci layout, Voronoi cell areas as weights
    from scipy.spatial import SphericalVoronoi

    i = np.arange(M)
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    z = 1.0 - (2.0 * i + 1.0) / M
    phi = 2.0 * math.pi * i / golden
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    nodes = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])
    sv = SphericalVoronoi(nodes, radius=1.0)
    weights = sv.calculate_areas()
    return SphereGrid(3, M, _freeze(nodes), _freeze(weights), None)


def lp_norm(f: RadialField, p: float) -> float:
    """L^p(S^{n-1}) norm with the grid quadrature; max norm for p=inf."""
    if p == math.inf:
        return float(np.max(np.abs(f.values)))
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    return float(np.sum(np.abs(f.values) ** p * f.grid.weights) ** (1.0 / p))


def leb_volume(r: RadialField) -> float:
    """Volume enclosed by the boundary graph: n^{-1} * sum r^n w."""
    if np.any(r.values < 0):
        raise ValueError("boundary field must be nonnegative")
    n = r.grid.n
    return float(np.sum(r.values**n * r.grid.weights) / n)


def oscillation(r: RadialField) -> float:
    return float(np.max(r.values) - np.min(r.values))


def interp_values(r: RadialField, directions: np.ndarray) -> np.ndarray:
    """Evaluate the field at arbitrary unit directions.

    n=2 uses periodic linear interpolation in angle; n=3 falls back to the
    nearest grid node.
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    g = r.grid
    if g.n == 2:
        ang = np.mod(np.arctan2(directions[:, 1], directions[:, 0]), 2.0 * math.pi)
        pos = ang / (2.0 * math.pi / g.M)
        j0 = np.floor(pos).astype(int) % g.M
        frac = pos - np.floor(pos)
        j1 = (j0 + 1) % g.M
        out = (1.0 - frac) * r.values[j0] + frac * r.values[j1]
    else:
        idx = np.argmax(directions @ g.nodes.T, axis=1)
        out = r.values[idx]
    return out


# --------------------------------------------------------------------------
# Bump kernels


def _continuum_c_eta_inv(phi: Callable, eta: float, n: int) -> float:
    """Continuum normalizer integral; kept as a cross-check on the grid one."""
    exp = (n - 3) / 2.0

    def integrand(s):
        return phi(1.0 - 2.0 * s) * s**exp * (1.0 - eta * eta * s) ** exp

    val, _ = quad(integrand, 0.0, 1.0, limit=200)
    return 2.0 ** (n - 2) / surface_area(n) * val


@dataclass(frozen=True)
class BumpKernel:
    """Localized spherical bump g_eta(t), supported on t in [1 - 2 eta^2, 1].

    The discrete normalization constant is fixed by the grid quadrature so
    that the convolution of the constant-one field with the kernel is exactly
    one at every node; evaluation centered off-grid renormalizes per center,
    which makes the deposited mass of every bump exact.
    """

    eta: float
    grid: SphereGrid
    phi: Callable = field(repr=False)
    c_disc: float        # grid normalization, center on node 0
    c_continuum: float   # closed-form normalizer (cross-check only)

    @property
    def support_min(self) -> float:
        return 1.0 - 2.0 * self.eta * self.eta

    @property
    def angular_radius(self) -> float:
        """Half-angle of the support cap (chord radius 2 eta)."""
        return math.acos(max(-1.0, self.support_min))

    def g(self, t) -> np.ndarray:
        """Tabulated kernel values g_eta(t) with the grid normalization."""
        t = np.asarray(t, dtype=float)
        s = 1.0 - (1.0 - t) / (self.eta * self.eta)
        raw = np.where(t >= self.support_min, self.phi(np.clip(s, -1.0, 1.0)), 0.0)
        return self.c_disc * raw

    def max_value(self) -> float:
        return self.c_disc * 1.0  # sup phi = 1 attained at t = 1

    def _raw_at_nodes(self, center: np.ndarray):
        """Unnormalized profile sampled at grid nodes, windowed for n=2."""
        g = self.grid
        if g.n == 2:
            # restrict to the support window around the center angle
            ang = math.atan2(center[1], center[0]) % (2.0 * math.pi)
            half = self.angular_radius
            dth = 2.0 * math.pi / g.M
            j_center = ang / dth
            k = int(math.ceil(half / dth)) + 1
            if 2 * k + 2 >= g.M:
                idx = np.arange(g.M)
            else:
                idx = (
                    np.arange(math.floor(j_center) - k, math.floor(j_center) + k + 2)
                    % g.M
                )
            t = np.cos(g.thetas[idx] - ang)
        else:
            idx = np.arange(g.M)
            t = g.nodes @ center
        s = 1.0 - (1.0 - t) / (self.eta * self.eta)
        raw = np.where(t >= self.support_min, self.phi(np.clip(s, -1.0, 1.0)), 0.0)
        return idx, raw

    def evaluate(self, center: np.ndarray) -> np.ndarray:
        """Kernel values g_eta(<center, node_j>) on the full grid.

        Normalized per center so the quadrature mass is exactly surface_area(n).
        """
        g = self.grid
        center = np.asarray(center, dtype=float)
        idx, raw = self._raw_at_nodes(center)
        mass = float(np.sum(raw * g.weights[idx]))
        out = np.zeros(g.M)
        if mass <= 0.0:
            # bump far below grid resolution: deposit all mass on the nearest
            # node so the quadrature mass stays exact
            j = int(np.argmax(g.nodes @ center))
            out[j] = g.area / g.weights[j]
            return out
        out[idx] = raw * (g.area / mass)
        return out


def make_bump_kernel(
    eta: float,
    grid: SphereGrid,
    phi: Callable = cosine_profile,
    min_cap_nodes: int = 3,
) -> BumpKernel:
    """Construct a grid-normalized bump kernel of spherical scale eta.

    Raises UnderResolvedBumpError when the support cap holds fewer than
    ``min_cap_nodes`` nodes; pass min_cap_nodes=1 to allow under-resolved
    bumps (mass stays exact thanks to the per-center normalization).
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError(f"eta must be in (0, 1], got {eta}")
    support_min = 1.0 - 2.0 * eta * eta
    t = grid.nodes @ grid.nodes[0]
    n_in_cap = int(np.sum(t >= support_min))
    if n_in_cap < min_cap_nodes:
        raise UnderResolvedBumpError(
            f"cap of chord radius {2 * eta:g} holds {n_in_cap} node(s) < "
            f"{min_cap_nodes}; increase M or eta"
        )
    s = 1.0 - (1.0 - t) / (eta * eta)
    raw = np.where(t >= support_min, phi(np.clip(s, -1.0, 1.0)), 0.0)
    mass = float(np.sum(raw * grid.weights))
    # continuum prefactor c_eta / (omega_{n-1} eta^{n-1}) for the cross-check
    c_cont_inv = _continuum_c_eta_inv(phi, eta, grid.n)
    c_cont = (
        1.0 / (c_cont_inv * surface_area(grid.n - 1) * eta ** (grid.n - 1))
        if c_cont_inv > 0
        else math.nan
    )
    if mass <= 0.0:
        if min_cap_nodes > 1:
            raise UnderResolvedBumpError(
                "kernel profile vanishes on all grid nodes"
            )
        # far below resolution: only the profile's zero at t = 1 is sampled;
        # per-center evaluation falls back to nearest-node deposition
        c_disc = c_cont
    else:
        c_disc = grid.area / mass
    return BumpKernel(float(eta), grid, phi, c_disc, c_cont)


def spherical_convolve(f: RadialField, k: BumpKernel) -> RadialField:
    """(f * g_eta)(z) = area^{-1} sum_j f_j g_eta(<z, theta_j>) w_j."""
    g = f.grid
    if k.grid is not g and not np.array_equal(k.grid.nodes, g.nodes):
        raise GridError("kernel and field live on different grids")
    if g.n == 2:
        # the grid is translation invariant, so the kernel matrix is circulant
        kvec = k.evaluate(g.nodes[0])
        conv = np.fft.irfft(
            np.fft.rfft(f.values) * np.fft.rfft(kvec), n=g.M
        ) * (g.weights[0] / g.area)
        return RadialField(g, conv)
    rows = np.stack([k.evaluate(node) for node in g.nodes])
    conv = rows @ (f.values * g.weights) / g.area
    return RadialField(g, conv)


def spherical_convolve_direct(f: RadialField, k: BumpKernel) -> RadialField:
    """O(M^2) reference path for the convolution (used to validate the FFT)."""
    g = f.grid
    rows = np.stack([k.evaluate(node) for node in g.nodes])
    conv = rows @ (f.values * g.weights) / g.area
    return RadialField(g, conv)


def add_bump(
    r: RadialField, xi: np.ndarray, amplitude: float, k: BumpKernel
) -> RadialField:
    """Deposit amplitude * g_eta(<xi, .>) on the boundary field."""
    if amplitude < 0:
        raise ValueError("bump amplitude must be nonnegative")
    xi = np.asarray(xi, dtype=float)
    return RadialField(r.grid, r.values + amplitude * k.evaluate(xi))
