"""Deterministic PNG rendering of run directories.

Rendering is read-only and reproducible: fixed DPI, fixed color maps, no
timestamps; re-rendering a run yields byte-identical images.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .readers import (  # noqa: E402
    FormatError,
    read_kernel_validation,
    read_lattice_run,
    read_sweep_run,
    read_trajectory_run,
)

__all__ = ["PLOT_KINDS", "RenderSpec", "render"]

PLOT_KINDS = (
    "domain-evolution",
    "lattice-heatmap",
    "sweep-lines",
    "kernel-validation",
)


@dataclass(frozen=True)
class RenderSpec:
    run_dir: str
    kind: str
    out: str
    cmap: str = "viridis"
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise FormatError(
                f"unknown plot kind {self.kind!r}; choose from {PLOT_KINDS}"
            )


def render(spec: RenderSpec) -> Path:
    fig = plt.figure(figsize=(6, 6))
    try:
        ax = fig.add_subplot(111)
        _DISPATCH[spec.kind](ax, spec)
        out = Path(spec.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(out, dpi=spec.dpi, metadata={"Software": None})
    finally:
        plt.close(fig)
    return Path(spec.out)


def _time_colors(times, cmap):
    # color scale proportional to t^2 so late epochs get distinct bands
    tmax = max(float(times[-1]), 1e-300)
    return plt.get_cmap(cmap)((np.asarray(times) / tmax) ** 2)


def _draw_domain_evolution(ax, spec: RenderSpec) -> None:
    run = read_trajectory_run(spec.run_dir)
    times, thetas, values = run["times"], run["thetas"], run["values"]
    colors = _time_colors(times, spec.cmap)
    cos, sin = np.cos(thetas), np.sin(thetas)
    # paint from the final (outermost) domain inward: later bands stay
    # visible as rings around earlier ones
    for i in range(len(times) - 1, -1, -1):
        x = np.append(values[i] * cos, values[i, 0])
        y = np.append(values[i] * sin, values[i, 0] * sin[0])
        ax.fill(x, y, color=colors[i], linewidth=0)
    lim = 1.05 * float(values.max())
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_aspect("equal")
    ax.set_title(f"domain evolution (T={times[-1]:g})")


def _draw_lattice_heatmap(ax, spec: RenderSpec) -> None:
    run = read_lattice_run(spec.run_dir)
    x, y, v = run["x"], run["y"], run["value"]
    half = int(max(np.abs(x).max(), np.abs(y).max(), 1))
    img = np.full((2 * half + 1, 2 * half + 1), np.nan)
    img[y + half, x + half] = v
    cmap = plt.get_cmap(spec.cmap).copy()
    cmap.set_bad("white")
    ax.imshow(img, origin="lower", cmap=cmap,
              extent=(-half - 0.5, half + 0.5, -half - 0.5, half + 0.5))
    ax.set_aspect("equal")
    walk = run["meta"].get("walk", "walk")
    ax.set_title(f"{walk} range, sqrt(first visit time)")


def _draw_sweep_lines(ax, spec: RenderSpec) -> None:
    run = read_sweep_run(spec.run_dir)
    by_eps = {}
    for row in run["rows"]:
        by_eps.setdefault(row["epsilon"], []).append((row["seed"],
                                                     row["sup_l2"]))
    for eps in sorted(by_eps, reverse=True):
        pairs = sorted(by_eps[eps])
        seeds = [p[0] for p in pairs]
        sups = [p[1] for p in pairs]
        ax.plot(seeds, sups, marker="o", label=f"eps={eps:g}")
    ax.set_yscale("log")
    ax.set_xlabel("seed")
    ax.set_ylabel("sup L2 distance to ODE")
    ax.legend()
    ax.set_title("averaging sweep")


def _draw_kernel_validation(ax, spec: RenderSpec) -> None:
    report = read_kernel_validation(spec.run_dir)
    per_eta = report.get("per_eta_norm_error") or {
        str(e): report["kernel_norm_error"] for e in report.get("etas", [0])
    }
    labels = sorted(per_eta, key=float)
    errs = [max(per_eta[k], 1e-18) for k in labels]
    ax.bar(range(len(labels)), errs, color="tab:blue")
    ax.set_xticks(range(len(labels)), [f"eta={k}" for k in labels])
    ax.set_yscale("log")
    ax.axhline(1e-12, color="tab:red", linestyle="--",
               label="normalization tolerance 1e-12")
    ax.set_ylabel("max |1*g_eta - 1|")
    ax.legend()
    ax.set_title(f"kernel normalization; sampler KS={report['wos_ks']:.4f}")


_DISPATCH = {
    "domain-evolution": _draw_domain_evolution,
    "lattice-heatmap": _draw_lattice_heatmap,
    "sweep-lines": _draw_sweep_lines,
    "kernel-validation": _draw_kernel_validation,
}
