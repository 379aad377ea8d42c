"""Command-line front end.

Every command takes an optional JSON config (strict schema, unknown keys
rejected) whose values individual flags override.  Exit codes: 0 success,
2 when an `expect` assertion (or a --strict-promoted warning) fails,
1 on usage or runtime errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError, StarGrowthError
from .experiments import (
    ExperimentConfig,
    averaging_sweep,
    shape_from_spec,
    shape_rescale_experiment,
)
from .lattice import EXCITATION_RULES, new_walk, run_walk
from .ode import integrate_ode, invariant_residual
from .process import simulate
from .rng import derive_rng
from .rules import (
    PRESET_NAMES,
    RuleSet,
    preset_ruleset,
    ruleset_from_config,
    wos_exit_angles,
)
from .runio import (
    write_lattice,
    write_ode_trajectory,
    write_bbar_stderr,
    write_residuals,
    write_sweep,
    write_trajectory_dir,
    _write_json,
)
from .sphere import make_bump_kernel, make_grid, spherical_convolve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EXPECT_FAILED = 2

SHAPE_NAMES = ("ball", "sunflower", "ellipse")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _check_keys(cfg: dict, allowed: set, label: str) -> None:
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigError(f"unknown {label} config keys: {sorted(unknown)}")


def _resolve_rules(spec) -> RuleSet:
    if spec is None:
        raise ConfigError("a rule set is required (--rules or config)")
    if isinstance(spec, dict):
        return ruleset_from_config(spec)
    if spec in PRESET_NAMES:
        return preset_ruleset(spec)
    if str(spec).endswith(".json"):
        return ruleset_from_config(_load_config(str(spec)))
    raise ConfigError(
        f"unknown rule set {spec!r}: use a preset ({', '.join(PRESET_NAMES)}) "
        "or a JSON file"
    )


def _resolve_shape(spec) -> dict:
    if spec is None:
        return {"kind": "ball"}
    if isinstance(spec, str):
        if spec not in SHAPE_NAMES:
            raise ConfigError(f"unknown shape preset {spec!r}")
        return {"kind": spec}
    if isinstance(spec, dict):
        return spec
    raise ConfigError("shape must be a preset name or an object")


def _check_expect(expect: dict, observed: dict) -> list[str]:
    """Compare observed metrics against an expect block.

    Keys ending in ``_max`` / ``_min`` bound the matching metric; other keys
    demand equality.  Returns failure messages (empty = all pass).
    """
    failures = []
    for key, bound in expect.items():
        if key.endswith("_max"):
            name, ok = key[:-4], observed.get(key[:-4], np.inf) <= bound
            op = "<="
        elif key.endswith("_min"):
            name, ok = key[:-4], observed.get(key[:-4], -np.inf) >= bound
            op = ">="
        else:
            name, ok = key, observed.get(key) == bound
            op = "=="
        if name not in observed:
            failures.append(f"expect {key}: no metric named {name!r}")
        elif not ok:
            failures.append(
                f"expect {key}: {name}={observed[name]!r} not {op} {bound!r}"
            )
    return failures


def _finish(observed: dict, expect: dict, strict_failures: list[str]) -> int:
    for k in sorted(observed):
        print(f"{k}: {observed[k]}")
    failures = _check_expect(expect, observed) + strict_failures
    for msg in failures:
        print(f"FAIL {msg}", file=sys.stderr)
    return EXIT_EXPECT_FAILED if failures else EXIT_OK


# ---------------------------------------------------------------------------
# subcommand handlers

_SIM_KEYS = {"rules", "shape", "eps", "T", "M", "n", "seed", "out",
             "snapshots", "expect"}


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _SIM_KEYS, "simulate")
    rules = _resolve_rules(args.rules or cfg.get("rules"))
    shape = _resolve_shape(args.shape or cfg.get("shape"))
    eps = args.eps if args.eps is not None else float(cfg.get("eps", 1e-2))
    T = args.T if args.T is not None else float(cfg.get("T", 1.0))
    M = args.M if args.M is not None else int(cfg.get("M", 1024))
    n = int(cfg.get("n", 2))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = args.out or cfg.get("out") or f"runs/simulate-seed{seed}"

    g = make_grid(n, M)
    r0 = shape_from_spec(g, shape)
    traj = simulate(
        r0, np.zeros(n), rules, eps, T,
        derive_rng(seed, "simulate"), strict=args.strict,
    )
    config_echo = {
        "command": "simulate", "rules": args.rules or cfg.get("rules"),
        "shape": shape, "eps": eps, "T": T, "M": M, "n": n, "seed": seed,
        "version": __version__,
    }
    write_trajectory_dir(out, traj, config=config_echo)
    observed = {
        "out": str(out),
        "jumps": traj.final.jumps,
        "final_time": traj.final.t,
        "clamp_count": traj.final.clamp_count,
        "resolution_warnings": traj.final.resolution_warnings,
        "radius_trigger": traj.monitors.radius_triggered,
        "density_trigger": traj.monitors.density_triggered,
    }
    strict_failures = []
    if args.strict:
        for flag in ("radius_trigger", "density_trigger"):
            if observed[flag]:
                strict_failures.append(f"--strict: monitor {flag} fired")
        if observed["resolution_warnings"]:
            strict_failures.append("--strict: under-resolved bumps deposited")
    return _finish(observed, cfg.get("expect", {}), strict_failures)


_ODE_KEYS = {"rules", "shape", "T", "dt", "M", "n", "estimator", "seed",
             "burn", "length", "out", "expect"}


def _cmd_ode(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _ODE_KEYS, "ode")
    rules = _resolve_rules(args.rules or cfg.get("rules"))
    shape = _resolve_shape(args.shape or cfg.get("shape"))
    T = args.T if args.T is not None else float(cfg.get("T", 1.0))
    M = args.M if args.M is not None else int(cfg.get("M", 1024))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    estimator = cfg.get("estimator", "closed-form")
    out = Path(args.out or cfg.get("out") or "runs/ode")

    g = make_grid(int(cfg.get("n", 2)), M)
    r0 = shape_from_spec(g, shape)
    dt = cfg.get("dt")
    ode = integrate_ode(
        r0, rules, T=T, dt=float(dt) if dt is not None else None,
        estimator=estimator, rng=derive_rng(seed, "ode"),
        burn=int(cfg.get("burn", 1000)), length=int(cfg.get("length", 20000)),
    )
    out.mkdir(parents=True, exist_ok=True)
    write_ode_trajectory(out / "ode_trajectory.csv", ode)
    write_bbar_stderr(out / "bbar_stderr.csv", ode)
    _write_json(out / "meta.json", {
        "command": "ode", "kind": "ode", "T": T, "M": M, "n": g.n,
        "estimator": estimator, "seed": seed, "shape": shape,
        "rules": args.rules or cfg.get("rules"), "version": __version__,
    })
    from .sphere import leb_volume
    leb_err = max(
        abs(leb_volume(ode.state(i)) - leb_volume(r0) - ode.times[i])
        for i in range(0, len(ode.times), max(1, len(ode.times) // 20))
    )
    observed = {"out": str(out), "steps": len(ode.times) - 1,
                "volume_law_error": leb_err}
    return _finish(observed, cfg.get("expect", {}), [])


_INV_KEYS = {"rules", "shape", "M", "n", "estimator", "seed", "burn",
             "length", "out", "expect"}


def _cmd_invariant_check(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _INV_KEYS, "invariant-check")
    rules = _resolve_rules(args.rules or cfg.get("rules"))
    shape = _resolve_shape(args.shape or cfg.get("shape"))
    M = args.M if args.M is not None else int(cfg.get("M", 1024))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    estimator = cfg.get("estimator", "closed-form")

    g = make_grid(int(cfg.get("n", 2)), M)
    psi = shape_from_spec(g, shape)
    res, se = invariant_residual(
        psi, rules, estimator=estimator, rng=derive_rng(seed, "invariant"),
        burn=int(cfg.get("burn", 1000)), length=int(cfg.get("length", 100000)),
    )
    out = args.out or cfg.get("out")
    entry = {"label": f"{shape.get('kind')}", "residual": res, "stderr": se,
             "estimator": estimator}
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_residuals(Path(out) / "residuals.json", [entry])
    observed = {"residual": res, "stderr": se if se is not None else 0.0}
    if se is not None:
        observed["residual_over_stderr"] = res / se if se > 0 else 0.0
    return _finish(observed, cfg.get("expect", {}), [])


_SWEEP_KEYS = {"rules", "shape", "eps_list", "seeds", "T", "M", "n",
               "estimator", "out", "expect"}


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _SWEEP_KEYS, "sweep")
    preset = args.rules or cfg.get("rules")
    if preset not in PRESET_NAMES:
        raise ConfigError("sweep needs a named rule-set preset")
    xcfg = ExperimentConfig(
        preset=preset,
        shape=_resolve_shape(args.shape or cfg.get("shape")),
        eps_list=tuple(cfg.get("eps_list", (1e-2, 1e-3))),
        seeds=tuple(cfg.get("seeds", (0, 1, 2, 3, 4))),
        T=args.T if args.T is not None else float(cfg.get("T", 1.0)),
        M=args.M if args.M is not None else int(cfg.get("M", 1024)),
        n=int(cfg.get("n", 2)),
        estimator=cfg.get("estimator", {}),
    )
    result = averaging_sweep(xcfg)
    out = args.out or cfg.get("out") or "runs/sweep"
    write_sweep(out, result)
    observed = {
        "out": str(out),
        "monotone_medians": result["monotone_medians"],
        "sign_test_pvalue": result["sign_test_pvalue"],
        "final_median_sup_l2": result["summary"][-1]["median_sup_l2"],
    }
    return _finish(observed, cfg.get("expect", {}), [])


_RESCALE_KEYS = {"rules", "shape", "N_list", "c", "seeds", "T", "M", "n",
                 "out", "expect"}


def _cmd_shape_rescale(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _RESCALE_KEYS, "shape-rescale")
    preset = args.rules or cfg.get("rules")
    if preset not in PRESET_NAMES:
        raise ConfigError("shape-rescale needs a named rule-set preset")
    xcfg = ExperimentConfig(
        preset=preset,
        shape=_resolve_shape(args.shape or cfg.get("shape")),
        N_list=tuple(cfg.get("N_list", (100, 1000))),
        c=float(cfg.get("c", 1.0)),
        seeds=tuple(cfg.get("seeds", (0, 1, 2, 3, 4))),
        T=args.T if args.T is not None else float(cfg.get("T", 2.0)),
        M=args.M if args.M is not None else int(cfg.get("M", 1024)),
        n=int(cfg.get("n", 2)),
    )
    result = shape_rescale_experiment(xcfg)
    out = args.out or cfg.get("out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(out) / "rescale_summary.json", result)
    observed = {
        "decreasing_in_N": result["decreasing_in_N"],
        "final_median_sup_shape_l2":
            result["summary"][-1]["median_sup_shape_l2"],
    }
    return _finish(observed, cfg.get("expect", {}), [])


_LATTICE_KEYS = {"walk", "a", "rule", "steps", "seed", "box_halfwidth",
                 "out", "expect"}


def _cmd_lattice(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _LATTICE_KEYS, "lattice")
    walk = args.walk or cfg.get("walk", "orrw")
    if walk not in ("orrw", "oerw"):
        raise ConfigError(f"unknown walk {walk!r}")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    steps = args.steps if args.steps is not None else int(cfg.get("steps", 100000))
    rule = cfg.get("rule", EXCITATION_RULES[0]) if walk == "oerw" else None
    s = new_walk(
        a=float(cfg.get("a", 1.0)), rule=rule,
        box_halfwidth=int(cfg.get("box_halfwidth", 2000)),
    )
    run_walk(s, steps, derive_rng(seed, "lattice", walk))
    out = args.out or cfg.get("out") or f"runs/lattice-{walk}-seed{seed}"
    write_lattice(out, s, meta={"seed": seed, "version": __version__})
    observed = {"out": str(out), "steps": s.steps,
                "range_size": len(s.first_visit), "left_box": s.left_box}
    return _finish(observed, cfg.get("expect", {}), [])


_VALIDATE_KEYS = {"etas", "M", "n_exits", "seed", "out", "expect"}


def _cmd_validate_kernels(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _VALIDATE_KEYS, "validate-kernels")
    etas = cfg.get("etas", (0.02, 0.05, 0.1, 0.2))
    M = args.M if args.M is not None else int(cfg.get("M", 4096))
    n_exits = int(cfg.get("n_exits", 100000))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))

    g = make_grid(2, M)
    ones = g.constant_field(1.0)
    per_eta = {
        str(eta): float(np.max(np.abs(
            spherical_convolve(ones, make_bump_kernel(eta, g)).values - 1.0
        )))
        for eta in etas
    }
    norm_err = max(per_eta.values())
    # walk-on-spheres exits from (0.5, 0) against the exact disk hitting law
    from scipy import stats

    exits = wos_exit_angles(
        ones, np.array([0.5, 0.0]), n_exits, derive_rng(seed, "validate-wos")
    )
    angles = np.mod(np.arctan2(exits[:, 1], exits[:, 0]) + np.pi, 2 * np.pi) - np.pi

    def exact_cdf(t):
        inner = np.tan(np.asarray(t) / 2.0) * (1 + 0.5) / (1 - 0.5)
        return 0.5 + np.arctan(inner) / np.pi

    ks = float(stats.ks_1samp(angles, exact_cdf).statistic)
    observed = {"kernel_norm_error": norm_err, "wos_ks": ks,
                "etas": list(etas), "M": M, "n_exits": n_exits,
                "per_eta_norm_error": per_eta}
    out = args.out or cfg.get("out")
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write_json(Path(out) / "kernel_validation.json", observed)
    return _finish(observed, cfg.get("expect", {}), [])


# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="stargrowth",
        description="Simulators and diagnostics for randomly growing "
                    "star-shaped domains.",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, shapes=True):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--strict", action="store_true")
        sp.add_argument("--rules", help="rule-set preset name or JSON file")
        if shapes:
            sp.add_argument("--shape", help="shape preset: ball, sunflower, ellipse")
        sp.add_argument("--M", type=int)
        sp.add_argument("--T", type=float)

    sp = sub.add_parser("simulate", help="run the jump process")
    common(sp)
    sp.add_argument("--eps", type=float)
    sp.set_defaults(handler=_cmd_simulate)

    sp = sub.add_parser("ode", help="integrate the averaged ODE")
    common(sp)
    sp.set_defaults(handler=_cmd_ode)

    sp = sub.add_parser("invariant-check", help="invariance residual of a shape")
    common(sp)
    sp.set_defaults(handler=_cmd_invariant_check)

    sp = sub.add_parser("sweep", help="averaging sweep across an eps ladder")
    common(sp)
    sp.set_defaults(handler=_cmd_sweep)

    sp = sub.add_parser("shape-rescale", help="rescaled shape-convergence runs")
    common(sp)
    sp.set_defaults(handler=_cmd_shape_rescale)

    sp = sub.add_parser("lattice", help="reference lattice walks")
    common(sp, shapes=False)
    sp.add_argument("--walk", choices=("orrw", "oerw"))
    sp.add_argument("--steps", type=int)
    sp.set_defaults(handler=_cmd_lattice)

    sp = sub.add_parser("validate-kernels", help="kernel and sampler checks")
    common(sp, shapes=False)
    sp.set_defaults(handler=_cmd_validate_kernels)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and EXIT_ERROR
    try:
        return args.handler(args)
    except (StarGrowthError, OSError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
