import math

import numpy as np
import pytest

from stargrowth.exceptions import ConfigError, GridError
from stargrowth.experiments import (
    ExperimentConfig,
    averaging_sweep,
    figure3_run,
    l2_distance_series,
    shape_from_spec,
    shape_metric_series,
    shape_rescale_experiment,
)
from stargrowth.ode import OdeTrajectory, integrate_ode
from stargrowth.process import rescale_trajectory, simulate
from stargrowth.rng import derive_rng
from stargrowth.rules import preset_ruleset
from stargrowth.sphere import RadialField, leb_volume, make_grid


@pytest.fixture(scope="module")
def circle():
    return make_grid(2, 256)


class TestShapes:
    def test_ball(self, circle):
        r = shape_from_spec(circle, {"kind": "ball", "radius": 2.0})
        assert np.all(r.values == 2.0)

    def test_sunflower(self, circle):
        r = shape_from_spec(circle, {"kind": "sunflower", "k": 6, "amp": 0.3})
        assert np.allclose(r.values, 1.0 + 0.3 * np.cos(6 * circle.thetas))

    def test_ellipse_axes(self, circle):
        r = shape_from_spec(circle, {"kind": "ellipse", "b": 0.5})
        assert math.isclose(r.values[0], 1.0, rel_tol=1e-12)
        quarter = circle.M // 4
        assert math.isclose(r.values[quarter], 0.5, rel_tol=1e-12)
        assert math.isclose(leb_volume(r), math.pi * 0.5, rel_tol=1e-6)

    def test_bad_specs(self, circle):
        for spec in ({"kind": "cube"}, {"kind": "ball", "radius": -1},
                     {"kind": "sunflower", "amp": 1.5}):
            with pytest.raises(ConfigError):
                shape_from_spec(circle, spec)


class TestConfig:
    def test_eps_must_decrease(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(preset="uniform_origin", eps_list=(1e-3, 1e-2))

    def test_seeds_distinct(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(preset="uniform_origin", seeds=(1, 1))


class TestL2Series:
    def test_identical_inputs_zero(self, circle):
        rules = preset_ruleset("uniform_origin")
        traj = simulate(circle.constant_field(1.0), np.zeros(2), rules,
                        1e-2, 0.3, derive_rng(0, "l2"))
        fake_ode = OdeTrajectory(
            times=traj.snapshot_times, states=traj.snapshots,
            bbar_values=np.zeros_like(traj.snapshots), bbar_stderr=None,
            grid=circle,
        )
        m = l2_distance_series(traj, fake_ode)
        assert np.all(m.values == 0.0) and m.sup == 0.0

    def test_grid_mismatch(self, circle):
        rules = preset_ruleset("uniform_origin")
        traj = simulate(circle.constant_field(1.0), np.zeros(2), rules,
                        1e-2, 0.1, derive_rng(0, "gm"))
        other = make_grid(2, 128)
        ode = integrate_ode(other.constant_field(1.0), rules, T=0.1, dt=1e-3)
        with pytest.raises(GridError):
            l2_distance_series(traj, ode)

    def test_running_sup_monotone(self, circle):
        rules = preset_ruleset("boundary_prop_origin")
        r0 = circle.constant_field(1.0)
        traj = simulate(r0, np.zeros(2), rules, 1e-2, 0.5, derive_rng(1, "rs"))
        ode = integrate_ode(r0, rules, T=0.5, dt=1e-3)
        m = l2_distance_series(traj, ode)
        assert np.all(np.diff(m.running_sup) >= 0.0)
        assert m.sup >= m.values.max() - 1e-15


@pytest.fixture(scope="module")
def sweep_cfg():
    return ExperimentConfig(
        preset="distpow_gamma",
        shape={"kind": "sunflower", "k": 3, "amp": 0.2},
        eps_list=(0.1, 0.01),
        seeds=(0, 1, 2, 3, 4),
        T=0.3,
        M=256,
    )


@pytest.fixture(scope="module")
def sweep_result(sweep_cfg):
    return averaging_sweep(sweep_cfg)


class TestAveragingSweep:
    def test_row_shape(self, sweep_cfg, sweep_result):
        assert len(sweep_result["rows"]) == len(sweep_cfg.eps_list) * len(sweep_cfg.seeds)
        assert all(np.isfinite(row["sup_l2"]) for row in sweep_result["rows"])

    def test_medians_decrease(self, sweep_result):
        meds = [s["median_sup_l2"] for s in sweep_result["summary"]]
        assert meds[0] > meds[1]
        assert sweep_result["monotone_medians"]
        assert sweep_result["sign_test_pvalue"] < 0.05

    def test_reproducible(self, sweep_cfg, sweep_result):
        again = averaging_sweep(sweep_cfg)
        assert again == sweep_result


class TestShapeRescale:
    def test_requires_scale_invariance(self):
        cfg = ExperimentConfig(preset="harmonic_mc_gamma", T=2.0,
                               N_list=(10,), seeds=(0,), M=128)
        with pytest.raises(ConfigError):
            shape_rescale_experiment(cfg)

    def test_decreasing_in_N(self):
        cfg = ExperimentConfig(
            preset="boundary_prop_origin",
            shape={"kind": "sunflower", "k": 3, "amp": 0.2},
            T=2.0, N_list=(10, 300), seeds=(0, 1, 2, 3, 4), M=256,
        )
        out = shape_rescale_experiment(cfg, n_snap=9)
        assert out["decreasing_in_N"]

    def test_eps_coupling_gives_identical_metric(self, circle):
        rules = preset_ruleset("boundary_prop_origin")
        psi_raw = circle.field(1.0 + 0.2 * np.cos(3 * circle.thetas))
        psi = RadialField(circle, psi_raw.values / leb_volume(psi_raw) ** 0.5)
        N, c = 50.0, 1.0
        s_grid = np.linspace(1.0, 2.0, 9)
        r0 = RadialField(circle, (c * N) ** 0.5 * psi.values)
        traj = simulate(r0, np.zeros(2), rules, 1.0, 2.0 * N,
                        derive_rng(7, "cpl"), snapshot_times=s_grid * N)
        m_unit = shape_metric_series(traj, psi, c, N)
        resc = rescale_trajectory(traj, 1.0 / N)
        vals = []
        for i, s in enumerate(resc.snapshot_times):
            diff = resc.snapshots[i] / (c + s) ** 0.5 - psi.values
            vals.append(math.sqrt(float(np.sum(diff**2 * circle.weights))))
        assert np.allclose(m_unit.values, vals, atol=1e-12)


class TestFigure3:
    def test_run_outputs(self):
        cfg = ExperimentConfig(
            preset="harmonic_mc_plus_shift",
            shape={"kind": "sunflower", "k": 5, "amp": 0.2},
            eps_list=(0.01,), seeds=(3,), T=1.0, M=256,
        )
        out = figure3_run(cfg, n_snap=9)
        assert out["snapshots"].shape == (9, 256)
        assert np.all(np.diff(out["diameter"]) >= 0.0)
        assert np.all(out["diameter"] >= 1.0)
        assert np.all(np.isfinite(out["normalized_oscillation"]))

    def test_radial_pull_rounds_out_with_refinement(self):
        # at desk scale the bump noise still roughens a single run, but the
        # final normalized oscillation improves as eps is refined
        finals = []
        for eps in (2e-2, 2e-3):
            cfg = ExperimentConfig(
                preset="harmonic_mc_gamma",
                shape={"kind": "sunflower", "k": 4, "amp": 0.3},
                eps_list=(eps,), seeds=(0,), T=2.0, M=256,
            )
            out = figure3_run(cfg, n_snap=9)
            finals.append(out["normalized_oscillation"][-1])
        assert finals[1] < finals[0]
