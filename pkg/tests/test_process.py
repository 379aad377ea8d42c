import math

import numpy as np
import pytest

from stargrowth.exceptions import UnderResolvedBumpError
from stargrowth.process import (
    Monitors,
    GrowthState,
    check_monitors,
    coupled_scale_runs,
    geometric_snapshot_times,
    rescale_trajectory,
    simulate,
    step,
)
from stargrowth.rng import derive_rng
from stargrowth.rules import preset_ruleset
from stargrowth.sphere import leb_volume, make_grid


@pytest.fixture(scope="module")
def circle():
    return make_grid(2, 256)


def ball(grid, radius=1.0):
    return grid.constant_field(radius)


class TestStep:
    def test_advances_state(self, circle):
        rules = preset_ruleset("uniform_origin")
        s0 = GrowthState(r=ball(circle), x=np.zeros(2))
        s1 = step(s0, rules, 1e-2, derive_rng(0, "step"))
        assert s1.jumps == 1
        assert s1.t > 0.0
        assert np.all(s1.r.values >= s0.r.values)
        assert np.any(s1.r.values > s0.r.values)
        # input state untouched
        assert s0.jumps == 0 and s0.t == 0.0

    def test_strict_under_resolution(self):
        g = make_grid(2, 64)
        rules = preset_ruleset("uniform_origin")
        s0 = GrowthState(r=ball(g), x=np.zeros(2))
        with pytest.raises(UnderResolvedBumpError):
            step(s0, rules, 1e-8, derive_rng(0, "strict"), strict=True)
        s1 = step(s0, rules, 1e-8, derive_rng(0, "strict"))
        assert s1.resolution_warnings == 1


class TestSimulate:
    def test_determinism(self, circle):
        rules = preset_ruleset("boundary_prop_origin")
        kw = dict(eps=1e-2, T=0.5)
        a = simulate(ball(circle), np.zeros(2), rules, rng=derive_rng(5, "d"), **kw)
        b = simulate(ball(circle), np.zeros(2), rules, rng=derive_rng(5, "d"), **kw)
        assert np.array_equal(a.final.r.values, b.final.r.values)
        assert np.array_equal(a.jump_times, b.jump_times)
        assert np.array_equal(a.particle_track, b.particle_track)

    def test_snapshots_cadlag_monotone(self, circle):
        rules = preset_ruleset("uniform_origin")
        traj = simulate(
            ball(circle), np.zeros(2), rules, 1e-2, 1.0, derive_rng(1, "s")
        )
        assert traj.snapshot_times[0] == 0.0
        assert np.array_equal(traj.snapshots[0], ball(circle).values)
        diffs = np.diff(traj.snapshots, axis=0)
        assert np.all(diffs >= 0.0)

    def test_geometric_snapshot_times(self):
        t = geometric_snapshot_times(2.0)
        assert t[0] == 0.0 and t[-1] == 2.0
        assert np.all(np.diff(t) > 0)
        assert math.isclose(t[-1] / t[-2], 2.0)

    def test_jump_count_poisson_mean(self, circle):
        rules = preset_ruleset("uniform_origin")
        eps, T, reps = 1e-2, 1.0, 30
        counts = [
            simulate(
                ball(circle), np.zeros(2), rules, eps, T,
                derive_rng(k, "count"), snapshot_times=np.array([T]),
            ).final.jumps
            for k in range(reps)
        ]
        mean = np.mean(counts)
        # Poisson(T/eps): mean 100, sd of the sample mean sqrt(100/30)
        assert abs(mean - T / eps) < 3.0 * math.sqrt(T / eps / reps)

    def test_volume_bookkeeping_telescopes(self, circle):
        rules = preset_ruleset("uniform_origin")
        r0 = ball(circle)
        traj = simulate(r0, np.zeros(2), rules, 1e-2, 1.0, derive_rng(2, "v"))
        total = math.fsum(traj.jump_dlebs)
        gained = leb_volume(traj.final.r) - leb_volume(r0)
        assert abs(total - gained) <= 1e-10 * (1.0 + abs(gained))
        # each deposited bump carries expected volume eps
        assert abs(np.mean(traj.jump_dlebs) / 1e-2 - 1.0) < 0.2

    def test_transport_uses_prejump_domain(self, circle):
        rules = preset_ruleset("distpow_gamma")
        r0 = circle.field(1.0 + 0.3 * np.cos(3 * circle.thetas))
        xi = np.array([1.0, 0.0])
        traj = simulate(
            r0, np.zeros(2), rules, 1e-2, 1.0, derive_rng(3, "t"),
            snapshot_times=np.array([1.0]),
            forced_schedule=(np.array([0.4]), xi[None, :]),
        )
        expected, _ = rules.transport(r0, xi)
        assert np.allclose(traj.particle_track[0], expected, atol=1e-14)

    def test_forced_replay_matches_free_run(self, circle):
        rules = preset_ruleset("boundary_prop_origin")
        r0 = ball(circle)
        free = simulate(r0, np.zeros(2), rules, 1e-2, 0.5, derive_rng(9, "r"))
        xis = np.column_stack(
            [np.cos(free.jump_angles), np.sin(free.jump_angles)]
        )
        replay = simulate(
            r0, np.zeros(2), rules, 1e-2, 0.5, derive_rng(99, "unused"),
            snapshot_times=free.snapshot_times,
            forced_schedule=(free.jump_times, xis),
        )
        assert np.max(np.abs(replay.final.r.values - free.final.r.values)) < 1e-12
        assert np.array_equal(replay.jump_times, free.jump_times)


class TestMonitors:
    def test_radius_monitor_latches(self, circle):
        rules = preset_ruleset("uniform_origin")
        m = Monitors(delta_radius=2.0)  # threshold sup r > 0.5
        simulate(
            ball(circle), np.zeros(2), rules, 1e-2, 0.2,
            derive_rng(0, "m"), monitors=m,
        )
        assert m.radius_triggered
        first = m.radius_trigger_time
        m.observe(first + 10.0, 100.0, 1.0)
        assert m.radius_trigger_time == first  # latched

    def test_density_monitor(self, circle):
        rules = preset_ruleset("uniform_origin")
        m = Monitors(delta_density=1.0)  # uniform density 1/(2 pi) < 1
        simulate(
            ball(circle), np.zeros(2), rules, 1e-2, 0.2,
            derive_rng(0, "m2"), monitors=m,
        )
        assert m.density_triggered

    def test_quiet_by_default(self, circle):
        rules = preset_ruleset("uniform_origin")
        traj = simulate(
            ball(circle), np.zeros(2), rules, 1e-2, 0.5, derive_rng(4, "q")
        )
        assert not traj.monitors.radius_triggered
        assert not traj.monitors.density_triggered

    def test_check_monitors_direct(self, circle):
        rules = preset_ruleset("uniform_origin")
        s = GrowthState(r=ball(circle, 3.0), x=np.zeros(2), t=1.5)
        m = check_monitors(s, rules, Monitors(delta_radius=0.5))
        assert m.radius_triggered and m.radius_trigger_time == 1.5


class TestScaling:
    def test_rescale_identity(self, circle):
        rules = preset_ruleset("uniform_origin")
        traj = simulate(
            ball(circle), np.zeros(2), rules, 1e-2, 0.3, derive_rng(6, "id")
        )
        same = rescale_trajectory(traj, 1.0)
        assert np.array_equal(same.final.r.values, traj.final.r.values)
        assert np.array_equal(same.jump_times, traj.jump_times)

    def test_rescale_volume_law(self, circle):
        rules = preset_ruleset("uniform_origin")
        traj = simulate(
            ball(circle), np.zeros(2), rules, 1e-2, 0.3, derive_rng(7, "vl")
        )
        c = 0.04
        scaled = rescale_trajectory(traj, c)
        assert math.isclose(
            leb_volume(scaled.final.r), c * leb_volume(traj.final.r), rel_tol=1e-12
        )
        assert math.isclose(scaled.final.t, c * traj.final.t, rel_tol=1e-12)

    @pytest.mark.parametrize(
        "preset", ["uniform_origin", "boundary_prop_origin", "distpow_gamma"]
    )
    def test_coupling_identity(self, preset):
        g = make_grid(2, 256)
        rules = preset_ruleset(preset)
        r0 = g.field(1.0 + 0.2 * np.cos(2 * g.thetas))
        _, _, dev = coupled_scale_runs(r0, np.zeros(2), rules, 1e-2, 0.05, seed=11)
        assert dev < 1e-10
