import math

import numpy as np
import pytest
from scipy import stats

from stargrowth.exceptions import ConfigError, DomainViolationError
from stargrowth.rng import derive_rng
from stargrowth.rules import (
    HittingRule,
    RuleSet,
    TransportRule,
    UnderSamplingWarning,
    bump_scale,
    drift_b,
    poisson_kernel_ball,
    preset_ruleset,
    ruleset_from_config,
    sample_from_density,
    smooth,
    wos_exit_angles,
    y_factor,
)
from stargrowth.sphere import (
    interp_values,
    leb_volume,
    lp_norm,
    make_bump_kernel,
    make_grid,
    oscillation,
)


@pytest.fixture(scope="module")
def circle():
    return make_grid(2, 1024)


def sunflower(grid, amp=0.3, k=6):
    return grid.field(1.0 + amp * np.cos(k * grid.thetas))


def poisson_cdf_disk(rho, theta):
    """Exact CDF (over (-pi, pi]) of the unit-disk exit angle from (rho, 0)."""
    t = np.asarray(theta, dtype=float)
    return 0.5 + np.arctan((1 + rho) / (1 - rho) * np.tan(t / 2)) / math.pi


class TestSmooth:
    def test_constant(self, circle):
        rs = preset_ruleset("distpow_gamma")
        out = rs.smoothed(circle.constant_field(1.0))
        assert np.max(np.abs(out.values - 1.0)) < 1e-12

    def test_oscillation_reduced(self, circle):
        r = sunflower(circle)
        k = make_bump_kernel(0.1, circle)
        assert oscillation(smooth(r, k)) <= oscillation(r)

    def test_min_preserved_random(self, circle):
        rng = np.random.default_rng(5)
        k = make_bump_kernel(0.1, circle)
        for _ in range(100):
            r = circle.field(0.5 + rng.uniform(0, 1, circle.M))
            assert np.min(smooth(r, k).values) >= np.min(r.values) - 1e-12


class TestEvalDensity:
    def test_uniform(self, circle):
        rs = preset_ruleset("uniform_origin")
        d = rs.eval_density(circle.constant_field(1.0), np.zeros(2))
        assert np.allclose(d.values, 1 / (2 * math.pi), atol=1e-14)

    def test_normalization_and_positivity(self, circle):
        rng = np.random.default_rng(0)
        for name in ("uniform_origin", "boundary_prop_origin", "distpow_gamma",
                     "harmonic_ball_gamma"):
            rs = preset_ruleset(name)
            r = (
                circle.constant_field(1.0)
                if name == "harmonic_ball_gamma"
                else circle.field(1.0 + 0.3 * rng.uniform(-1, 1, circle.M))
            )
            d = rs.eval_density(r, np.array([0.2, 0.1]))
            assert abs(np.sum(d.values * circle.weights) - 1.0) < 1e-10
            assert np.all(d.values > 0)

    def test_exact_ball_value(self, circle):
        rs = preset_ruleset("harmonic_ball_gamma")
        d = rs.eval_density(circle.constant_field(1.0), np.array([0.5, 0.0]))
        # Poisson kernel of the unit disk at theta=0 from (0.5, 0)
        assert abs(d.values[0] - 3 / (2 * math.pi)) < 1e-10

    def test_distance_power_beta_zero(self, circle):
        rs = RuleSet(HittingRule("distance-power", beta=0.0), TransportRule("origin"))
        for x in (np.zeros(2), np.array([0.3, -0.4])):
            d = rs.eval_density(circle.constant_field(1.0), x)
            assert np.allclose(d.values, 1 / (2 * math.pi), atol=1e-12)

    def test_outside_point_rejected(self, circle):
        rs = preset_ruleset("distpow_gamma")
        with pytest.raises(DomainViolationError):
            rs.eval_density(circle.constant_field(1.0), np.array([1.5, 0.0]))

    def test_harmonic_mc_under_sampling_warns(self, circle):
        rs = RuleSet(HittingRule("harmonic-mc", n_exits=200), TransportRule("origin"))
        with pytest.warns(UnderSamplingWarning):
            rs.eval_density(circle.constant_field(1.0), np.zeros(2),
                            rng=derive_rng(1, "warn"))

    def test_harmonic_mc_matches_exact_bands(self):
        # binned exit frequencies vs exact kernel, 3 sigma multinomial bands
        grid = make_grid(2, 64)
        rho = 1.0
        x = np.array([0.4, 0.2])
        rng = derive_rng(42, "mc-bands")
        n = 100_000
        exits = wos_exit_angles(grid.constant_field(rho), x, n, rng)
        ang = np.mod(np.arctan2(exits[:, 1], exits[:, 0]), 2 * math.pi)
        idx = np.rint(ang / (2 * math.pi / grid.M)).astype(int) % grid.M
        counts = np.bincount(idx, minlength=grid.M)
        p = poisson_kernel_ball(rho, x, grid.nodes, 2) * grid.weights
        p = p / p.sum()
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) <= 3 * sigma + 3)


class TestSampleAngle:
    def test_uniform_chi_square(self, circle):
        rs = preset_ruleset("uniform_origin")
        rng = derive_rng(3, "chi2")
        d = rs.eval_density(circle.constant_field(1.0), np.zeros(2))
        pts = sample_from_density(d, rng, size=100_000)
        ang = np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2 * math.pi)
        counts, _ = np.histogram(ang, bins=64, range=(0, 2 * math.pi))
        _, pval = stats.chisquare(counts)
        assert pval > 0.001

    def test_exact_ball_ks(self, circle):
        rs = preset_ruleset("harmonic_ball_gamma")
        rng = derive_rng(9, "ks")
        r = circle.constant_field(1.0)
        d = rs.eval_density(r, np.array([0.5, 0.0]))
        pts = sample_from_density(d, rng, size=100_000)
        ang = np.arctan2(pts[:, 1], pts[:, 0])
        ks = stats.kstest(ang, lambda t: poisson_cdf_disk(0.5, t)).statistic
        assert ks < 0.006

    def test_seeded_determinism(self, circle):
        rs = preset_ruleset("distpow_gamma")
        r = sunflower(circle)
        runs = []
        for _ in range(2):
            rng = derive_rng(17, "det")
            runs.append(
                np.stack([rs.sample_angle(r, np.array([0.1, 0.0]), rng) for _ in range(50)])
            )
        assert np.array_equal(runs[0], runs[1])


class TestWalkOnSpheres:
    def test_disk_exit_ks(self):
        # acceptance-grade check lives in test_acceptance; smoke version here
        grid = make_grid(2, 256)
        rng = derive_rng(5, "wos")
        exits = wos_exit_angles(grid.constant_field(1.0), np.array([0.5, 0.0]), 20_000, rng)
        ang = np.arctan2(exits[:, 1], exits[:, 0])
        ks = stats.kstest(ang, lambda t: poisson_cdf_disk(0.5, t)).statistic
        assert ks < 0.015

    def test_noncircular_domain_exits_on_boundary(self, circle):
        r = sunflower(circle, amp=0.2)
        rng = derive_rng(6, "wos2")
        exits = wos_exit_angles(r, np.zeros(2), 500, rng)
        assert np.allclose(np.linalg.norm(exits, axis=1), 1.0)


class TestTransport:
    def test_gamma_linear_on_ball(self, circle):
        rs = preset_ruleset("harmonic_mc_gamma")  # gamma = 0.9
        p, clamped = rs.transport(circle.constant_field(1.0), np.array([0.0, 1.0]))
        assert not clamped
        assert np.allclose(p, [0.0, 0.9], atol=1e-12)

    def test_origin(self, circle):
        rs = preset_ruleset("uniform_origin")
        p, _ = rs.transport(sunflower(circle), np.array([1.0, 0.0]))
        assert np.array_equal(p, np.zeros(2))

    def test_statistical_center_symmetry(self, circle):
        rs = RuleSet(HittingRule("uniform"), TransportRule("statistical-center"))
        p, _ = rs.transport(circle.constant_field(1.0), np.array([1.0, 0.0]))
        assert np.linalg.norm(p) < 1e-12

    def test_plus_shift(self, circle):
        rs = RuleSet(
            HittingRule("uniform"),
            TransportRule("anisotropic-pull", aniso="plus-shift"),
            force_unsmoothed=True,
        )
        r = circle.constant_field(2.0)
        p, _ = rs.transport(r, np.array([1.0, 0.0]))
        assert np.allclose(p, [1.0, 0.0], atol=1e-12)
        # below radius one the pull lands on the origin
        p2, _ = rs.transport(circle.constant_field(0.5), np.array([1.0, 0.0]))
        assert np.allclose(p2, 0.0)

    def test_clamp_counts(self, circle):
        # alpha violating the interiority bound must be clamped inside
        rs = RuleSet(
            HittingRule("uniform"),
            TransportRule("radial-pull", alpha=lambda ell, z: 2.0 * ell),
            force_unsmoothed=True,
        )
        r = circle.constant_field(1.0)
        p, clamped = rs.transport(r, np.array([1.0, 0.0]))
        assert clamped
        norm = np.linalg.norm(p)
        assert norm < float(interp_values(r, p[None] / norm)[0])

    def test_interiority_random_fields(self, circle):
        rng = np.random.default_rng(8)
        rs = preset_ruleset("distpow_gamma")
        for _ in range(50):
            r = circle.field(1.0 + 0.5 * rng.uniform(-1, 1, circle.M))
            ang = rng.uniform(0, 2 * math.pi)
            xi = np.array([math.cos(ang), math.sin(ang)])
            p, _ = rs.transport(r, xi)
            norm = np.linalg.norm(p)
            rtilde = rs.smoothed(r)
            assert norm < float(interp_values(rtilde, p[None] / norm)[0])


class TestNormalizerAndDrift:
    def test_y_ball_uniform(self, circle):
        r = circle.constant_field(1.0)
        d = circle.constant_field(1 / (2 * math.pi))
        assert math.isclose(y_factor(r, d), 2 * math.pi, rel_tol=1e-12)

    def test_y_scaled_ball(self, circle):
        r = circle.constant_field(2.0)
        d = circle.constant_field(1 / (2 * math.pi))
        assert math.isclose(y_factor(r, d), 4 * math.pi, rel_tol=1e-12)

    def test_drift_uniform(self, circle):
        r = circle.constant_field(1.0)
        d = circle.constant_field(1 / (2 * math.pi))
        b = drift_b(r, d)
        assert np.allclose(b.values, 1 / (2 * math.pi), atol=1e-14)

    def test_drift_boundary_proportional(self, circle):
        rs = preset_ruleset("boundary_prop_origin")
        r = sunflower(circle)
        d = rs.eval_density(r, np.zeros(2))
        b = drift_b(r, d)
        expect = r.values / (2 * leb_volume(r))
        assert np.max(np.abs(b.values - expect)) < 1e-12

    def test_scaling_probes(self, circle):
        rs = preset_ruleset("distpow_gamma")
        rng = np.random.default_rng(12)
        for _ in range(10):
            r = circle.field(1.0 + 0.4 * rng.uniform(-1, 1, circle.M))
            x = np.array([0.2, -0.1])
            c = rng.uniform(0.5, 3.0)
            d1 = rs.eval_density(r, x)
            d2 = rs.eval_density(c * r, c * x)
            assert np.max(np.abs(d1.values - d2.values)) < 1e-9
            y1, y2 = y_factor(r, d1), y_factor(c * r, d2)
            assert abs(y2 - c * y1) < 1e-9 * abs(y1)
            b1, b2 = drift_b(r, d1), drift_b(c * r, d2)
            assert np.max(np.abs(b2.values - b1.values / c)) < 1e-9
            xi = np.array([1.0, 0.0])
            p1, _ = rs.transport(r, xi)
            p2, _ = rs.transport(c * r, xi)
            assert np.max(np.abs(p2 - c * p1)) < 1e-12 * max(1.0, c)


class TestBumpScale:
    def test_values(self):
        assert math.isclose(bump_scale(1e-4, 2 * math.pi, 2), 1e-2 / (2 * math.pi), rel_tol=1e-12)
        assert math.isclose(bump_scale(1.0, 2 * math.pi, 2), 1 / (2 * math.pi), rel_tol=1e-12)

    def test_scaling(self):
        y = 3.1
        c = 2.0
        n = 2
        assert math.isclose(
            bump_scale(1e-3, c ** (n - 1) * y, n),
            bump_scale(1e-3, y, n) / c,
            rel_tol=1e-12,
        )

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            bump_scale(0.0, 1.0, 2)


class TestConfig:
    def test_roundtrip(self):
        cfg = {
            "F": {"variant": "distance-power", "beta": -1.0},
            "H": {"variant": "gamma-linear", "gamma": 0.5},
            "smoother": {"eta": 0.08},
            "scale_invariant": True,
        }
        rs = ruleset_from_config(cfg)
        assert rs.F.beta == -1.0
        assert rs.H.gamma == 0.5
        assert rs.smoother_eta == 0.08
        assert rs.scale_invariant

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            ruleset_from_config({"F": {"variant": "uniform", "bogus": 1},
                                 "H": {"variant": "origin"}})
        with pytest.raises(ConfigError):
            ruleset_from_config({"F": {"variant": "uniform"},
                                 "H": {"variant": "origin"}, "extra": {}})

    def test_preset(self):
        rs = ruleset_from_config({"preset": "boundary_prop_origin"})
        assert rs.F.variant == "boundary-proportional"

    def test_bad_variant(self):
        with pytest.raises(ConfigError):
            HittingRule("nope")
        with pytest.raises(ConfigError):
            TransportRule("gamma-linear", gamma=1.5)
