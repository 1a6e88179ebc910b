"""Finite-volume, renormalized free energy, dissipation, and winding number."""

import json

import numpy as np
import pytest
from scipy.integrate import quad

from kacvortex.energy import (AdmissibilityError, IllDefinedDegreeError,
                              RenormConfig, counterterm, degree,
                              dissipation_rate, finite_volume_energy,
                              interaction_radial, meanfield_excess,
                              profile_circle_samples, renormalized_energy)
from kacvortex.flow import Profile
from kacvortex.grids import ConfigError, build_grid
from kacvortex.kernels import KernelSpec
from kacvortex.meanfield import ThermoContext, inverse_bessel_ratio
from kacvortex.operators import assemble_operator, split_partial

from conftest import relax


def hedgehog(ctx, grid, mode=1):
    return Profile(mode=mode, values=np.full(grid.size, ctx.m_beta),
                   m_beta=ctx.m_beta, grid=grid, decay_class="bounded")


class TestInteraction:
    def test_zero_profile(self, spec_pi, ctx4):
        grid = build_grid(128, 20.0)
        op = assemble_operator(1, spec_pi, grid)
        u = Profile(mode=1, values=np.zeros(grid.size), m_beta=0.0, grid=grid)
        assert interaction_radial(u, op) == pytest.approx(0.0, abs=1e-12)

    def test_hedgehog_log_increments(self, spec_pi, ctx4):
        # successive box doublings add pi m^2 n^2 p log 2 each
        vals = {}
        for R in (20.0, 40.0, 80.0):
            g = build_grid(int(4 * R), R, 2 * R)
            op = assemble_operator(1, spec_pi, g)
            vals[R] = interaction_radial(hedgehog(ctx4, g), op)
        inc1 = vals[40.0] - vals[20.0]
        inc2 = vals[80.0] - vals[40.0]
        expected = np.pi * ctx4.m_beta**2 * np.pi * np.log(2.0)
        assert inc1 == pytest.approx(expected, rel=0.02)
        assert inc2 == pytest.approx(expected, rel=0.01)

    def test_uniform_mode0_bounded(self, spec_pi, ctx4):
        vals = []
        for R in (20.0, 40.0, 80.0):
            g = build_grid(int(4 * R), R, 2 * R)
            op = assemble_operator(0, spec_pi, g)
            vals.append(interaction_radial(hedgehog(ctx4, g, mode=0), op))
        assert np.max(np.abs(vals)) < 1e-6  # constant field, no contrast


class TestCounterterm:
    def test_zero_mode_and_subcritical(self, spec_pi):
        cfg = RenormConfig(R=40.0)
        assert counterterm(cfg, spec_pi, 0, 0.83) == 0.0
        assert counterterm(cfg, spec_pi, 1, 0.0) == 0.0

    def test_gaussian_moment_saturation(self, spec_pi):
        # int_0^inf rho^3 J(rho) drho = 2 p / pi (= 2 at the default width)
        assert spec_pi.cubic_fourier_moment(np.array([100.0]))[0] == pytest.approx(
            2.0, rel=1e-12)
        oracle = quad(lambda q: q**3 * np.exp(-q**2 / (4 * np.pi)) / (4 * np.pi**2),
                      0, 60.0)[0]
        assert oracle == pytest.approx(2.0, rel=1e-9)

    def test_exponential_moment_matches_quadrature(self):
        spec = KernelSpec(kind="exponential", p=1.3)
        for s in (0.5, 2.0, 50.0):
            oracle = quad(lambda q: q**3 * spec.radial_profile(np.array([q]))[0],
                          0, s, limit=200)[0]
            assert spec.cubic_fourier_moment(np.array([s]))[0] == pytest.approx(
                oracle, rel=1e-8)

    def test_doubling_increment(self, spec_pi, ctx4):
        cfg = RenormConfig(R=40.0)
        c1 = counterterm(cfg, spec_pi, 1, ctx4.m_beta, 80.0)
        c0 = counterterm(cfg, spec_pi, 1, ctx4.m_beta, 40.0)
        # saturated inner integral: increment (pi n m)^2/2 * (2p/pi) log 2
        expected = 0.5 * (np.pi * ctx4.m_beta) ** 2 * 2.0 * np.log(2.0)
        assert c1 - c0 == pytest.approx(expected, rel=2e-3)

    def test_nested_quadrature_oracle(self, spec_pi, ctx4):
        cfg = RenormConfig(r0=1.0, C=4.0, R=40.0)
        inner = lambda s: quad(lambda q: q**3 * spec_pi.radial_profile(
            np.array([q]))[0], 0, s, limit=200)[0]
        oracle = 0.5 * (np.pi * ctx4.m_beta) ** 2 * quad(
            lambda r: inner(r / 4.0) / r, 1.0, 40.0, limit=200)[0]
        assert counterterm(cfg, spec_pi, 1, ctx4.m_beta) == pytest.approx(
            oracle, rel=1e-7)

    def test_config_guards(self):
        with pytest.raises(ConfigError):
            RenormConfig(r0=-1.0)
        with pytest.raises(ConfigError):
            RenormConfig(C=1.0)
        with pytest.raises(ConfigError):
            RenormConfig(r0=10.0, R=20.0)


class TestRenormalizedEnergy:
    def test_hedgehog_positive_and_cauchy(self, spec_pi, ctx4):
        totals = {}
        for R in (40.0, 80.0):
            g = build_grid(int(4 * R), R, 2 * R)
            op = assemble_operator(1, spec_pi, g)
            rep = renormalized_energy(hedgehog(ctx4, g), op, ctx4,
                                      RenormConfig(R=R), strict=False)
            totals[R] = rep.total
            assert rep.total > 0
        assert abs(totals[80.0] - totals[40.0]) <= 1e-3 * abs(totals[40.0])

    def test_flow_decreases_total(self, ctx4, op1_std, grid_std, eq_std):
        cfg = RenormConfig(R=grid_std.R)
        start = renormalized_energy(
            Profile(mode=1, values=ctx4.m_beta * grid_std.nodes
                    / np.sqrt(1 + grid_std.nodes**2), m_beta=ctx4.m_beta,
                    grid=grid_std), op1_std, ctx4, cfg)
        end = renormalized_energy(eq_std, op1_std, ctx4, cfg)
        assert end.total <= start.total
        assert end.admissible

    def test_uniform_mode0_total_vanishes(self, spec_pi, ctx4):
        g = build_grid(160, 40.0)
        op = assemble_operator(0, spec_pi, g)
        rep = renormalized_energy(hedgehog(ctx4, g, mode=0), op, ctx4,
                                  RenormConfig(R=40.0), strict=False)
        assert abs(rep.total) < 1e-6

    def test_meanfield_integrand_nonnegative(self, ctx4, eq_std):
        assert meanfield_excess(eq_std, ctx4) >= -1e-12

    def test_r0_shift_stability_under_refinement(self, spec_pi, ctx4):
        shifts = []
        for N in (256, 512):
            g = build_grid(N, 40.0)
            op = assemble_operator(1, spec_pi, g)
            hog = hedgehog(ctx4, g)
            t1 = renormalized_energy(hog, op, ctx4, RenormConfig(r0=1.0, R=40.0),
                                     strict=False).total
            t2 = renormalized_energy(hog, op, ctx4, RenormConfig(r0=2.0, R=40.0),
                                     strict=False).total
            shifts.append(t1 - t2)
        assert abs(shifts[1] - shifts[0]) < 1e-6 * abs(shifts[0])

    def test_inadmissible_rejected(self, spec_pi, ctx4):
        g = build_grid(128, 20.0)
        op = assemble_operator(1, spec_pi, g)
        bad = Profile(mode=1, values=np.full(g.size, 0.4 * ctx4.m_beta),
                      m_beta=ctx4.m_beta, grid=g, decay_class="bounded")
        with pytest.raises(AdmissibilityError):
            renormalized_energy(bad, op, ctx4, RenormConfig(R=20.0))

    def test_core_flag_reported(self, spec_pi, ctx4):
        g = build_grid(128, 20.0)
        op = assemble_operator(1, spec_pi, g)
        rep = renormalized_energy(hedgehog(ctx4, g), op, ctx4,
                                  RenormConfig(R=20.0), strict=False)
        assert any("core" in w for w in rep.warnings)

    def test_json_round_trip(self, ctx4, op1_std, grid_std, eq_std):
        rep = renormalized_energy(eq_std, op1_std, ctx4, RenormConfig(R=grid_std.R))
        data = json.loads(rep.to_json())
        assert data["total"] == pytest.approx(rep.total)
        assert data["grid_size"] == grid_std.size


class TestFiniteVolume:
    def test_uniform_mode0(self, spec_pi, ctx4, grid_small):
        op0 = assemble_operator(0, spec_pi, grid_small)
        split0 = split_partial(op0, 10.0)
        k = split0.n_in
        vals = np.full(grid_small.size, ctx4.m_beta)
        out = finite_volume_energy(vals[:k], vals[k:], split0, split0, ctx4)
        assert abs(out["energy"]) < 1e-8

    def test_decomposition_and_positivity(self, ctx4, op1_small, spec_pi,
                                          grid_small, eq_small):
        split_n = split_partial(op1_small, 10.0)
        split_0 = split_partial(assemble_operator(0, spec_pi, grid_small), 10.0)
        k = split_n.n_in
        vals = np.asarray(eq_small.values)
        base = finite_volume_energy(vals[:k], vals[k:], split_n, split_0, ctx4)
        assert base["energy"] >= -1e-10
        assert base["energy"] == pytest.approx(
            base["bilinear"] + base["boundary_constant"], abs=1e-12)
        rng = np.random.default_rng(8)
        for _ in range(3):
            interior = np.clip(vals[:k] + 0.05 * rng.standard_normal(k), 0.0, 0.95)
            out = finite_volume_energy(interior, vals[k:], split_n, split_0, ctx4)
            assert out["boundary_constant"] == pytest.approx(
                base["boundary_constant"], abs=1e-12)
            assert out["energy"] >= -1e-10
            assert out["energy"] >= base["energy"] - 1e-10  # equilibrium-ish is best


class TestDissipation:
    def test_zero_at_equilibrium(self, ctx4, op1_small, eq_small):
        assert abs(dissipation_rate(eq_small, op1_small, ctx4, lam=10.0)) < 1e-10

    def test_positive_off_equilibrium(self, ctx4, op1_small, grid_small):
        u = Profile(mode=1, values=np.full(grid_small.size, 0.5 * ctx4.m_beta),
                    m_beta=ctx4.m_beta, grid=grid_small, decay_class="bounded")
        assert dissipation_rate(u, op1_small, ctx4, lam=10.0) > 1e-3

    def test_integrand_sign_pointwise(self, ctx4, op1_small, grid_small):
        rng = np.random.default_rng(4)
        vals = np.clip(0.5 + 0.3 * rng.standard_normal(grid_small.size), 0.01, 0.95)
        field = op1_small.apply(vals - ctx4.m_beta, ctx4.m_beta)
        from kacvortex.meanfield import bessel_ratio
        tilt = inverse_bessel_ratio(vals)
        lhs = -ctx4.beta * field + tilt
        rhs = vals - bessel_ratio(ctx4.beta * field)
        assert np.all(lhs * rhs >= -1e-14)

    def test_saturation_error(self, ctx4, op1_small, grid_small):
        from kacvortex.meanfield import DomainError
        vals = np.full(grid_small.size, 0.3)
        vals[5] = 1.0
        u = Profile(mode=1, values=vals, m_beta=ctx4.m_beta, grid=grid_small,
                    decay_class="bounded")
        with pytest.raises(DomainError):
            dissipation_rate(u, op1_small, ctx4)


class TestDegree:
    def test_hedgehog(self, ctx4):
        theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        assert degree(ctx4.m_beta * np.exp(1j * theta)) == 1

    def test_mode3_profile_samples(self, ctx4, spec_pi):
        grid = build_grid(128, 20.0)
        op3 = assemble_operator(3, spec_pi, grid)
        u, trace = relax(ctx4, op3, grid, mode=3, T=80.0, tol=1e-8)
        samples = profile_circle_samples(u, 10.0)
        assert degree(samples) == 3

    def test_rouche_perturbation(self, ctx4):
        theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        z = ctx4.m_beta * np.exp(1j * theta) \
            + 0.2 * ctx4.m_beta * np.exp(2j * theta)
        assert degree(z) == 1

    def test_gauge_and_radius_invariance(self, ctx4, eq_small):
        for radius in (5.0, 8.0, 10.0):
            samples = profile_circle_samples(eq_small, radius)
            assert degree(samples) == 1
            assert degree(samples * np.exp(1j * 1.234)) == 1

    def test_small_modulus_error(self):
        theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)
        with pytest.raises(IllDefinedDegreeError):
            degree(1e-12 * np.exp(1j * theta), min_modulus=0.05)
