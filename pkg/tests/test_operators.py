"""Radial grids, kernels, and the discretized convolution operators."""

import numpy as np
import pytest
from scipy import special as sp
from scipy.integrate import quad

from kacvortex.grids import ConfigError, build_grid
from kacvortex.kernels import (KernelError, KernelSpec, hankel_mode_kernel,
                               legendre_kernel, weber_kernel, weber_kernel_dp)
from kacvortex.norms import InsufficientDataError, diagnostic_norms
from kacvortex.operators import (RangeError, ShapeError, assemble_operator,
                                 commutator_C, constant_farfield_exact,
                                 derived_operator_B, split_partial)


class TestGrid:
    def test_constant_exactness_midpoint(self):
        g = build_grid(256, 20.0, 40.0, "uniform-midpoint")
        assert abs(g.weights.sum() - 200.0) < 1e-10

    def test_polynomial_exactness(self):
        g = build_grid(256, 20.0, 40.0, "gauss-legendre-composite")
        got = g.integrate(g.nodes)  # int r * r dr = R^3/3
        assert abs(got - 20.0**3 / 3.0) <= 1e-6 * (20.0**3 / 3.0)

    def test_gaussian_vs_adaptive_quadrature_oracle(self):
        g = build_grid(256, 20.0)
        oracle = quad(lambda r: np.exp(-r**2 / (4 * np.pi)) * r, 0, 20.0,
                      epsabs=1e-13, epsrel=1e-13)[0]
        got = g.integrate(np.exp(-g.nodes**2 / (4 * np.pi)))
        assert abs(got - oracle) <= 1e-8 * oracle

    def test_invalid_sizes(self):
        with pytest.raises(ConfigError):
            build_grid(8, 20.0)
        with pytest.raises(ConfigError):
            build_grid(64, 20.0, 10.0)
        with pytest.raises(ConfigError):
            build_grid(64, -1.0)


class TestWeberKernel:
    def test_axis_zero_for_winding_modes(self):
        assert weber_kernel(1, np.pi, 0.0, 5.0) == 0.0

    def test_origin_value(self):
        assert abs(weber_kernel(0, np.pi, 0.0, 0.0) - 1.0 / (2 * np.pi)) < 1e-15

    def test_against_oscillatory_quadrature_oracle(self):
        val = weber_kernel(1, np.pi, 3.0, 3.0)
        oracle = quad(lambda q: np.exp(-np.pi * q * q) * sp.jv(1, 3 * q) ** 2 * q,
                      0, 5.0, limit=400)[0]
        assert abs(val - oracle) <= 1e-8

    def test_nonnegative(self):
        r = np.linspace(0, 30, 90)
        vals = weber_kernel(2, np.pi, r[:, None], r[None, :])
        assert np.all(vals >= 0)

    def test_p_derivative_vs_finite_difference(self):
        r, r2 = 4.0, 2.5
        h = 1e-5
        fd = (weber_kernel(1, np.pi + h, r, r2)
              - weber_kernel(1, np.pi - h, r, r2)) / (2 * h)
        assert abs(weber_kernel_dp(1, np.pi, r, r2) - fd) < 1e-9


class TestLegendreKernel:
    def test_symmetry(self):
        a = legendre_kernel(1, 1.0, 2.0, 3.5)
        b = legendre_kernel(1, 1.0, 3.5, 2.0)
        assert abs(a - b) <= 1e-10 * max(abs(a), 1)

    def test_against_fourier_quadrature_oracle(self):
        spec = KernelSpec(kind="exponential", p=1.0)
        K = hankel_mode_kernel(1, spec, np.array([2.0]), np.array([2.0]))[0, 0]
        assert abs(legendre_kernel(1, 1.0, 2.0, 2.0) - K) <= 1e-6

    def test_large_separation_decay(self):
        # power-law interaction tail: needs |r - r2| ~ 80 p to reach 1e-8
        assert legendre_kernel(0, 1.0, 80.0, 1.0) <= 1e-8
        vals = [legendre_kernel(0, 1.0, d, 1.0) for d in (20.0, 40.0, 80.0)]
        assert vals[0] > vals[1] > vals[2] > 0

    def test_axis_singularity(self):
        with pytest.raises(KernelError):
            legendre_kernel(1, 1.0, 0.0, 2.0)

    def test_nonnegative_sample(self):
        r = np.array([0.5, 1.0, 3.0, 8.0])
        vals = legendre_kernel(2, 0.7, r[:, None], r[None, :])
        assert np.all(vals >= -1e-12)


class TestAssembledOperator:
    def test_zero_vector(self, op1_small):
        out = op1_small.apply(np.zeros(op1_small.size))
        assert np.all(out == 0)

    def test_mode0_axis_farfield_closed_form(self, spec_pi, grid_small):
        op0 = assemble_operator(0, spec_pi, grid_small)
        expected = 1.0 - np.exp(-grid_small.R_ext**2 / (4 * np.pi))
        assert abs(op0.axis_farfield - expected) < 1e-10

    def test_farfield_asymptotics_unit_width(self, spec_unit):
        # r^2 (1 - a_n(r)) approaches n^2 for the unit-width interaction
        grid = build_grid(256, 40.0)
        for n in (1, 2):
            op = assemble_operator(n, spec_unit, grid)
            sel = (grid.nodes >= 10.0) & (grid.nodes <= 20.0)
            vals = grid.nodes[sel] ** 2 * (1.0 - op.farfield[sel])
            assert np.all(np.abs(vals / n**2 - 1.0) < 0.05)

    def test_farfield_width_scaling(self, spec_pi, grid_std):
        # with width parameter p the limit scales to p n^2
        op = assemble_operator(1, spec_pi, grid_std)
        sel = (grid_std.nodes >= 15.0) & (grid_std.nodes <= 20.0)
        vals = grid_std.nodes[sel] ** 2 * (1.0 - op.farfield[sel])
        assert np.all(np.abs(vals / np.pi - 1.0) < 0.05)

    def test_weber_identity_20_random_pairs(self, op1_std, grid_std):
        rng = np.random.default_rng(42)
        idx = rng.integers(0, grid_std.size, size=(20, 2))
        worst = 0.0
        for i, j in idx:
            r, r2 = grid_std.nodes[i], grid_std.nodes[j]
            direct = quad(lambda q: np.exp(-np.pi * q * q) * sp.jv(1, r * q)
                          * sp.jv(1, r2 * q) * q, 0, 4.5, limit=400)[0]
            kernel_val = op1_std.matrix[i, j] / grid_std.weights[j]
            worst = max(worst, abs(kernel_val - direct))
        assert worst <= 1e-8

    def test_weighted_symmetry(self, op1_small):
        s = op1_small.symmetrized()
        assert np.max(np.abs(s - s.T)) <= 1e-10

    def test_spectrum_containment_and_kernel(self, spec_pi):
        grid = build_grid(256, 40.0)
        mins = {}
        for n in (0, 1, 3):
            op = assemble_operator(n, spec_pi, grid)
            ev = op.eigenvalues()
            assert ev.min() >= -1e-8
            assert ev.max() <= 1.0 + 1e-6
            mins[n] = ev.min()
        grid2 = build_grid(512, 40.0)
        ev2 = assemble_operator(1, spec_pi, grid2).eigenvalues()
        # smallest eigenvalue sinks toward zero but never an exact null vector
        assert ev2.min() <= max(mins[1], 1e-12)
        assert np.all(ev2 != 0.0)

    def test_positivity_preserving_and_sup_bound(self, op1_small, grid_small, ctx4):
        rng = np.random.default_rng(3)
        for _ in range(5):
            u = rng.uniform(0.0, 1.0, grid_small.size)
            out = op1_small.apply(u)
            assert np.all(out >= 0)
            assert out.max() <= u.max() + 1e-12

    def test_apply_farfield_constant(self, op1_small, ctx4):
        out = op1_small.apply(np.zeros(op1_small.size), ctx4.m_beta)
        assert np.allclose(out, ctx4.m_beta * op1_small.farfield)

    def test_shape_error(self, op1_small):
        with pytest.raises(ShapeError):
            op1_small.apply(np.zeros(3))

    def test_tabulated_normalization_guard(self):
        with pytest.raises(KernelError):
            KernelSpec(kind="tabulated", fourier=lambda r: 0.5 * np.exp(-r**2),
                       fourier_cut=6.0)

    def test_tabulated_matches_gaussian(self, spec_pi, grid_small, op1_small):
        tab = KernelSpec(kind="tabulated",
                         fourier=lambda r: np.exp(-np.pi * r**2), fourier_cut=4.5)
        op_tab = assemble_operator(1, tab, grid_small)
        assert np.max(np.abs(op_tab.matrix - op1_small.matrix)) <= 1e-8

    def test_csv_export_header(self, op1_small, grid_small):
        text = op1_small.to_csv()
        header = text.splitlines()[0].split(",")
        assert header == [str(grid_small.size), str(grid_small.R), "1", "gaussian"]
        assert len(text.splitlines()) == grid_small.size + 1

    def test_weighted_norm_bound_x0k(self, op1_std, grid_std):
        # bounded on the r^k-weighted sup spaces, stable under refinement
        for k in (1, 2):
            ratios = []
            for N in (256, 512):
                g = build_grid(N, 40.0)
                op = assemble_operator(1, KernelSpec(kind="gaussian", p=np.pi), g)
                v = 1.0 / (1.0 + g.nodes) ** k
                norm_in = diagnostic_norms(v, g, "X0k", k).value
                norm_out = diagnostic_norms(op.apply(v), g, "X0k", k).value
                ratios.append(norm_out / norm_in)
            assert ratios[1] <= 1.2 * ratios[0] + 0.1
            assert ratios[0] < 10.0

    def test_near_axis_mode_weight(self, op1_std, grid_std):
        # r^{-n} A_n v stays bounded near the axis
        v = 1.0 / (1.0 + grid_std.nodes**2)
        out = op1_std.apply(v)
        sel = grid_std.nodes <= 1.0
        assert np.max(np.abs(out[sel] / grid_std.nodes[sel])) < 10.0


class TestOpenQuestionAsymptotics:
    @pytest.mark.parametrize("k", [0.0, 0.5, 1.0, 2.0])
    def test_power_tail_response(self, k):
        # r^k A_n(r'^{-k} chi)(r) ~ 1 + p (k^2 - n^2) / r^2 for the gaussian
        p, n = 1.0, 1
        cut = 2.0

        def integrand(r2, r):
            return weber_kernel(n, p, r, r2) * r2 ** (1.0 - k)

        for r in (16.0, 24.0):
            val = quad(integrand, cut, 90.0, args=(r,), limit=600)[0]
            correction = r**2 * (r**k * val - 1.0)
            assert abs(correction - p * (k**2 - n**2)) < 0.1 * max(abs(k**2 - n**2), 1.0)


class TestPartialSplit:
    def test_full_box_identity(self, op1_small):
        split = split_partial(op1_small, op1_small.grid.R)
        assert split.A_out.shape[1] == 0
        assert np.array_equal(split.A_in, op1_small.matrix)

    def test_column_partition_exact(self, op1_small):
        split = split_partial(op1_small, 10.0)
        assert np.array_equal(np.hstack([split.A_in, split.A_out]), op1_small.matrix)
        lhs = split.A_in.sum(axis=1) + split.A_out.sum(axis=1)
        rhs = op1_small.matrix.sum(axis=1)
        assert np.max(np.abs(lhs - rhs)) <= 1e-15 * np.max(np.abs(rhs))

    def test_out_of_range(self, op1_small):
        with pytest.raises(RangeError):
            split_partial(op1_small, 25.0)
        with pytest.raises(RangeError):
            split_partial(op1_small, 0.0)

    def test_exterior_reach_decay(self, spec_pi):
        # the exterior part seen deep inside the box decays fast in lambda
        grid = build_grid(512, 80.0)
        op = assemble_operator(1, spec_pi, grid)
        sups = []
        for lam in (10.0, 20.0, 40.0):
            split = split_partial(op, lam)
            reach = split.A_out.sum(axis=1)  # response to |u| <= 1 outside
            sel = grid.nodes <= lam / 2.0
            sups.append(np.max(np.abs(reach[sel])))
        scaled = np.array(sups) * np.sqrt([10.0, 20.0, 40.0])
        assert np.all(np.diff(scaled) < 0)
        assert scaled[0] < 1.0


class TestDerivedOperator:
    def test_norm_bound(self, spec_pi, grid_small):
        opB = derived_operator_B(1, spec_pi, grid_small)
        top = np.linalg.svd(opB.symmetrized(), compute_uv=False).max()
        assert top <= 1.0 + 1e-6

    def test_matches_derivative_of_base_operator(self, spec_pi):
        # central differences behave best on the equispaced scheme
        grid = build_grid(512, 20.0, scheme="uniform-midpoint")
        op = assemble_operator(1, spec_pi, grid)
        opB = derived_operator_B(1, spec_pi, grid)
        u = np.exp(-((grid.nodes - 6.0) / 3.0) ** 2)
        base = op.apply(u)
        r = grid.nodes
        lhs = np.gradient(base, r, edge_order=2) + base / r
        rhs = opB.apply(u)
        sel = (r > 1.0) & (r < 15.0)
        rel = np.max(np.abs(lhs - rhs)[sel]) / np.max(np.abs(rhs[sel]))
        assert rel <= 1e-4

    def test_inverse_radius_bounded(self, spec_pi):
        norms = []
        for N in (128, 256):
            g = build_grid(N, 20.0)
            op = assemble_operator(1, KernelSpec(kind="gaussian", p=np.pi), g)
            rng = np.random.default_rng(5)
            v = rng.standard_normal(g.size) * np.exp(-((g.nodes - 8) / 4.0) ** 2)
            out = op.apply(v) / g.nodes
            nrm = np.sqrt(np.dot(g.weights, out**2) / np.dot(g.weights, v**2))
            norms.append(nrm)
        assert norms[1] <= 1.5 * norms[0] + 0.1


class TestCommutatorOperator:
    def test_quadratic_form_nonnegative(self, grid_small):
        c_op = commutator_C(1, grid_small)
        s = 0.5 * (c_op.symmetrized() + c_op.symmetrized().T)
        rng = np.random.default_rng(11)
        for _ in range(100):
            psi = rng.standard_normal(grid_small.size)
            assert psi @ s @ psi >= -1e-10 * (psi @ psi)

    def test_matches_width_derivative(self, grid_small):
        c_op = commutator_C(1, grid_small)
        h = 1e-4
        kp = assemble_operator(1, KernelSpec(kind="gaussian", p=np.pi + h), grid_small)
        km = assemble_operator(1, KernelSpec(kind="gaussian", p=np.pi - h), grid_small)
        fd = -4.0 * np.pi * (kp.matrix - km.matrix) / (2 * h)
        assert np.max(np.abs(fd - c_op.matrix)) <= 1e-6

    def test_axis_row_vanishes(self, grid_small):
        c_op = commutator_C(2, grid_small)
        row0 = weber_kernel_dp(2, np.pi, 0.0, grid_small.nodes)
        assert np.max(np.abs(row0)) == 0.0


class TestDiagnosticNorms:
    def test_zero(self, grid_small):
        rep = diagnostic_norms(np.zeros(grid_small.size), grid_small, "X0k", 2)
        assert rep.value == 0.0

    def test_weight_sensitivity(self, grid_small):
        v = 1.0 / (1.0 + grid_small.nodes**2)
        n2 = diagnostic_norms(v, grid_small, "X0k", 2).value
        n3 = diagnostic_norms(v, grid_small, "X0k", 3).value
        assert n2 <= 2.01  # sup_[0,1]|v| + sup r^2 v, both below 1
        assert n3 > 0.5 * grid_small.R  # r^3 v grows linearly: grid-edge dominated

    def test_exact_inverse_radius_fit(self, grid_small):
        v = 1.0 / grid_small.nodes
        rep = diagnostic_norms(v, grid_small, "Y0k", 1)
        assert abs(rep.coefficients[0] - 1.0) < 1e-10
        assert rep.remainder_sup < 1e-8

    def test_window_too_small(self):
        g = build_grid(64, 20.0)
        with pytest.raises(InsufficientDataError):
            diagnostic_norms(np.ones(64), g, "Y0k", 2, fit_window=(19.9, 20.0))
