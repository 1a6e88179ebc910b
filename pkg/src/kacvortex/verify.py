"""In-package invariant battery backing the ``verify`` subcommand.

Each check exercises one documented invariant at a reduced problem size
(the pytest suite runs the same material at full scale).  A check returns
(name, passed, detail); the battery is deterministic.
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp
from scipy.integrate import quad

from .energy import RenormConfig, counterterm, degree, dissipation_rate, \
    finite_volume_energy, interaction_radial, make_energy_evaluator, meanfield_excess
from .flow import FlowConfig, Profile, check_maximum_principle, check_monotonicity, \
    relax_to_equilibrium, residual_f0, step_full
from .grids import build_grid
from .kernels import KernelSpec, weber_kernel
from .meanfield import ThermoContext, bessel_ratio, bessel_ratio_prime, entropy, \
    entropy_second, entropy_second_at_fixed_point, inverse_bessel_ratio, solve_m_beta
from .operators import assemble_operator, commutator_C, constant_farfield_exact, \
    derived_operator_B, split_partial
from .spectral import assemble_block, potentials_from_profile


def _relaxed(ctx, spec, grid, mode=1, tol=1e-10, T=120.0):
    op = assemble_operator(mode, spec, grid)
    u0 = Profile(mode=mode, values=ctx.m_beta * grid.nodes / np.sqrt(1 + grid.nodes**2),
                 m_beta=ctx.m_beta, grid=grid)
    u, trace = relax_to_equilibrium(u0, op, ctx, FlowConfig(
        dt=0.05, T_total=T, convergence_tol=tol))
    return op, u, trace


def run_battery():
    results = []
    add = lambda name, ok, detail: results.append((name, bool(ok), detail))

    # --- mean-field ---------------------------------------------------
    t = np.linspace(1e-4, 100.0, 4000)
    f = bessel_ratio(t)
    add("meanfield/monotone", np.all(np.diff(f) > 0), "f strictly increasing on (0,100]")
    rho = np.linspace(0.01, 0.99, 99)
    err = np.max(np.abs(bessel_ratio(inverse_bessel_ratio(rho)) - rho))
    add("meanfield/inverse-pair", err <= 1e-10, f"max |f(t*(rho))-rho| = {err:.2e}")
    h = 1e-5
    fd = (bessel_ratio(t + h) - bessel_ratio(t - h)) / (2 * h)
    rel = np.max(np.abs(fd - bessel_ratio_prime(t)) / np.abs(fd))
    add("meanfield/derivative-identity", rel <= 1e-6, f"rel err {rel:.2e}")
    add("meanfield/derivative-bound", np.max(bessel_ratio_prime(t)) <= 0.5 + 1e-9,
        f"sup f' = {np.max(bessel_ratio_prime(t)):.12f}")
    betas = np.linspace(2.05, 20.0, 40)
    mbs = np.array([solve_m_beta(b) for b in betas])
    add("meanfield/m-beta-monotone", np.all(np.diff(mbs) > 0) and solve_m_beta(2.0) == 0.0,
        "m_beta(2)=0 and increasing on (2,20]")
    add("meanfield/entropy-curvature-origin", abs(entropy_second(1e-9) - 2.0) < 1e-6,
        f"I''(0) = {entropy_second(1e-9):.9f}")
    ctx4 = ThermoContext.create(4.0)
    alt = entropy_second_at_fixed_point(ctx4)
    add("meanfield/fixed-point-curvature", abs(alt - entropy_second(ctx4.m_beta)) < 1e-9,
        "Bessel-ratio route matches 1/f'(t*)")

    # --- grid and operator --------------------------------------------
    grid = build_grid(128, 20.0)
    add("grid/constant-exactness", abs(grid.weights.sum() - 200.0) < 1e-10,
        f"sum w = {grid.weights.sum():.12f}")
    target = quad(lambda r: np.exp(-r**2 / (4 * np.pi)) * r, 0, 20.0)[0]
    got = grid.integrate(np.exp(-grid.nodes**2 / (4 * np.pi)))
    add("grid/quadrature-oracle", abs(got - target) <= 1e-8 * abs(target),
        f"rel err {abs(got-target)/abs(target):.2e}")

    spec = KernelSpec(kind="gaussian", p=np.pi)
    op1 = assemble_operator(1, spec, grid)
    rng = np.random.default_rng(7)
    pairs = rng.uniform(0.3, 15.0, size=(10, 2))
    worst = 0.0
    for r, r2 in pairs:
        direct = quad(lambda q: np.exp(-np.pi * q**2) * _sp.jv(1, r * q)
                      * _sp.jv(1, r2 * q) * q, 0, 4.0, limit=200)[0]
        worst = max(worst, abs(weber_kernel(1, np.pi, r, r2) - direct))
    add("operator/closed-form-vs-quadrature", worst <= 1e-8, f"max |Delta| = {worst:.2e}")
    sym = op1.symmetrized()
    add("operator/weighted-symmetry", np.max(np.abs(sym - sym.T)) <= 1e-10,
        "kernel symmetric in the r dr inner product")
    ev = np.linalg.eigvalsh(sym)
    add("operator/spectrum-containment", ev.min() >= -1e-8 and ev.max() <= 1 + 1e-6,
        f"eigs in [{ev.min():.2e}, {ev.max():.8f}]")
    v = np.exp(-((grid.nodes - 5.0) / 2.0) ** 2)
    out = op1.apply(v)
    add("operator/positivity-improving", np.all(out > 0),
        "positive input gives strictly positive output")
    ff = op1.farfield
    add("operator/farfield-range", np.all(ff >= -1e-12) and np.all(ff <= 1 + 1e-9),
        f"farfield in [{ff.min():.3f}, {ff.max():.6f}]")
    exact = constant_farfield_exact(1, np.pi, grid.nodes)
    add("operator/farfield-closed-form", np.max(np.abs(ff - exact)) <= 1e-8,
        f"max |Delta| = {np.max(np.abs(ff-exact)):.2e}")
    gp1 = build_grid(192, 30.0)
    a1 = constant_farfield_exact(1, 1.0, gp1.nodes)
    sel = (gp1.nodes >= 10.0) & (gp1.nodes <= 15.0)
    ratio = gp1.nodes[sel] ** 2 * (1.0 - a1[sel])
    add("operator/asymptotic-coefficient", np.all(np.abs(ratio - 1.0) < 0.05),
        f"r^2(1-a_1) in [{ratio.min():.4f}, {ratio.max():.4f}] (unit-width kernel)")
    split = split_partial(op1, 10.0)
    recon = np.hstack([split.A_in, split.A_out])
    add("operator/split-exact", np.array_equal(recon, op1.matrix),
        "column partition reassembles the matrix exactly")
    opB = derived_operator_B(1, spec, grid)
    evB = np.linalg.svd(opB.symmetrized(), compute_uv=False)
    add("operator/derived-contraction", evB.max() <= 1 + 1e-6,
        f"|B| = {evB.max():.8f}")
    c_op = commutator_C(1, grid)
    evC = np.linalg.eigvalsh(0.5 * (c_op.symmetrized() + c_op.symmetrized().T))
    add("operator/commutator-psd", evC.min() >= -1e-10, f"min eig = {evC.min():.2e}")

    # --- flow ----------------------------------------------------------
    ctx = ctx4
    op, u_star, trace = _relaxed(ctx, spec, grid, tol=1e-10)
    add("flow/relaxation-converges", trace.converged and
        residual_f0(u_star, op, ctx, 10.0) < 1e-8,
        f"residual {residual_f0(u_star, op, ctx, 10.0):.2e}")
    ok_mono, _ = check_monotonicity(trace.snapshots)
    add("flow/monotone-preserved", ok_mono, "nondecreasing data stay nondecreasing")
    ok_max, _ = check_maximum_principle(trace.snapshots, ctx.m_beta)
    add("flow/maximum-principle", ok_max, "iterates stay below m_beta")
    bounds_ok = all(np.all(s >= 0) and np.all(s <= 1) for s in trace.snapshots)
    add("flow/invariant-region", bounds_ok, "0 <= u <= 1 without clamping")
    u_re, trace_re = relax_to_equilibrium(u_star, op, ctx, FlowConfig(
        dt=0.05, T_total=10.0, convergence_tol=1e-9))
    add("flow/equilibrium-idempotent", trace_re.stop_time <= 0.1 + 1e-12,
        f"re-fed equilibrium stops after {trace_re.stop_time:.2f} time units")
    u_a = Profile(mode=1, values=0.5 * np.asarray(u_star.values), m_beta=ctx.m_beta,
                  grid=grid, decay_class="bounded")
    lo = step_full(u_a, op, ctx, 0.05)
    hi = step_full(u_star, op, ctx, 0.05)
    add("flow/comparison", np.all(np.asarray(lo.values) <= np.asarray(hi.values) + 1e-12),
        "ordered data stay ordered after a step")
    two = step_full(step_full(u_a, op, ctx, 0.05), op, ctx, 0.05)
    one = step_full(u_a, op, ctx, 0.10)
    sg = np.max(np.abs(np.asarray(two.values) - np.asarray(one.values)))
    add("flow/semigroup", sg <= 1e-6, f"two half-steps vs one step: {sg:.2e}")
    energy_fn = make_energy_evaluator(op, ctx, RenormConfig(R=grid.R))
    u0 = Profile(mode=1, values=ctx.m_beta * grid.nodes / np.sqrt(1 + grid.nodes**2),
                 m_beta=ctx.m_beta, grid=grid)
    u_t = u0
    es = [energy_fn(u_t)]
    ds = [dissipation_rate(u_t, op, ctx)]
    for _ in range(200):
        u_t = step_full(u_t, op, ctx, 0.01)
        es.append(energy_fn(u_t))
        ds.append(dissipation_rate(u_t, op, ctx))
    es = np.array(es)
    lyap_ok = np.all(np.diff(es) <= 1e-6)
    budget = abs((es[-1] - es[0]) + np.trapezoid(ds, dx=0.01)) / abs(es[-1] - es[0])
    add("flow/lyapunov", lyap_ok, "energy nonincreasing along the trajectory")
    add("flow/dissipation-identity", budget <= 5e-3,
        f"relative budget defect {budget:.2e}")
    add("flow/dissipation-sign", np.all(np.array(ds) >= -1e-10),
        f"min rate {np.min(ds):.2e}")

    # --- energy ----------------------------------------------------------
    slopes = []
    for RR in (40.0, 80.0, 160.0):
        g = build_grid(256, RR, 2 * RR)
        a = constant_farfield_exact(1, np.pi, g.nodes)
        inter = np.pi * ctx.m_beta**2 * float(np.dot(g.weights, 1.0 - a))
        ct = counterterm(RenormConfig(R=RR), spec, 1, ctx.m_beta, RR)
        slopes.append((inter, ct))
    d_inter = (slopes[2][0] - slopes[0][0]) / np.log(4.0)
    d_ct = (slopes[2][1] - slopes[0][1]) / np.log(4.0)
    add("energy/log-slope-match", abs(d_inter - d_ct) <= 0.02 * abs(d_inter),
        f"interaction {d_inter:.5f} vs counterterm {d_ct:.5f} per log R")
    mf = meanfield_excess(u_star, ctx)
    add("energy/meanfield-nonnegative", mf >= -1e-10, f"excess = {mf:.3e}")
    theta = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    base = ctx.m_beta * np.exp(1j * theta)
    d0 = degree(base)
    d_rot = degree(base * np.exp(1j * 0.7))
    d_pert = degree(base + 0.2 * ctx.m_beta * np.exp(2j * theta))
    add("energy/degree-invariance", d0 == d_rot == d_pert == 1,
        f"degrees {d0},{d_rot},{d_pert}")
    split_n = split_partial(op, 10.0)
    split_0 = split_partial(assemble_operator(0, spec, grid), 10.0)
    k = split_n.n_in
    vals = np.asarray(u_star.values)
    fv = finite_volume_energy(vals[:k], vals[k:], split_n, split_0, ctx)
    fv2 = finite_volume_energy(np.minimum(vals[:k] + 0.05, 0.99), vals[k:],
                               split_n, split_0, ctx)
    add("energy/boundary-constant", abs(fv["boundary_constant"] - fv2["boundary_constant"]) < 1e-12,
        "R(exterior) blind to interior values")
    add("energy/box-nonnegative", fv["energy"] >= -1e-9 and fv2["energy"] >= -1e-9,
        f"F = {fv['energy']:.4f}, perturbed {fv2['energy']:.4f}")
    d_eq = dissipation_rate(u_star, op, ctx, lam=10.0)
    add("energy/dissipation-zero-at-equilibrium", abs(d_eq) < 1e-9,
        f"rate at the relaxed profile {d_eq:.2e}")

    # --- spectral ----------------------------------------------------------
    pot = potentials_from_profile(u_star, ctx)
    add("spectral/potential-signs", np.all(pot.b <= 1e-12) and np.all(pot.a > 0),
        "b <= 0 and a > 0 along the profile")
    grid32 = build_grid(160, 32.0)
    _, u32, _ = _relaxed(ctx, spec, grid32, tol=1e-10)
    pot32 = potentials_from_profile(u32, ctx)
    w_inf = entropy_second(ctx.m_beta) / ctx.beta
    add("spectral/potential-limits",
        abs(pot32.V[0] - 0.5) < 0.01 and abs(pot32.W[0] - 0.5) < 0.01
        and abs(pot32.V[-1] - 1.0) < 0.02
        and abs(pot32.W[-1] - w_inf) < 0.02 * w_inf
        and np.all(np.diff(pot32.V) >= -1e-10),
        f"V: {pot32.V[0]:.3f}->{pot32.V[-1]:.3f} monotone, "
        f"W: {pot32.W[0]:.3f}->{pot32.W[-1]:.3f} (target {w_inf:.3f})")
    c = pot.one_minus_u2 / (2 * ctx.beta * pot.a)
    d = pot.b / (2 * ctx.beta * pot.a)
    idv = np.max(np.abs(c + d - pot.V))
    idw = np.max(np.abs(c - d - pot.W))
    add("spectral/potential-identities", max(idv, idw) <= 1e-8,
        f"|c+d-V| = {idv:.2e}, |c-d-W| = {idw:.2e}")
    block = assemble_block(1, u_star, ctx, spec, op_k=op, op_coupled=op)
    asym = np.max(np.abs(block.matrix - block.matrix.T))
    add("spectral/block-symmetry", asym <= 1e-10, f"asymmetry {asym:.2e}")
    tl, off, off2, br = block.rotated_sectors()
    diag_resid = max(np.max(np.abs(off)), np.max(np.abs(off2)))
    v_res = np.max(np.abs(tl - (op.symmetrized() - np.diag(pot.V))))
    w_res = np.max(np.abs(br - (op.symmetrized() - np.diag(pot.W))))
    add("spectral/rotation-diagonalizes", max(diag_resid, v_res, w_res) <= 1e-8,
        f"off-diagonal {diag_resid:.2e}, sector ids {v_res:.2e}/{w_res:.2e}")
    evV = np.linalg.eigvalsh(op.symmetrized() - np.diag(pot.V))
    add("spectral/sandwich-gauge",
        evV.min() >= -1 - 1e-6 and evV.max() <= 1 - 2 / ctx.beta + 1e-6,
        f"sigma(A-V) in [{evV.min():.4f}, {evV.max():.4f}]")
    evW = np.linalg.eigvalsh(op.symmetrized() - np.diag(pot.W))
    add("spectral/sandwich-entropy",
        evW.min() >= -np.max(pot.W) - 1e-6 and evW.max() <= 1 - np.min(pot.W) + 1e-6,
        f"sigma(A-W) in [{evW.min():.4f}, {evW.max():.4f}]")
    add("spectral/gauge-sector-stability", (-evV).min() >= -5e-3,
        f"lowest stability-form eigenvalue {(-evV).min():.2e}")

    # --- lattice ---------------------------------------------------------
    from .lattice import LatticeConfig, block_spin, build_couplings, hamiltonian, \
        init_field, run_chain
    lat = LatticeConfig(L_side=32, k_gamma=3, beta=4.0, boundary="fixed-uniform",
                        seed=11, kernel_p=0.02)
    lspec = KernelSpec(kind="gaussian", p=lat.kernel_p)
    table = build_couplings(lat, lspec)
    add("lattice/coupling-norm", 0.98 <= table.site_norm <= 1.02,
        f"site norm {table.site_norm:.5f}")
    offs = {tuple(o) for o in table.offsets.tolist()}
    sym_ok = all((-a, -b) in offs for a, b in offs)
    add("lattice/coupling-symmetry", sym_ok, "stencil symmetric under negation")
    fld = init_field(lat, table)
    fld.angles[:] = 0.3
    aligned_all = hamiltonian(fld, table)
    # independent pair count: all cosines are 1, so H = -sum_k J_k (pairs_k)
    live = ~fld.frozen
    expect = 0.0
    L = lat.L_side
    for (di, dj), val in zip(table.offsets.tolist(), table.values):
        src = live[max(0, -di):L - max(0, di), max(0, -dj):L - max(0, dj)]
        dst_live = live[max(0, di):L - max(0, -di), max(0, dj):L - max(0, -dj)]
        both = np.logical_and(src, dst_live).sum()
        to_frozen = np.logical_and(src, ~dst_live).sum()
        expect -= val * (0.5 * both + to_frozen)
    add("lattice/aligned-energy", abs(aligned_all - expect) <= 1e-9 * abs(expect),
        f"kernel {aligned_all:.6f} vs pair count {expect:.6f}")
    chain = run_chain(lat, lspec, table, sweeps=60, record_energy_every=5)
    blocks = block_spin(chain.field, lat)
    add("lattice/block-modulus", float(blocks.modulus.max()) <= 1.0 + 1e-12,
        f"max |m| = {blocks.modulus.max():.6f}")
    accept = chain.acceptance[-1]
    add("lattice/acceptance-window", 0.2 <= accept <= 0.8,
        f"final acceptance {accept:.2f}")
    return results
