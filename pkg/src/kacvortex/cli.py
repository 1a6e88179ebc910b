"""Configuration-driven command line runner.

Subcommands: meanfield, relax, energy, spectrum, barrier, lattice, verify.
Configuration is sectioned key=value text (INI); every key has a documented
default, so an empty or missing section runs the reference setup.  Each run
writes CSV/JSON artifacts plus a manifest recording the resolved
configuration, the seed, wall-clock, and a checksum of every emitted file;
rerunning with the same manifest inputs reproduces the bytes exactly.

Exit codes: 0 success, 2 configuration error (offending key reported),
3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .energy import RenormConfig, counterterm, interaction_radial, \
    make_energy_evaluator, meanfield_excess, renormalized_energy
from .flow import FlowConfig, Profile, barrier_compare, relax_to_equilibrium, \
    residual_f0, residual_f1
from .grids import ConfigError, build_grid
from .kernels import KernelSpec
from .lattice import LatticeConfig, block_spin, build_couplings, hamiltonian, \
    lattice_vortex_degree, run_chain
from .meanfield import ThermoContext, bessel_ratio_prime, entropy_second, \
    free_energy_density, inverse_bessel_ratio, solve_m_beta
from .operators import assemble_operator, commutator_C
from .spectral import assemble_block, eigen_spectrum, mourre_check, \
    zero_mode_residuals

DEFAULTS = {
    "common": {
        "beta": "4.0",
        "mode": "1",
        "kernel": "gaussian",
        "kernel_p": str(np.pi),
        "N": "256",
        "R": "40.0",
        "R_ext": "",            # empty -> 2 R
        "scheme": "gauss-legendre-composite",
    },
    "meanfield": {
        "beta_list": "2.0, 2.5, 3.0, 4.0",
    },
    "relax": {
        "dt": "0.05",
        "T_total": "200.0",
        "convergence_tol": "1e-9",
        "compact_radius": "",   # empty -> R/2
        "store_every": "20",
    },
    "energy": {
        "r0": "1.0",
        "cone_ratio": "4.0",
        "R_list": "40.0, 80.0",
    },
    "spectrum": {
        "k_max": "3",
        "mourre_vectors": "200",
    },
    "barrier": {
        "lambdas": "10.0, 20.0, 40.0",
        "T": "5.0",
        "dt": "0.05",
    },
    "lattice": {
        "L_side": "64",
        "k_gamma": "4",
        "delta": "0.5",
        "boundary": "fixed-vortex",
        "vortex_charge": "1",
        "sweeps": "200",
        "burn_in": "100",
        "kernel_p": "0.02",
        "snapshot": "1",
    },
}


class CliConfigError(ConfigError):
    pass


def _load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if path:
        if not Path(path).exists():
            raise CliConfigError(f"config file not found: {path}")
        read = parser.read(path)
        if not read:
            raise CliConfigError(f"config file unreadable: {path}")
    return parser


def _get(parser, section, key, conv=str):
    for sec in (section, "common"):
        if parser.has_option(sec, key):
            raw = parser.get(sec, key)
            break
    else:
        raise CliConfigError(f"missing key [{section}] {key}")
    try:
        return conv(raw)
    except ValueError as exc:
        raise CliConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def _float_list(raw: str):
    return [float(tok) for tok in raw.replace(";", ",").split(",") if tok.strip()]


def _write(path: Path, text: str) -> dict:
    path.write_text(text)
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return {"path": str(path), "sha256": digest}


def _finish(out_dir: Path, subcommand: str, config: dict, seed: int,
            t_start: float, files: list, extra: dict) -> None:
    manifest = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "config": config,
        "seed": seed,
        "wall_clock_seconds": round(time.time() - t_start, 3),
        "files": files,
        **extra,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _common_setup(parser, section):
    beta = _get(parser, section, "beta", float)
    mode = _get(parser, section, "mode", int)
    kind = _get(parser, section, "kernel")
    p = _get(parser, section, "kernel_p", float)
    N = _get(parser, section, "N", int)
    R = _get(parser, section, "R", float)
    r_ext_raw = _get(parser, section, "R_ext")
    R_ext = float(r_ext_raw) if r_ext_raw.strip() else 2.0 * R
    scheme = _get(parser, section, "scheme")
    ctx = ThermoContext.create(beta)
    spec = KernelSpec(kind=kind, p=p)
    grid = build_grid(N, R, R_ext, scheme)
    cfg_used = {"beta": beta, "mode": mode, "kernel": kind, "kernel_p": p,
                "N": N, "R": R, "R_ext": R_ext, "scheme": scheme,
                "m_beta": ctx.m_beta}
    return ctx, spec, grid, mode, cfg_used


def _seed_profile(ctx, grid, mode):
    vals = ctx.m_beta * grid.nodes / np.sqrt(1.0 + grid.nodes**2)
    return Profile(mode=mode, values=vals, m_beta=ctx.m_beta, grid=grid)


def _profile_csv(profile: Profile) -> str:
    lines = ["r,u"]
    lines += [f"{r:.17g},{u:.17g}" for r, u in zip(profile.grid.nodes, profile.values)]
    return "\n".join(lines) + "\n"


def _run_relax(parser, out_dir, seed):
    t0 = time.time()
    ctx, spec, grid, mode, cfg = _common_setup(parser, "relax")
    op = assemble_operator(mode, spec, grid)
    compact_raw = _get(parser, "relax", "compact_radius")
    flow_cfg = FlowConfig(
        dt=_get(parser, "relax", "dt", float),
        T_total=_get(parser, "relax", "T_total", float),
        convergence_tol=_get(parser, "relax", "convergence_tol", float),
        compact_radius=float(compact_raw) if compact_raw.strip() else None,
        store_every=_get(parser, "relax", "store_every", int),
    )
    energy_fn = make_energy_evaluator(op, ctx, RenormConfig(R=grid.R))
    final, trace = relax_to_equilibrium(_seed_profile(ctx, grid, mode), op, ctx,
                                        flow_cfg, energy_fn=energy_fn)
    files = [_write(out_dir / "profile.csv", _profile_csv(final))]
    rows = ["t,sup_change,residual,energy"]
    for t, ch, res, en in zip(trace.times, trace.sup_change, trace.residual, trace.energy):
        rows.append(f"{t:.17g},{ch:.17g},{res:.17g},{en:.17g}")
    files.append(_write(out_dir / "trace.csv", "\n".join(rows) + "\n"))
    cfg.update({"dt": flow_cfg.dt, "T_total": flow_cfg.T_total,
                "convergence_tol": flow_cfg.convergence_tol})
    _finish(out_dir, "relax", cfg, seed, t0, files, {
        "converged": trace.converged,
        "stop_time": trace.stop_time,
        "residual_sup": residual_f0(final, op, ctx, grid.R / 2.0),
        "residual_el": residual_f1(final, op, ctx, grid.R / 2.0),
        "axis_value": final.axis_value,
    })
    return 0


def _run_meanfield(parser, out_dir, seed):
    t0 = time.time()
    betas = _float_list(_get(parser, "meanfield", "beta_list"))
    rows = ["beta,m_beta,tilt,entropy_second_at_m,free_energy_min"]
    for beta in betas:
        ctx = ThermoContext.create(beta)
        tilt = inverse_bessel_ratio(ctx.m_beta) if ctx.m_beta > 0 else 0.0
        rows.append(",".join(f"{x:.17g}" for x in (
            beta, ctx.m_beta, tilt, entropy_second(ctx.m_beta),
            free_energy_density(ctx.m_beta, ctx))))
    files = [_write(out_dir / "meanfield.csv", "\n".join(rows) + "\n")]
    _finish(out_dir, "meanfield", {"beta_list": betas}, seed, t0, files, {})
    return 0


def _run_energy(parser, out_dir, seed):
    t0 = time.time()
    ctx, spec, grid, mode, cfg = _common_setup(parser, "energy")
    r0 = _get(parser, "energy", "r0", float)
    cone = _get(parser, "energy", "cone_ratio", float)
    r_list = _float_list(_get(parser, "energy", "R_list"))
    files = []
    hedgehog_rows = ["R,interaction,counterterm,meanfield,total"]
    for RR in r_list:
        g = build_grid(grid.size, RR, 2.0 * RR, grid.scheme)
        op = assemble_operator(mode, spec, g)
        hog = Profile(mode=mode, values=np.full(g.size, ctx.m_beta),
                      m_beta=ctx.m_beta, grid=g)
        rep = renormalized_energy(hog, op, ctx,
                                  RenormConfig(r0=r0, C=cone, R=RR), strict=False)
        hedgehog_rows.append(",".join(f"{x:.17g}" for x in (
            RR, rep.interaction, rep.counterterm, rep.meanfield, rep.total)))
    files.append(_write(out_dir / "hedgehog_scan.csv", "\n".join(hedgehog_rows) + "\n"))
    op = assemble_operator(mode, spec, grid)
    final, _ = relax_to_equilibrium(
        _seed_profile(ctx, grid, mode), op, ctx,
        FlowConfig(dt=0.05, T_total=150.0, convergence_tol=1e-10))
    report = renormalized_energy(final, op, ctx, RenormConfig(r0=r0, C=cone, R=grid.R))
    files.append(_write(out_dir / "energy_report.json", report.to_json()))
    files.append(_write(out_dir / "profile.csv", _profile_csv(final)))
    cfg.update({"r0": r0, "cone_ratio": cone, "R_list": r_list})
    _finish(out_dir, "energy", cfg, seed, t0, files, {"total": report.total})
    return 0


def _run_spectrum(parser, out_dir, seed):
    t0 = time.time()
    ctx, spec, grid, mode, cfg = _common_setup(parser, "spectrum")
    k_max = _get(parser, "spectrum", "k_max", int)
    op = assemble_operator(mode, spec, grid)
    final, _ = relax_to_equilibrium(
        _seed_profile(ctx, grid, mode), op, ctx,
        FlowConfig(dt=0.05, T_total=150.0, convergence_tol=1e-11))
    files = []
    csv_chunks = []
    reports = {}
    for k in range(mode, max(k_max, mode) + 1):
        block = assemble_block(k, final, ctx, spec,
                               op_k=op if k == mode else None)
        rep = eigen_spectrum(block, grid.nodes, grid.weights)
        csv_chunks.append(rep.to_csv() if not csv_chunks else
                          "\n".join(rep.to_csv().splitlines()[1:]) + "\n")
        reports[k] = {"mean_spacing": rep.mean_spacing,
                      "isolated": list(rep.isolated),
                      "bulk_window": list(rep.bulk_window)}
    files.append(_write(out_dir / "eigenvalues.csv", "".join(csv_chunks)))
    zero = zero_mode_residuals(final, op, ctx, spec)
    mourre = {}
    if spec.kind == "gaussian":
        # finite-difference dilation matrix wants equispaced nodes
        ugrid = build_grid(grid.size, grid.R, grid.R_ext, "uniform-midpoint")
        uop = assemble_operator(mode, spec, ugrid)
        ufinal, _ = relax_to_equilibrium(
            _seed_profile(ctx, ugrid, mode), uop, ctx,
            FlowConfig(dt=0.05, T_total=150.0, convergence_tol=1e-10))
        mourre = mourre_check(ufinal, uop, commutator_C(mode, ugrid, spec.p),
                              ctx, n_vectors=_get(parser, "spectrum",
                                                  "mourre_vectors", int),
                              seed=seed)
    files.append(_write(out_dir / "spectrum_report.json",
                        json.dumps({"blocks": reports, "zero_modes": zero,
                                    "mourre": mourre}, indent=2)))
    cfg.update({"k_max": k_max})
    _finish(out_dir, "spectrum", cfg, seed, t0, files, {"zero_modes": zero})
    return 0


def _run_barrier(parser, out_dir, seed):
    t0 = time.time()
    ctx, spec, grid, mode, cfg = _common_setup(parser, "barrier")
    op = assemble_operator(mode, spec, grid)
    lambdas = _float_list(_get(parser, "barrier", "lambdas"))
    T = _get(parser, "barrier", "T", float)
    dt = _get(parser, "barrier", "dt", float)
    result = barrier_compare(_seed_profile(ctx, grid, mode), op, ctx, lambdas, T, dt)
    rows = ["lambda,sup_diff,sup_deriv_diff"]
    for row in result["table"]:
        rows.append(f"{row['lambda']:.17g},{row['sup_diff']:.17g},{row['sup_deriv_diff']:.17g}")
    files = [_write(out_dir / "barrier.csv", "\n".join(rows) + "\n")]
    cfg.update({"lambdas": lambdas, "T": T, "dt": dt})
    _finish(out_dir, "barrier", cfg, seed, t0, files, {
        "exponent": result["exponent"], "deriv_exponent": result["deriv_exponent"],
        "warnings": result["warnings"]})
    return 0


def _run_lattice(parser, out_dir, seed):
    t0 = time.time()
    lat = LatticeConfig(
        L_side=_get(parser, "lattice", "L_side", int),
        k_gamma=_get(parser, "lattice", "k_gamma", int),
        beta=_get(parser, "lattice", "beta", float),
        delta=_get(parser, "lattice", "delta", float),
        boundary=_get(parser, "lattice", "boundary"),
        vortex_charge=_get(parser, "lattice", "vortex_charge", int),
        seed=seed,
        sweeps=_get(parser, "lattice", "sweeps", int),
        burn_in=_get(parser, "lattice", "burn_in", int),
        kernel_p=_get(parser, "lattice", "kernel_p", float),
    )
    spec = KernelSpec(kind="gaussian", p=lat.kernel_p)
    couplings = build_couplings(lat, spec)
    chain = run_chain(lat, spec, couplings, sweeps=lat.burn_in + lat.sweeps,
                      record_energy_every=10)
    blocks = block_spin(chain.field, lat)
    files = []
    if _get(parser, "lattice", "snapshot", int):
        rows = ["i,j,theta"]
        ang = chain.field.angles
        for i in range(lat.L_side):
            for j in range(lat.L_side):
                rows.append(f"{i},{j},{ang[i, j]:.17g}")
        files.append(_write(out_dir / "snapshot.csv", "\n".join(rows) + "\n"))
    rows = ["x,y,m_x,m_y"]
    nb = blocks.mx.shape[0]
    for x in range(nb):
        for y in range(nb):
            rows.append(f"{x},{y},{blocks.mx[x, y]:.17g},{blocks.my[x, y]:.17g}")
    files.append(_write(out_dir / "blocks.csv", "\n".join(rows) + "\n"))
    extra = {
        "acceptance_final": chain.acceptance[-1],
        "mean_energy_tail": float(np.mean(chain.energies[-5:])) if chain.energies else None,
        "site_norm": couplings.site_norm,
        "stencil_size": couplings.stencil_size,
    }
    if lat.boundary == "fixed-vortex":
        radius = 0.35 * nb
        extra["winding"] = lattice_vortex_degree(blocks, radius)
    cfg = {k: getattr(lat, k) for k in ("L_side", "k_gamma", "beta", "delta",
                                        "boundary", "vortex_charge", "sweeps",
                                        "burn_in", "kernel_p")}
    _finish(out_dir, "lattice", cfg, seed, t0, files, extra)
    return 0


def _run_verify(parser, out_dir, seed):
    from .verify import run_battery
    t0 = time.time()
    results = run_battery()
    lines = []
    n_fail = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        n_fail += (not ok)
        line = f"[{status}] {name}: {detail}"
        print(line)
        lines.append(line)
    files = [_write(out_dir / "verify.txt", "\n".join(lines) + "\n")]
    _finish(out_dir, "verify", {}, seed, t0, files, {"failures": n_fail})
    return 0 if n_fail == 0 else 3


_RUNNERS = {
    "meanfield": _run_meanfield,
    "relax": _run_relax,
    "energy": _run_energy,
    "spectrum": _run_spectrum,
    "barrier": _run_barrier,
    "lattice": _run_lattice,
    "verify": _run_verify,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="kacvortex",
                                 description="vortex equilibria of the planar "
                                             "rotator with long-range interaction")
    ap.add_argument("subcommand", choices=sorted(_RUNNERS))
    ap.add_argument("--config", default=None, help="sectioned key=value file")
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--seed", type=int, default=9001)
    ap.add_argument("--threads", type=int, default=0,
                    help="cap BLAS threads (0 = leave unchanged)")
    args = ap.parse_args(argv)

    if args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    out_root = args.out or os.environ.get("KACVORTEX_OUT", "runs")
    out_dir = Path(out_root) / args.subcommand
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        parser = _load_config(args.config)
        return _RUNNERS[args.subcommand](parser, out_dir, args.seed)
    except (ConfigError, CliConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
