import numpy as np
import pytest

from kacvortex.flow import FlowConfig, Profile, relax_to_equilibrium
from kacvortex.grids import build_grid
from kacvortex.kernels import KernelSpec
from kacvortex.meanfield import ThermoContext
from kacvortex.operators import assemble_operator


@pytest.fixture(scope="session")
def ctx4():
    return ThermoContext.create(4.0)


@pytest.fixture(scope="session")
def spec_pi():
    return KernelSpec(kind="gaussian", p=np.pi)


@pytest.fixture(scope="session")
def spec_unit():
    return KernelSpec(kind="gaussian", p=1.0)


@pytest.fixture(scope="session")
def grid_small():
    return build_grid(128, 20.0)


@pytest.fixture(scope="session")
def grid_std():
    return build_grid(256, 40.0)


@pytest.fixture(scope="session")
def op1_small(spec_pi, grid_small):
    return assemble_operator(1, spec_pi, grid_small)


@pytest.fixture(scope="session")
def op1_std(spec_pi, grid_std):
    return assemble_operator(1, spec_pi, grid_std)


def seed_profile(ctx, grid, mode=1):
    vals = ctx.m_beta * grid.nodes / np.sqrt(1.0 + grid.nodes**2)
    return Profile(mode=mode, values=vals, m_beta=ctx.m_beta, grid=grid)


def relax(ctx, op, grid, mode=1, tol=1e-10, T=150.0, dt=0.05, **kw):
    u0 = seed_profile(ctx, grid, mode)
    cfg = FlowConfig(dt=dt, T_total=T, convergence_tol=tol, **kw)
    return relax_to_equilibrium(u0, op, ctx, cfg)


@pytest.fixture(scope="session")
def eq_small(ctx4, op1_small, grid_small):
    u, trace = relax(ctx4, op1_small, grid_small)
    assert trace.converged
    return u


@pytest.fixture(scope="session")
def eq_std(ctx4, op1_std, grid_std):
    u, trace = relax(ctx4, op1_std, grid_std)
    assert trace.converged
    return u
