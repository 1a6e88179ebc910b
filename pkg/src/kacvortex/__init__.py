"""Vortex equilibria of the planar rotator with long-range interaction.

Subpackages cover the mean-field thermodynamics, the radial convolution
operators, the gradient-flow dynamics, the renormalized free energy, the
second-variation spectra, and a lattice Monte Carlo sandbox, plus a
configuration-driven command line runner.
"""

from .meanfield import (ThermoContext, bessel_i, bessel_i_scaled, bessel_ratio,
                        bessel_ratio_prime, entropy, entropy_prime, entropy_second,
                        free_energy_density, inverse_bessel_ratio, solve_m_beta)
from .grids import RadialGrid, build_grid
from .kernels import KernelSpec, hankel_mode_kernel, legendre_kernel, weber_kernel
from .operators import (RadialOperator, assemble_operator, commutator_C,
                        derived_operator_B, split_partial)
from .norms import diagnostic_norms
from .flow import (FlowConfig, FlowTrace, Profile, barrier_compare,
                   check_maximum_principle, check_monotonicity,
                   relax_to_equilibrium, residual_f0, residual_f1, step_full,
                   step_partial)
from .energy import (EnergyReport, RenormConfig, counterterm, degree,
                     dissipation_rate, finite_volume_energy, interaction_radial,
                     renormalized_energy)
from .spectral import (HessianBlock, SpectrumReport, assemble_block,
                       eigen_spectrum, mourre_check, potentials_from_profile,
                       ru_prime_identity, zero_mode_residuals)
from .lattice import (BlockField, CouplingTable, LatticeConfig, SpinField,
                      block_spin, build_couplings, entropy_check, hamiltonian,
                      hamiltonian_blocked, lattice_vortex_degree,
                      metropolis_sweep, nu_density, run_chain)

__version__ = "0.1.0"
