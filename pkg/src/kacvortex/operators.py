"""Dense discretization of the mode-n convolution operator on a radial grid.

The operator matrix is M[i, j] = K_n(r_i, r_j) w_j with K_n the mode kernel
and w the r dr quadrature weights, so that (M v)_i approximates
int K_n(r_i, r') v(r') r' dr' over [0, R].  A profile with constant far-field
value c is handled through the precomputed far-field response
a_i = int_0^{R_ext} K_n(r_i, r') r' dr' (the tail beyond R_ext carries an
analytic bound stored as metadata):  A(v + c) = M v + c a.

Assembly is pure and row-parallel in principle; assembled operators are
immutable and can be shared freely across threads.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np
from scipy import special as _sp

from .grids import RadialGrid
from .kernels import KernelSpec, KernelError, hankel_mode_kernel, weber_kernel, weber_kernel_dp


class ShapeError(ValueError):
    """Dimension mismatch between operator and vector."""


class RangeError(ValueError):
    """Radius or index outside the admissible range."""


@dataclass(frozen=True)
class RadialOperator:
    """Mode-n kernel-times-weights matrix with far-field column data.

    ``matrix`` is N x N over [0, R].  ``farfield`` is the response to the
    constant 1 on [0, R_ext].  ``ext_matrix`` holds the kernel columns for the
    extension nodes (needed by energy functionals and partial dynamics);
    ``ext_row_mass`` is the exterior-row weighted column sum
    sum_{i in ext} K(r_i, r_j) w_i used by the truncated energy.
    """

    mode: int
    grid: RadialGrid
    matrix: np.ndarray
    farfield: np.ndarray
    ext_matrix: np.ndarray
    ext_row_mass: np.ndarray
    ext_farfield: np.ndarray
    kernel_kind: str
    kernel_p: float
    tail_bound: float
    axis_row: np.ndarray | None = None
    axis_farfield: float = 0.0

    @property
    def size(self) -> int:
        return self.grid.size

    def apply(self, interior: np.ndarray, far_constant: float = 0.0) -> np.ndarray:
        """A(v + c) at the interior nodes for decaying v plus constant c."""
        interior = np.asarray(interior, dtype=float)
        if interior.shape != (self.size,):
            raise ShapeError(f"expected vector of length {self.size}")
        return self.matrix @ interior + far_constant * self.farfield

    def apply_at_axis(self, interior: np.ndarray, far_constant: float = 0.0) -> float:
        """A(v + c) evaluated at r = 0 (zero for every mode n >= 1)."""
        if self.mode >= 1 or self.axis_row is None:
            return 0.0
        w = self.grid.weights
        return float(np.dot(self.axis_row[: self.size] * w, np.asarray(interior))
                     + far_constant * self.axis_farfield)

    def operator_norm(self) -> float:
        """Norm on the discrete L^2(r dr) space (largest |eigenvalue|)."""
        return float(np.max(np.abs(self.eigenvalues())))

    def symmetrized(self) -> np.ndarray:
        """Similarity transform D^{1/2} K D^{1/2} symmetric in l^2."""
        s = np.sqrt(self.grid.weights)
        kernel = self.matrix / self.grid.weights[None, :]
        return s[:, None] * kernel * s[None, :]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.symmetrized())

    def to_csv(self) -> str:
        """Row-major dump with a header line: N, R, n, kernel-kind."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow([self.size, self.grid.R, self.mode, self.kernel_kind])
        for row in self.matrix:
            writer.writerow([f"{v:.17g}" for v in row])
        return buf.getvalue()


def _kernel_matrix(n: int, kind: str, p: float, rows: np.ndarray, cols: np.ndarray,
                   spec: KernelSpec | None) -> np.ndarray:
    if kind == "gaussian":
        return weber_kernel(n, p, rows[:, None], cols[None, :])
    if spec is None:
        spec = KernelSpec(kind=kind, p=p)
    return hankel_mode_kernel(n, spec, rows, cols)


def assemble_operator(n: int, spec: KernelSpec, grid: RadialGrid) -> RadialOperator:
    """Discretize the mode-n operator of ``spec`` on ``grid``.

    The far-field vector integrates the kernel against 1 over [0, R_ext];
    the Gaussian tail mass beyond R_ext is recorded, not added.
    """
    if n < 0:
        raise RangeError("mode must be a nonnegative integer")
    r = grid.nodes
    r_all = grid.all_nodes
    w_all = grid.all_weights
    kernel_rows = _kernel_matrix(n, spec.kind, spec.p, r, r_all, spec)
    matrix = kernel_rows[:, : grid.size] * grid.weights[None, :]
    farfield = kernel_rows @ w_all
    ext_matrix = kernel_rows[:, grid.size:]  # kernel values, no weights
    if len(grid.ext_nodes):
        kernel_ext = _kernel_matrix(n, spec.kind, spec.p, grid.ext_nodes, r_all, spec)
        ext_row_mass = kernel_ext[:, : grid.size].T @ grid.ext_weights
        ext_farfield = kernel_ext @ w_all
    else:
        ext_row_mass = np.zeros(grid.size)
        ext_farfield = np.empty(0)
    tail = _tail_mass_bound(spec, grid.R_ext - grid.R)
    axis_row = _kernel_matrix(n, spec.kind, spec.p, np.zeros(1), r_all, spec)[0]
    axis_farfield = float(axis_row @ w_all)
    return RadialOperator(mode=n, grid=grid, matrix=matrix, farfield=farfield,
                          ext_matrix=ext_matrix, ext_row_mass=ext_row_mass,
                          ext_farfield=ext_farfield, kernel_kind=spec.kind,
                          kernel_p=spec.p, tail_bound=tail,
                          axis_row=axis_row, axis_farfield=axis_farfield)


def _tail_mass_bound(spec: KernelSpec, gap: float) -> float:
    """Bound on the kernel mass reaching from [0, R] beyond R_ext."""
    if spec.kind == "gaussian":
        return float(np.exp(-gap**2 / (4.0 * spec.p)))
    if spec.kind == "exponential":
        # radial tail of (3p^3/2pi)(p^2+r^2)^{-5/2} beyond the gap
        p = spec.p
        return float(p**3 * (p**2 + gap**2) ** (-1.5))
    return float("nan")


def constant_farfield_exact(n: int, p: float, r) -> np.ndarray:
    """Closed-form Gaussian response to the constant 1 on the whole half-line.

    a_n(r) = (sqrt(pi) r / 4 sqrt(p)) e^{-x} [I_{(n-1)/2}(x) + I_{(n+1)/2}(x)],
    x = r^2/8p; satisfies r^2 (1 - a_n(r)) -> p n^2.
    """
    r = np.asarray(r, dtype=float)
    x = r * r / (8.0 * p)
    pref = np.sqrt(np.pi) * r / (4.0 * np.sqrt(p))
    return pref * (_sp.ive((n - 1) / 2.0, x) + _sp.ive((n + 1) / 2.0, x))


@dataclass(frozen=True)
class PartialSplit:
    """Column partition of an operator at the box radius lambda.

    ``A_in`` are the columns with r_j <= lambda, ``A_out`` the rest; their sum
    reproduces the full matrix exactly.  ``n_in`` is the split index.
    """

    op: RadialOperator
    lam: float
    n_in: int

    @property
    def A_in(self) -> np.ndarray:
        return self.op.matrix[:, : self.n_in]

    @property
    def A_out(self) -> np.ndarray:
        return self.op.matrix[:, self.n_in:]

    def apply_split(self, v_in: np.ndarray, v_out: np.ndarray, far_constant: float) -> np.ndarray:
        """A(v + c) with the deviation v given separately inside and outside."""
        return self.A_in @ v_in + self.A_out @ v_out + far_constant * self.op.farfield


def split_partial(op: RadialOperator, lam: float) -> PartialSplit:
    """Sharp characteristic split at the largest node <= lambda."""
    if not (0.0 < lam <= op.grid.R):
        raise RangeError(f"lambda={lam} outside (0, R]")
    return PartialSplit(op=op, lam=lam, n_in=op.grid.index_below(lam))


def derived_operator_B(n: int, spec: KernelSpec, grid: RadialGrid) -> RadialOperator:
    """Mixed-order operator realizing (d/dr + n/r) composed with the mode-n map.

    Its Hankel multiplier is rho FT(rho) between orders n-1 and n, so the
    kernel is int rho^2 J_{n-1}(r rho) J_n(r' rho) FT(rho) drho; the discrete
    L^2(r dr) norm is sup_rho rho FT(rho), below 1 for the kernels used here.
    """
    if spec.kind not in ("gaussian", "exponential"):
        raise KernelError("derived operator needs a closed-form Fourier profile")
    r = grid.nodes
    r_all = grid.all_nodes
    cut = spec.rho_cut()
    osc = max(float(r_all.max()), 1.0)
    from .quadrature import gauss_panels
    t, w = gauss_panels(0.0, cut, int(np.ceil(2.0 * cut * osc / np.pi)) + 8, 10)
    ft = spec.fourier_transform(t) * t
    ja = _sp.jv(n - 1, np.outer(r, t))
    jb = _sp.jv(n, np.outer(r_all, t))
    kernel_rows = np.einsum("q,iq,jq->ij", w * ft * t, ja, jb, optimize=True)
    matrix = kernel_rows[:, : grid.size] * grid.weights[None, :]
    farfield = kernel_rows @ grid.all_weights
    return RadialOperator(mode=n, grid=grid, matrix=matrix, farfield=farfield,
                          ext_matrix=kernel_rows[:, grid.size:],
                          ext_row_mass=np.zeros(grid.size),
                          ext_farfield=np.empty(0), kernel_kind=f"{spec.kind}-B",
                          kernel_p=spec.p, tail_bound=_tail_mass_bound(spec, grid.R_ext - grid.R))


def commutator_C(n: int, grid: RadialGrid, p: float = np.pi) -> RadialOperator:
    """Dilation-commutator operator 4p H_n(rho^2 e^{-p rho^2}) H_n.

    Equals -4p times the p-derivative of the Gaussian mode kernel; symmetric
    positive semidefinite in the r dr inner product, and vanishing on the
    axis row for n >= 1.
    """
    r = grid.nodes
    r_all = grid.all_nodes
    kernel_rows = -4.0 * p * weber_kernel_dp(n, p, r[:, None], r_all[None, :])
    matrix = kernel_rows[:, : grid.size] * grid.weights[None, :]
    farfield = kernel_rows @ grid.all_weights
    return RadialOperator(mode=n, grid=grid, matrix=matrix, farfield=farfield,
                          ext_matrix=kernel_rows[:, grid.size:],
                          ext_row_mass=np.zeros(grid.size),
                          ext_farfield=np.empty(0), kernel_kind="gaussian-C",
                          kernel_p=p, tail_bound=0.0)


def first_moment_response(op: RadialOperator) -> np.ndarray:
    """int_0^{R_ext} K_n(r_i, r') r'^2 dr' (response to the linear ramp)."""
    w_all = op.grid.all_weights
    r_all = op.grid.all_nodes
    full = np.concatenate([op.matrix / op.grid.weights[None, :], op.ext_matrix], axis=1)
    return full @ (w_all * r_all)


def shifted_mode_pair(op: RadialOperator, spec: KernelSpec):
    """Operators of modes n-1 and n+1 on the same grid (for derivative checks)."""
    lo = assemble_operator(abs(op.mode - 1), spec, op.grid)
    hi = assemble_operator(op.mode + 1, spec, op.grid)
    return lo, hi
