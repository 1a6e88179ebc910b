"""Interaction kernels: real-space profile, Fourier transform, mode kernels.

An interaction J is an L1-normalized, rotation-invariant, non-negative
definite function on the plane.  Two closed-form families are provided:

* ``gaussian(p)``:    FT(rho) = exp(-p rho^2),      J(x) = e^{-|x|^2/4p}/(4 pi p)
* ``exponential(p)``: FT(rho) = e^{-p rho}(1+p rho), J(x) = (3 p^3/2 pi)(p^2+|x|^2)^{-5/2}

plus ``tabulated`` kernels given by a callable Fourier profile.  The mode-n
kernel is the Hankel-diagonal reduction int FT(rho) J_n(r rho) J_n(r' rho)
rho drho; for the Gaussian it has the Weber closed form, for the exponential
a Legendre-function representation, and in general it is computed by
oscillation-resolving quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special as _sp

from .grids import ConfigError
from .quadrature import gauss_panels


class KernelError(ValueError):
    """Unsupported kernel or invalid kernel arguments."""


@dataclass(frozen=True)
class KernelSpec:
    """Interaction choice: 'gaussian', 'exponential', or 'tabulated'.

    For tabulated kernels ``fourier`` is a vectorized callable rho -> FT(rho)
    with FT(0) = 1 and values in [0, 1]; ``fourier_cut`` bounds its support
    for quadrature purposes.
    """

    kind: str
    p: float = np.pi
    fourier: Callable[[np.ndarray], np.ndarray] | None = None
    fourier_cut: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "exponential", "tabulated"):
            raise KernelError(f"unknown kernel kind {self.kind!r}")
        if self.kind != "tabulated" and self.p <= 0:
            raise KernelError("kernel width p must be positive")
        if self.kind == "tabulated":
            if self.fourier is None:
                raise KernelError("tabulated kernel needs a fourier callable")
            f0 = float(np.asarray(self.fourier(np.array([0.0])))[0])
            if abs(f0 - 1.0) > 1e-10:
                raise KernelError(f"fourier profile violates FT(0)=1 (got {f0})")

    def fourier_transform(self, rho):
        """FT(rho) of the interaction; lies in [0, 1] with FT(0) = 1."""
        rho = np.asarray(rho, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-self.p * rho**2)
        if self.kind == "exponential":
            return np.exp(-self.p * rho) * (1.0 + self.p * rho)
        return self.fourier(rho)

    def radial_profile(self, r):
        """J as a function of radius, normalized so that int_plane J = 1."""
        r = np.asarray(r, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-r**2 / (4.0 * self.p)) / (4.0 * np.pi * self.p)
        if self.kind == "exponential":
            return (3.0 * self.p**3 / (2.0 * np.pi)) * (self.p**2 + r**2) ** (-2.5)
        # inverse Hankel transform of order 0
        cut = self.rho_cut()
        t, w = gauss_panels(0.0, cut, max(int(cut * (np.max(r) + 1.0)), 64), 8)
        vals = self.fourier_transform(t) * t
        return np.array([(1.0 / (2.0 * np.pi)) * np.sum(w * vals * _sp.j0(rr * t))
                         for rr in np.atleast_1d(r)])

    def rho_cut(self, tol: float = 1e-14) -> float:
        """Frequency beyond which FT < tol (quadrature truncation point)."""
        if self.kind == "gaussian":
            return float(np.sqrt(np.log(1.0 / tol) / self.p))
        if self.kind == "exponential":
            # e^{-x}(1+x) < tol ; crude but safe bound
            x = np.log(1.0 / tol)
            for _ in range(40):
                x = np.log((1.0 + x) / tol)
            return float(x / self.p)
        if self.fourier_cut is None:
            raise KernelError("tabulated kernel needs fourier_cut")
        return float(self.fourier_cut)

    def second_moment(self) -> float:
        """int |x|^2 J(x) dx over the plane (sets far-field asymptotics)."""
        if self.kind == "gaussian":
            return 4.0 * self.p
        if self.kind == "exponential":
            return 2.0 * self.p**2
        raise KernelError("second_moment not available for tabulated kernels")

    def cubic_fourier_moment(self, s) -> np.ndarray:
        """int_0^s rho^3 J_radial(rho) drho (enters the vortex counterterm)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if self.kind == "gaussian":
            q = s**2 / (4.0 * self.p)
            return (2.0 * self.p / np.pi) * (1.0 - np.exp(-q) * (1.0 + q))
        if self.kind == "exponential":
            p = self.p
            # int_0^s rho^3 (3p^3/2pi)(p^2+rho^2)^{-5/2} drho, closed form
            t = np.sqrt(p**2 + s**2)
            prim = (3.0 * p**3 / (2.0 * np.pi)) * ((p**2 / (3.0 * t**3)) - 1.0 / t + 2.0 / (3.0 * p))
            return prim
        raise KernelError("cubic_fourier_moment not available for tabulated kernels")


def weber_kernel(n: int, p: float, r, r2):
    """Mode-n Gaussian kernel (1/2p) e^{-(r^2+r'^2)/4p} I_n(r r'/2p).

    Evaluated in overflow-safe scaled form; nonnegative, zero only when
    n >= 1 and r*r' = 0.  Broadcasts over array arguments.
    """
    if p <= 0:
        raise KernelError("weber_kernel requires p > 0")
    r = np.asarray(r, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    z = r * r2 / (2.0 * p)
    return (0.5 / p) * np.exp(-((r - r2) ** 2) / (4.0 * p)) * _sp.ive(n, z)


def weber_kernel_dp(n: int, p: float, r, r2):
    """d/dp of the mode-n Gaussian kernel (closed form, scaled)."""
    r = np.asarray(r, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    z = r * r2 / (2.0 * p)
    s = r**2 + r2**2
    expf = np.exp(-((r - r2) ** 2) / (4.0 * p))
    ive_n = _sp.ive(n, z)
    # I_n'(z) = I_{n+1}(z) + (n/z) I_n(z); the n/z term handled separately
    ive_np = _sp.ive(n + 1, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        n_over_z = np.where(z > 0, n / np.where(z > 0, z, 1.0), 0.0)
    d_in = ive_np + n_over_z * ive_n
    term = (s / (4.0 * p) - 1.0) * ive_n - z * d_in
    out = (0.5 / p**2) * expf * term
    if n >= 1:
        out = np.where(z == 0, 0.0, out)
    return out


def _legendre_q_half(n: int, chi, w_max: float = 9.0, pts: int = 240):
    """Q_{n-1/2}(chi) for chi >= 1 via its exponential integral representation.

    Substitutes s = eta + y^2 in int_eta^inf (2 cosh s - 2 cosh eta)^{-1/2}
    e^{-n s} ds to remove the square-root singularity at the lower limit.
    """
    chi = np.asarray(chi, dtype=float)
    eta = np.arccosh(np.clip(chi, 1.0, None))
    y, wy = gauss_panels(0.0, w_max, pts // 8, 8)
    s = eta[..., None] + y**2
    den = 2.0 * np.cosh(s) - 2.0 * np.cosh(eta)[..., None]
    integrand = 2.0 * y * np.exp(-n * s) / np.sqrt(den)
    return np.sum(wy * integrand, axis=-1)


def legendre_kernel(n: int, p: float, r, r2, dp_rel: float = 1e-2):
    """Mode-n kernel of the exponential interaction FT = e^{-p rho}(1+p rho).

    Obtained from G(p) = Q_{n-1/2}((r^2+r'^2+p^2)/2rr')/(pi sqrt(rr')) as
    -dG/dp + p d^2G/dp^2, with fourth-order finite differences in p.
    Requires r, r2 > 0 (the Hankel product vanishes on the axis for n >= 1;
    use the quadrature path for axis values).
    """
    r = np.asarray(r, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    if np.any(r * r2 <= 0):
        raise KernelError("legendre_kernel is singular at r*r2 = 0")
    h = dp_rel * p

    def g(pp):
        chi = (r**2 + r2**2 + pp**2) / (2.0 * r * r2)
        return _legendre_q_half(n, chi) / (np.pi * np.sqrt(r * r2))

    gm2, gm1, g0, gp1, gp2 = (g(p + k * h) for k in (-2, -1, 0, 1, 2))
    d1 = (gm2 - 8.0 * gm1 + 8.0 * gp1 - gp2) / (12.0 * h)
    d2 = (-gm2 + 16.0 * gm1 - 30.0 * g0 + 16.0 * gp1 - gp2) / (12.0 * h * h)
    return -d1 + p * d2


def hankel_mode_kernel(n: int, spec: KernelSpec, r, r2, pts_per_panel: int = 10):
    """Mode-n kernel by direct quadrature of the Fourier-Bessel integral.

    Works for any admissible Fourier profile; panel width resolves the
    fastest Bessel oscillation max(r, r2).  ``r`` and ``r2`` are 1-D arrays;
    the full matrix K[i, j] is returned.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    r2 = np.atleast_1d(np.asarray(r2, dtype=float))
    cut = spec.rho_cut()
    osc = max(float(np.max(r, initial=0.0)), float(np.max(r2, initial=0.0)), 1.0)
    n_panels = int(np.ceil(2.0 * cut * osc / np.pi)) + 8
    t, w = gauss_panels(0.0, cut, n_panels, pts_per_panel)
    ft = spec.fourier_transform(t)
    ja = _sp.jv(n, np.outer(r, t))
    jb = _sp.jv(n, np.outer(r2, t))
    return np.einsum("q,iq,jq->ij", w * ft * t, ja, jb, optimize=True)
