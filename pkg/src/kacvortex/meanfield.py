"""Mean-field thermodynamics of the planar rotator.

Provides the modified Bessel ratio ``f = I1/I0``, the entropy of the
block-spin average and its derivatives, the critical magnetization ``m_beta``
(largest fixed point of ``m = f(beta*m)``, positive for ``beta > 2``), and the
mean-field free energy density ``f_beta(m) = -m^2/2 + I(m)/beta``.

Everything here is a pure function of scalars or arrays; instances of
:class:`ThermoContext` are frozen, so concurrent use needs no locking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

_SERIES_SPLIT = 15.0  # series below, peak-centered scaled series above
_RHO_MAX = 1.0 - 1e-9  # entropy saturates; beyond this the root-find overflows


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


def bessel_i(nu: int, x: float) -> float:
    """Modified Bessel function I_nu(x) for integer nu >= 0, x >= 0.

    Relative error is ~1e-13 across x in [0, 700]; raises for x large enough
    to overflow the exponential range (use :func:`bessel_i_scaled` there).
    """
    if x < 0:
        raise DomainError("bessel_i requires x >= 0")
    if nu < 0 or int(nu) != nu:
        raise DomainError("bessel_i requires integer nu >= 0")
    if x > 705.0:
        raise OverflowError("bessel_i overflows for x > 705; use bessel_i_scaled")
    if x < _SERIES_SPLIT:
        return _series_small(int(nu), float(x))
    return math.exp(x) * bessel_i_scaled(nu, x)


def bessel_i_scaled(nu: int, x: float) -> float:
    """Exponentially scaled e^{-x} I_nu(x); safe for arbitrarily large x."""
    if x < 0:
        raise DomainError("bessel_i_scaled requires x >= 0")
    if nu < 0 or int(nu) != nu:
        raise DomainError("bessel_i_scaled requires integer nu >= 0")
    nu = int(nu)
    x = float(x)
    if x < _SERIES_SPLIT:
        return math.exp(-x) * _series_small(nu, x)
    return _series_peak_scaled(nu, x)


def _series_small(nu: int, x: float) -> float:
    # plain ascending series; all terms positive, no cancellation
    if x == 0.0:
        return 1.0 if nu == 0 else 0.0
    half = 0.5 * x
    term = half**nu / math.factorial(nu)
    total = term
    q = half * half
    for k in range(1, 400):
        term *= q / (k * (k + nu))
        total += term
        if term < 1e-18 * total:
            break
    return total


def _series_peak_scaled(nu: int, x: float) -> float:
    # e^{-x} I_nu(x) summed outward from the dominant series term k* ~ x/2;
    # log-scaled so no intermediate overflow for x up to ~1e6
    half = 0.5 * x
    logq = 2.0 * math.log(half)
    k_star = max(int(x / 2), 1)
    log_t = -x + (2 * k_star + nu) * math.log(half) \
        - math.lgamma(k_star + 1) - math.lgamma(k_star + nu + 1)
    t_star = math.exp(log_t)
    total = t_star
    term = t_star
    for k in range(k_star + 1, k_star + 100000):
        term *= math.exp(logq) / (k * (k + nu))
        total += term
        if term < 1e-18 * total:
            break
    term = t_star
    for k in range(k_star, 0, -1):
        term *= k * (k + nu) * math.exp(-logq)
        total += term
        if term < 1e-18 * total:
            break
    return total


def bessel_ratio(t):
    """f(t) = I1(t)/I0(t), elementwise; strictly increasing, f(t) -> 1."""
    t = np.asarray(t, dtype=float)
    out = _sp.i1e(t) / _sp.i0e(t)
    return out if out.ndim else float(out)


def bessel_ratio_prime(t):
    """f'(t) = 1 - f(t)^2 - f(t)/t, with the limit value 1/2 at t = 0."""
    t = np.asarray(t, dtype=float)
    f = _sp.i1e(t) / _sp.i0e(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(t > 1e-8, 1.0 - f * f - f / np.where(t > 0, t, 1.0),
                       0.5 - 3.0 * t * t / 16.0)
    return out if out.ndim else float(out)


def inverse_bessel_ratio(rho, tol: float = 1e-14, max_iter: int = 100):
    """t solving f(t) = rho for rho in [0, 1); vectorized safeguarded Newton."""
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho_arr < 0) or np.any(rho_arr >= 1.0):
        raise DomainError("inverse_bessel_ratio requires 0 <= rho < 1")
    rho_c = np.minimum(rho_arr, _RHO_MAX)
    # t*(rho) ~ 2 rho at 0 and ~ (2-2rho)^{-1} near saturation
    t = 2.0 * rho_c / np.maximum(1e-300, 1.0 - rho_c**2)
    for _ in range(max_iter):
        f = _sp.i1e(t) / _sp.i0e(t)
        with np.errstate(invalid="ignore"):
            fp = np.where(t > 1e-8, 1.0 - f * f - f / np.where(t > 0, t, 1.0), 0.5)
        # the derivative cancels catastrophically deep in the saturation
        # regime; fall back to its asymptotic tail value there
        fp = np.where((t > 1e3) & ~(fp > 0), 0.5 / t**2, fp)
        step = (f - rho_c) / fp
        t_new = t - step
        t_new = np.where(t_new < 0, 0.5 * t, t_new)  # bisect back into t >= 0
        done = np.all(np.abs(t_new - t) <= tol * (1.0 + t))
        t = t_new
        if done:
            break
    t[rho_arr == 0.0] = 0.0
    return t if np.asarray(rho).ndim else float(t[0])


def entropy(rho, tol: float = 1e-14):
    """Entropy of the block-spin average and the maximizing tilt.

    Returns ``(I, t_star)`` where ``t_star`` solves ``f(t) = rho`` and
    ``I = t_star*rho - log I0(t_star)``; ``I'(rho) = t_star``.
    """
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
    if np.any(rho_arr >= 1.0):
        raise DomainError("entropy diverges at saturation (rho >= 1)")
    if np.any(rho_arr < 0):
        raise DomainError("entropy requires rho >= 0")
    t = np.atleast_1d(inverse_bessel_ratio(rho_arr, tol=tol))
    log_i0 = np.log(_sp.i0e(t)) + t
    val = t * rho_arr - log_i0
    val[rho_arr == 0.0] = 0.0
    if np.asarray(rho).ndim:
        return val, t
    return float(val[0]), float(t[0])


def entropy_prime(rho):
    """I'(rho) = t_star(rho)."""
    return inverse_bessel_ratio(rho)


def entropy_second(rho):
    """I''(rho) = 1/f'(t_star(rho)); equals 2 at rho = 0."""
    rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
    t = np.atleast_1d(inverse_bessel_ratio(rho_arr))
    out = 1.0 / bessel_ratio_prime(t)
    return out if np.asarray(rho).ndim else float(out if np.isscalar(out) else out[0])


def solve_m_beta(beta: float, tol: float = 1e-12) -> float:
    """Largest fixed point of m -> f(beta*m) in [0, 1); zero for beta <= 2."""
    if beta <= 0:
        raise DomainError("solve_m_beta requires beta > 0")
    if beta <= 2.0:
        return 0.0
    lo, hi = tol, 1.0 - 1e-15
    g = lambda m: m - bessel_ratio(beta * m)
    # g < 0 just above 0 (slope f'(0)*beta = beta/2 > 1), g(1-) > 0
    m = 0.5 * (lo + hi)
    for _ in range(200):
        m = 0.5 * (lo + hi)
        if g(m) > 0:
            hi = m
        else:
            lo = m
        if hi - lo < tol:
            break
    # polish with Newton
    for _ in range(8):
        f = bessel_ratio(beta * m)
        fp = bessel_ratio_prime(beta * m)
        denom = 1.0 - beta * fp
        if abs(denom) < 1e-14:
            break
        m = m - (m - f) / denom
    return float(m)


@dataclass(frozen=True)
class ThermoContext:
    """Inverse temperature with its critical magnetization and solver knobs."""

    beta: float
    m_beta: float
    newton_tol: float = 1e-12
    max_iter: int = 100

    @classmethod
    def create(cls, beta: float, newton_tol: float = 1e-12, max_iter: int = 100) -> "ThermoContext":
        return cls(beta=beta, m_beta=solve_m_beta(beta, newton_tol),
                   newton_tol=newton_tol, max_iter=max_iter)

    def __post_init__(self):
        if self.beta <= 0:
            raise DomainError("beta must be positive")
        if not (0.0 <= self.m_beta < 1.0):
            raise DomainError("m_beta must lie in [0, 1)")


def free_energy_density(m, ctx: ThermoContext):
    """f_beta(m) = -m^2/2 + I(m)/beta; minimized at m = m_beta for beta > 2."""
    m_arr = np.atleast_1d(np.asarray(m, dtype=float))
    if np.any(m_arr < 0) or np.any(m_arr >= 1.0):
        raise DomainError("free_energy_density requires 0 <= m < 1")
    val, _ = entropy(m_arr)
    out = -0.5 * m_arr**2 + val / ctx.beta
    return out if np.asarray(m).ndim else float(out[0])


def entropy_second_at_fixed_point(ctx: ThermoContext) -> float:
    """I''(m_beta) through the I0''/I0 route; cross-check of the direct value.

    Uses I0'' = (I0 + I2)/2 at t = beta*m_beta.
    """
    if ctx.m_beta == 0.0:
        return 2.0
    t = ctx.beta * ctx.m_beta
    i0 = _sp.i0e(t)
    i2 = _sp.ive(2, t)
    ratio = 0.5 * (1.0 + i2 / i0)  # I0''/I0
    return float(1.0 / (ratio - ctx.m_beta**2))
