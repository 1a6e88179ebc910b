"""Weighted sup-norms and asymptotic-coefficient extraction for radial profiles.

Discretized versions of the decay norms used to classify profiles:

* X0k:  sup_[0,1] |v|  +  sup_[1,R] r^k |v|
* X1k:  X0k plus sup_[0,1] |v'| + sup_[1,R] r^{k+1} |v'|
* Y0k:  X0k plus a remainder-weighted sup after removing the fitted leading
        asymptotic terms (ell/r for k=1; ell0/r + ell1/r^2 for k=2).

Far-field coefficients are least-squares fits over the window [R/2, R].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import RadialGrid


class InsufficientDataError(ValueError):
    """Fit window holds too few nodes to extract asymptotics."""


@dataclass(frozen=True)
class NormReport:
    value: float
    coefficients: tuple
    remainder_sup: float


def _derivative(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    return np.gradient(values, nodes, edge_order=2)


def diagnostic_norms(values, grid: RadialGrid, kind: str, k: int = 2,
                     fit_window: tuple[float, float] | None = None) -> NormReport:
    """Discrete decay norm of a profile sampled on ``grid``.

    ``kind`` is one of 'X0k', 'X1k', 'Y0k'.  For 'Y0k' the report carries the
    fitted far-field coefficients and the weighted remainder sup.
    """
    v = np.asarray(values, dtype=float)
    r = grid.nodes
    if v.shape != r.shape:
        raise ValueError("profile and grid sizes differ")
    inner = r <= 1.0
    outer = ~inner
    sup_in = float(np.max(np.abs(v[inner]))) if inner.any() else 0.0
    sup_out = float(np.max(np.abs(r[outer] ** k * v[outer]))) if outer.any() else 0.0

    if kind == "X0k":
        return NormReport(sup_in + sup_out, (), 0.0)

    if kind == "X1k":
        dv = _derivative(v, r)
        sup_din = float(np.max(np.abs(dv[inner]))) if inner.any() else 0.0
        sup_dout = float(np.max(np.abs(r[outer] ** (k + 1) * dv[outer]))) if outer.any() else 0.0
        return NormReport(sup_in + sup_out + sup_din + sup_dout, (), 0.0)

    if kind != "Y0k":
        raise ValueError(f"unknown norm kind {kind!r}")

    lo, hi = fit_window if fit_window else (grid.R / 2.0, grid.R)
    win = (r >= lo) & (r <= hi)
    if int(win.sum()) < 8:
        raise InsufficientDataError("fit window holds fewer than 8 nodes")
    rw, vw = r[win], v[win]
    if k == 1:
        # r v ~ ell + c/r  ->  fit [ell, c] on (r v) against [1, 1/r]
        design = np.column_stack([np.ones_like(rw), 1.0 / rw])
        coef, *_ = np.linalg.lstsq(design, rw * vw, rcond=None)
        ell = float(coef[0])
        remainder = np.abs(r[outer] * (r[outer] * v[outer] - ell))
        rem_sup = float(np.max(remainder)) if outer.any() else 0.0
        return NormReport(sup_in + sup_out + rem_sup, (ell,), rem_sup)
    if k == 2:
        # r^2 v ~ ell0 r + ell1  ->  fit on the window
        design = np.column_stack([rw, np.ones_like(rw)])
        coef, *_ = np.linalg.lstsq(design, rw**2 * vw, rcond=None)
        ell0, ell1 = float(coef[0]), float(coef[1])
        remainder = np.sqrt(r[outer]) * np.abs(
            r[outer] ** 2 * v[outer] - ell0 * r[outer] - ell1)
        rem_sup = float(np.max(remainder)) if outer.any() else 0.0
        return NormReport(sup_in + sup_out + rem_sup, (ell0, ell1), rem_sup)
    raise ValueError("Y0k norms are defined for k in {1, 2}")
