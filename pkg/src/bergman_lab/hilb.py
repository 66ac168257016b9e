"""Inverting the Bergman limit: from a target metric to an inner product.

The symbol b(x, xi) = c_n (dV_{g0}/dV_g)(x) |xi|_g^{-(n+2)} on the unit
cosphere, with c_n = n (n+2) (2 pi)^n / Vol(S^{n-1}), quantizes to an inner
product whose Bergman metric converges to g after the mu^{-(n+2)} rescale.
On the circle the symbol is fiber-even, and for conformal metrics it is
fiber-independent, so both cases reduce to multiplication operators; the
torus uses the full quantization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bergman import InnerProductMatrix, dd_kernel
from .errors import UnsupportedModelError
from .fields import MetricField, Tensor2Field, relative_errors
from .manifolds import EigenBasis, ManifoldModel, basis_for, quadrature_grid
from .operators import (
    ScalarField,
    SymbolField,
    assemble_kohn_nirenberg,
    assemble_multiplication,
    positivity_repair,
)


def normalization_constant(n: int) -> float:
    """c_n = n (n+2) (2 pi)^n / Vol(S^{n-1}), fixed by E_N(Hilb(g0)) -> g0."""
    fiber = 2.0 if n == 1 else 2.0 * math.pi
    return n * (n + 2) * (2.0 * math.pi) ** n / fiber


@dataclass(frozen=True)
class HilbSymbol:
    """Strictly positive order-zero symbol inverting the Bergman transform."""

    metric: MetricField
    symbol: SymbolField
    c_n: float


def hilb_symbol(g: MetricField) -> HilbSymbol:
    model = g.model
    n = model.dim
    c_n = normalization_constant(n)

    def make_evaluator(points: np.ndarray):
        ratio = g.volume_ratio(points)
        ginv = g.inverses(points)

        def ev(xi_unit: np.ndarray) -> np.ndarray:
            q = np.einsum("pij,pi,pj->p", ginv, xi_unit, xi_unit)
            return c_n * ratio * q ** (-(n + 2) / 2.0)

        return ev

    def fn(points: np.ndarray, xi_unit: np.ndarray) -> np.ndarray:
        return make_evaluator(np.atleast_2d(points))(xi_unit)

    sym = SymbolField(f"hilb[{g.name}]", model, fn, make_evaluator=make_evaluator)
    return HilbSymbol(g, sym, c_n)


def _symbol_as_multiplication(sym: SymbolField, model: ManifoldModel) -> ScalarField:
    """Restrict a fiber-constant (or fiber-even on S^1) symbol to a scalar field."""

    def fn(points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        xi = np.zeros((pts.shape[0], model.dim))
        xi[:, 0] = 1.0
        return sym.values(pts, xi)

    return ScalarField(f"{sym.name}|fiber", fn)


def hilb_n(
    g: MetricField,
    basis: EigenBasis,
    quantization: str = "left",
    floor: Optional[float] = None,
) -> InnerProductMatrix:
    """Assemble the inner product <Hilb(g) . , .> on the spectral window.

    circle: any metric (the symbol is even in the one-dimensional fiber, so
    quantization is multiplication).  torus2: any metric, by Kohn-Nirenberg.
    sphere2: conformal metrics only (fiber-independent symbol); anything
    else raises UnsupportedModelError.  The result is repaired onto the SPD
    cone; the applied shift is recorded on the returned inner product.
    """
    model = g.model
    hs = hilb_symbol(g)
    if model.kind == "circle":
        op = assemble_multiplication(_symbol_as_multiplication(hs.symbol, model), basis)
    elif model.kind == "torus2":
        op = assemble_kohn_nirenberg(hs.symbol, basis, quantization=quantization)
    elif model.kind == "sphere2":
        if g.conformal_u is None:
            raise UnsupportedModelError(
                "sphere assembly supports conformal metrics e^u g0 only"
            )
        op = assemble_multiplication(_symbol_as_multiplication(hs.symbol, model), basis)
    else:
        raise UnsupportedModelError(model.kind)
    spd, shift = positivity_repair(op, floor=floor)
    return InnerProductMatrix(spd, basis, shift)


def approximate(
    g: MetricField,
    basis: EigenBasis,
    points: np.ndarray,
    quantization: str = "left",
) -> tuple[Tensor2Field, float]:
    """Normalized Bergman approximation mu^{-(n+2)} E_N(Hilb_N(g)) of g.

    The positivity-repair shift is compensated exactly (a shift s adds
    s * dd(I), so the unshifted assembly is used).  Returns the field and
    the shift that was compensated.
    """
    ip = hilb_n(g, basis, quantization=quantization)
    n = g.model.dim
    scale = basis.mu_top ** -(n + 2)
    field = dd_kernel(ip.unshifted(), basis, points)
    return field.scaled(scale), ip.shift


def approx_error(
    g: MetricField, field: Tensor2Field, weights: Optional[np.ndarray] = None
) -> tuple[float, float]:
    """(sup, L2) relative error of an approximation field against g."""
    return relative_errors(field, g, weights)


def approximation_sweep(
    g: MetricField,
    cutoffs,
    grid_res: int = 16,
    quantization: str = "left",
):
    """Rows (cutoff, mu, sup_rel_err, l2_rel_err, pd_shift) over a level sweep."""
    model = g.model
    pts, w = quadrature_grid(model, grid_res)
    rows = []
    for cutoff in cutoffs:
        basis = basis_for(model, cutoff)
        field, shift = approximate(g, basis, pts, quantization=quantization)
        sup, l2 = approx_error(g, field, w)
        rows.append((cutoff, basis.mu_top, sup, l2, shift))
    return rows
