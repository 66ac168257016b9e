"""The Riemannian metric induced on the space of metrics.

Two independent routes to the squared length of a tangent vector gdot at g:

  closed form   1/(4 n (2 pi)^n) * integral over S*M of
                (Tr(g^{-1} gdot) + (n+2) <g^{-1} gdot g^{-1} xi, xi> / |xi|_g^2)^2

  trace formula mu_N^{-n} Tr(R^{-1} Rdot R^{-1} Rdot), with R the assembled
                inner product of g and Rdot the assembled derivative symbol.

The trace formula converges to the closed form by the Szego limit theorem;
both are exposed, along with the Szego trace itself for products of up to
three compressions.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError, UnsupportedModelError
from .fields import MetricField, MetricPerturbation
from .hilb import hilb_n, hilb_symbol
from .manifolds import CosphereQuadrature, EigenBasis, cosphere_quadrature
from .operators import ScalarField, SymbolField, assemble


def _perturbation_scalars(g: MetricField, gdot: MetricPerturbation, points, xis):
    """Tr(g^{-1} gdot) and (n+2) <g^{-1} gdot g^{-1} xi, xi> / |xi|_g^2 pointwise."""
    ginv = g.inverses(points)
    h = gdot.matrices(points)
    tr = np.einsum("pij,pji->p", ginv, h)
    gig = np.einsum("pij,pjk,pkl->pil", ginv, h, ginv)
    quad = np.einsum("pij,pi,pj->p", gig, xis, xis)
    norm_sq = np.einsum("pij,pi,pj->p", ginv, xis, xis)
    n = g.model.dim
    return tr, (n + 2) * quad / norm_sq


def dhilb_symbol(
    g: MetricField, gdot: MetricPerturbation, trace_sign: int = 1
) -> SymbolField:
    """Variation symbol of the inverse-metric quantization along gdot:

        (hilb_symbol(g)/2) (trace_sign * Tr(g^{-1} gdot)
                            + (n+2) <g^{-1} gdot g^{-1} xi, xi> / |xi|_g^2).

    trace_sign=+1 is the convention the closed-form norm integrand uses;
    trace_sign=-1 is the exact Frechet derivative of hilb_symbol (the volume
    ratio decreases in g, so its logarithmic derivative is -Tr(g^{-1}gdot)/2,
    which central differences confirm).  The two differ by
    hilb_symbol * Tr(g^{-1} gdot).  Either way the result is generally
    indefinite and is never positivity-repaired.
    """
    if trace_sign not in (1, -1):
        raise InputError("trace_sign must be +1 or -1")
    base = hilb_symbol(g).symbol
    n = g.model.dim

    def make_evaluator(points: np.ndarray):
        base_ev = base.make_evaluator(points)
        ginv = g.inverses(points)
        h = gdot.matrices(points)
        tr = np.einsum("pij,pji->p", ginv, h)
        gig = np.einsum("pij,pjk,pkl->pil", ginv, h, ginv)

        def ev(xi_unit: np.ndarray) -> np.ndarray:
            quad = np.einsum("pij,pi,pj->p", gig, xi_unit, xi_unit)
            norm_sq = np.einsum("pij,pi,pj->p", ginv, xi_unit, xi_unit)
            return 0.5 * base_ev(xi_unit) * (
                trace_sign * tr + (n + 2) * quad / norm_sq
            )

        return ev

    def fn(points: np.ndarray, xi_unit: np.ndarray) -> np.ndarray:
        return make_evaluator(np.atleast_2d(points))(xi_unit)

    return SymbolField(
        f"dhilb[{g.name};{gdot.name};{trace_sign:+d}]", g.model, fn,
        make_evaluator=make_evaluator,
    )


def _dsymbol_source(g: MetricField, gdot: MetricPerturbation, model, trace_sign: int):
    sym = dhilb_symbol(g, gdot, trace_sign)
    if model.kind == "circle":
        def fn(points: np.ndarray) -> np.ndarray:
            pts = np.atleast_2d(points)
            xi = np.ones((pts.shape[0], 1))
            return sym.values(pts, xi)

        return ScalarField(sym.name + "|fiber", fn)
    return sym


def induced_norm_trace(
    g: MetricField,
    gdot: MetricPerturbation,
    basis: EigenBasis,
    quantization: str = "left",
    trace_sign: int = 1,
) -> float:
    """mu_N^{-n} Tr(R^{-1} Rdot R^{-1} Rdot) on the spectral window.

    Rdot is the quantized variation symbol in the same trace_sign convention
    as induced_norm_closed, so the two routes converge to each other.
    """
    model = g.model
    if model.kind not in ("circle", "torus2"):
        raise UnsupportedModelError("trace norm requires circle or torus2")
    r = hilb_n(g, basis, quantization=quantization)
    rdot = assemble(
        _dsymbol_source(g, gdot, model, trace_sign), basis, quantization=quantization
    )
    x = np.linalg.solve(r.entries, rdot.matrix)
    val = float(np.einsum("ij,ji->", x, x))
    n = model.dim
    return basis.mu_top ** (-n) * val


def induced_norm_closed(
    g: MetricField,
    gdot: MetricPerturbation,
    quad: CosphereQuadrature,
    trace_sign: int = 1,
) -> float:
    """Cosphere-quadrature evaluation of the closed-form induced norm."""
    tr, quadr = _perturbation_scalars(g, gdot, quad.points, quad.xis)
    n = g.model.dim
    pref = 1.0 / (4.0 * n * (2.0 * math.pi) ** n)
    return pref * float(np.dot(quad.weights, (trace_sign * tr + quadr) ** 2))


def induced_norm_closed_default(
    g: MetricField,
    gdot: MetricPerturbation,
    base_res: int = 64,
    fiber_res: int = 64,
    trace_sign: int = 1,
) -> float:
    return induced_norm_closed(
        g, gdot, cosphere_quadrature(g.model, base_res, fiber_res), trace_sign
    )


def szego_trace(
    sources: list,
    basis: EigenBasis,
    quad: CosphereQuadrature,
    quantization: str = "left",
) -> tuple[float, float, float]:
    """Trace of a product of compressions against its symbol-integral law.

    Returns (measured, predicted, ratio) with
    predicted = mu_N^n / (n (2 pi)^n) * integral of the symbol product over S*M.
    """
    if not 1 <= len(sources) <= 3:
        raise InputError("szego_trace supports products of 1 to 3 compressions")
    mats = [assemble(s, basis, quantization=quantization).matrix for s in sources]
    prod = mats[0]
    for m in mats[1:]:
        prod = prod @ m
    measured = float(np.trace(prod))
    vals = np.ones(quad.points.shape[0])
    for s in sources:
        if isinstance(s, ScalarField):
            vals = vals * s.values(quad.points)
        else:
            vals = vals * s.values(quad.points, quad.xis)
    n = basis.model.dim
    predicted = basis.mu_top**n / (n * (2.0 * math.pi) ** n) * float(
        np.dot(quad.weights, vals)
    )
    return measured, predicted, measured / predicted
