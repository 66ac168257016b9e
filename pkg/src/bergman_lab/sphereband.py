"""Single-eigenspace pullback metrics on the round sphere.

A band tensor DD Pi_{N+k} B Pi_N is compared against the geodesic-flow
prediction

    (2 pi)^{-(n+1)} * S * int_{-pi}^{pi} e^{-itk}
        int_{S*_x} b(G^t(x, xi)) xi (x) xi  dS(xi) dt,

where the degree scale S = mu_N mu_{N+k} (2N + k + 1)/2 equals N^{n+1} to
leading order and is calibrated so that b = 1, k = 0 reproduces the constant
pullback of a single band exactly (the trace identity fixes that constant to
mu_N^2 d_N / (n Vol): summing |grad Y|^2 over an orthonormal band basis and
integrating must give mu_N^2 d_N).  The t-integral enters through its
2pi-average; this is the normalization under which summing the bands over k
recovers the cumulative mu^{n+2}/((n+2)(2 pi)^n) law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bergman import _contract, dd_kernel
from .errors import InputError
from .fields import Tensor2Field, g0_operator_norms
from .manifolds import (
    CospherePoint,
    EigenBasis,
    basis_for,
    eval_basis,
    g0_matrices,
    geodesic_flow_sphere,
    quadrature_grid,
    sphere2,
)
from .operators import ScalarField, assemble_multiplication, fiber_bundle


def band_constant(n_deg: int) -> float:
    """Exact pullback constant of one sphere band: mu^2 d / (n Vol)."""
    return n_deg * (n_deg + 1) * (2 * n_deg + 1) / (8.0 * math.pi)


@dataclass(frozen=True)
class BandBasis:
    """The 2N+1 degree-N harmonics, as a slice of the full eigenbasis."""

    degree: int
    basis: EigenBasis
    band: slice

    @property
    def multiplicity(self) -> int:
        return self.band.stop - self.band.start

    def eval(self, points: np.ndarray):
        vals, grads = eval_basis(self.basis, points)
        return vals[self.band], grads[self.band]


def band_basis(n_deg: int) -> BandBasis:
    """Basis of a single sphere eigenspace, orthonormal by construction."""
    if n_deg < 1:
        raise InputError("band degree must be at least 1")
    basis = basis_for(sphere2(), n_deg)
    return BandBasis(n_deg, basis, basis.level_slice(n_deg))


def takahashi_check(n_deg: int, grid_res: int = 12) -> tuple[float, float]:
    """Max relative deviation of the band pullback from band_constant * g0."""
    model = sphere2()
    bb = band_basis(n_deg)
    pts, _ = quadrature_grid(model, grid_res)
    _, gband = bb.eval(pts)
    tensor = np.einsum("dip,djp->pij", gband, gband)
    c = band_constant(n_deg)
    dev = g0_operator_norms(model, pts, tensor - c * g0_matrices(model, pts))
    return c, float(dev.max() / c)


def band_dd(
    a: ScalarField, n_deg: int, k: int, points: np.ndarray, quad_res: int = 0
) -> Tensor2Field:
    """Symmetrized mixed-band tensor of multiplication by ``a``.

    sum_{m,m'} <a Y_{N,m}, Y_{N+k,m'}>  dY_{N+k,m'} (x) dY_{N,m}, the
    cross matrix assembled by product quadrature sized for polynomial a.
    """
    if n_deg < 1 or n_deg + k < 1:
        raise InputError("band degrees must be at least 1")
    model = sphere2()
    lmax = max(n_deg, n_deg + k)
    res = quad_res or lmax + 10
    qpts, w = quadrature_grid(model, res)
    big = basis_for(model, lmax)
    vals, _ = eval_basis(big, qpts)
    sl_in = big.level_slice(n_deg)
    sl_out = big.level_slice(n_deg + k)
    cross = (vals[sl_out] * (w * a.values(qpts))) @ vals[sl_in].T  # (d_out, d_in)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _, grads = eval_basis(big, pts)
    tensor = _contract(cross, grads[sl_out], grads[sl_in])
    tensor = 0.5 * (tensor + np.transpose(tensor, (0, 2, 1)))
    return Tensor2Field(model, pts, tensor)


def geodesic_average(source, point, xi=None, k: int = 0, t_res: int = 64) -> complex:
    """Unnormalized integral over one period of e^{-itk} b(G^t(x, xi)).

    ``point`` is either a CospherePoint or chart coordinates with ``xi`` the
    unit covector.  Periodic trapezoid in t: exact once the pullback
    t -> b(G^t) is a trigonometric polynomial of degree below t_res.
    """
    if isinstance(point, CospherePoint):
        point, xi = point.base.coords, point.xi
    if xi is None:
        raise InputError("geodesic_average needs a covector")
    if t_res < 64:
        raise InputError("t quadrature needs at least 64 nodes")
    # half-step offset: same exactness for periodic integrands, and meridional
    # geodesics from equatorial points no longer land on poles at the nodes
    ts = 2.0 * math.pi * (np.arange(t_res) + 0.5) / t_res
    pts = np.tile(np.asarray(point, dtype=float).ravel(), (t_res, 1))
    xis = np.tile(np.asarray(xi, dtype=float).ravel(), (t_res, 1))
    fpts, fxis = geodesic_flow_sphere(pts, xis, ts)
    if isinstance(source, ScalarField):
        vals = source.values(fpts)
    else:
        vals = source.values(fpts, fxis)
    weights = (2.0 * math.pi / t_res) * np.exp(-1j * k * ts)
    return complex(np.dot(weights, vals))


def band_predict(
    a, n_deg: int, k: int, points: np.ndarray, fiber_res: int = 32, t_res: int = 64
) -> Tensor2Field:
    """Geodesic-flow prediction for the (N+k, N) band tensor."""
    model = sphere2()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    reps, xis, wf = fiber_bundle(model, pts, fiber_res)
    ts = 2.0 * math.pi * (np.arange(t_res) + 0.5) / t_res
    q = reps.shape[0]
    flow_pts = np.empty((t_res, q, 2))
    flow_xis = np.empty((t_res, q, 2))
    for i, t in enumerate(ts):  # flow the whole fiber bundle one time step at a time
        fp, fx = geodesic_flow_sphere(reps, xis, t)
        flow_pts[i] = fp
        flow_xis[i] = fx
    if isinstance(a, ScalarField):
        vals = a.values(flow_pts.reshape(-1, 2)).reshape(t_res, q)
    else:
        vals = a.values(flow_pts.reshape(-1, 2), flow_xis.reshape(-1, 2)).reshape(t_res, q)
    tw = (2.0 * math.pi / t_res) * np.exp(-1j * k * ts)
    avg = np.tensordot(tw, vals, axes=(0, 0))  # (q,) complex
    nf = len(wf)
    # imaginary parts cancel only under the fiber pairing xi <-> -xi
    integ = np.einsum(
        "pf,f,pfi,pfj->pij",
        avg.reshape(-1, nf),
        wf,
        xis.reshape(-1, nf, 2),
        xis.reshape(-1, nf, 2),
    )
    if np.abs(integ.imag).max() > 1e-8 * (1.0 + np.abs(integ.real).max()):
        raise InputError("band prediction has a non-negligible imaginary part")
    integ = integ.real
    mu_in = math.sqrt(n_deg * (n_deg + 1))
    mu_out = math.sqrt((n_deg + k) * (n_deg + k + 1))
    scale = mu_in * mu_out * (2 * n_deg + k + 1) / 2.0
    n = model.dim
    pref = (2.0 * math.pi) ** (-(n + 1)) * scale
    return Tensor2Field(model, pts, pref * integ)


def sphere_band_check(
    a: ScalarField,
    n_deg: int,
    k: int,
    grid_res: int = 10,
    fiber_res: int = 32,
    t_res: int = 64,
) -> float:
    """Sup-normalized relative error of band_dd against band_predict.

    Normalized by the sup of the prediction so degenerate points (where the
    predicted tensor vanishes) do not blow up the report.
    """
    pts, _ = quadrature_grid(sphere2(), grid_res)
    measured = band_dd(a, n_deg, k, pts)
    predicted = band_predict(a, n_deg, k, pts, fiber_res, t_res)
    diff = g0_operator_norms(measured.model, pts, measured.values - predicted.values)
    ref = g0_operator_norms(measured.model, pts, predicted.values)
    return float(diff.max() / ref.max())


def cumulative_band_sum(
    a: ScalarField, n_max: int, grid_res: int = 10, fiber_res: int = 32
) -> float:
    """Relative error of the full-window tensor against the cosphere law.

    Compares DD Pi_{<=N} B Pi_{<=N} with
    mu_N^{n+2} / ((n+2) (2 pi)^n) * int b(x, xi) xi (x) xi dS(xi); the
    sphere remainder is O(1/N), improving on the general o(1).
    """
    model = sphere2()
    basis = basis_for(model, n_max)
    op = assemble_multiplication(a, basis)
    pts, _ = quadrature_grid(model, grid_res)
    measured = dd_kernel(op.matrix, basis, pts)
    reps, xis, wf = fiber_bundle(model, pts, fiber_res)
    nf = len(wf)
    b = a.values(reps)
    integ = np.einsum(
        "pf,f,pfi,pfj->pij",
        b.reshape(-1, nf),
        wf,
        xis.reshape(-1, nf, 2),
        xis.reshape(-1, nf, 2),
    )
    n = model.dim
    pref = basis.mu_top ** (n + 2) / ((n + 2) * (2.0 * math.pi) ** n)
    diff = g0_operator_norms(model, pts, measured.values - pref * integ)
    ref = g0_operator_norms(model, pts, pref * integ)
    return float(diff.max() / ref.max())
