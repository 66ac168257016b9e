"""Sampled tensor fields and metric fields on chart grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import GridMismatchError, InputError, NotSPDError
from .manifolds import ManifoldModel, g0_matrices


def _sym2x2_abs_eig_max(a11, a12, a22):
    half_tr = 0.5 * (a11 + a22)
    disc = np.sqrt((0.5 * (a11 - a22)) ** 2 + a12**2)
    return np.maximum(np.abs(half_tr + disc), np.abs(half_tr - disc))


def g0_operator_norms(model: ManifoldModel, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Pointwise operator norm of covariant 2-tensors w.r.t. g0.

    For a possibly non-symmetric value M this is the largest singular value
    of g0^{-1/2} M g0^{-1/2}; for symmetric values it is the largest
    absolute eigenvalue.
    """
    vals = np.asarray(values, dtype=float)
    if model.dim == 1:
        return np.abs(vals[:, 0, 0])
    if model.kind == "sphere2":
        s = np.sin(np.atleast_2d(points)[:, 0])
        scale = np.stack([np.ones_like(s), 1.0 / s], axis=1)
        vals = vals * scale[:, :, None] * scale[:, None, :]
    asym = vals - np.transpose(vals, (0, 2, 1))
    if np.max(np.abs(asym)) <= 1e-13 * (1.0 + np.max(np.abs(vals))):
        return _sym2x2_abs_eig_max(vals[:, 0, 0], vals[:, 0, 1], vals[:, 1, 1])
    mtm = np.einsum("pki,pkj->pij", vals, vals)
    return np.sqrt(_sym2x2_abs_eig_max(mtm[:, 0, 0], mtm[:, 0, 1], mtm[:, 1, 1]))


@dataclass(frozen=True)
class Tensor2Field:
    """Symmetric covariant 2-tensor sampled on a chart point grid."""

    model: ManifoldModel
    points: np.ndarray   # (P, n)
    values: np.ndarray   # (P, n, n)

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise InputError("tensor field has non-finite values")
        if self.values.shape[0] != self.points.shape[0]:
            raise GridMismatchError("values and points disagree in length")

    def op_norms(self) -> np.ndarray:
        return g0_operator_norms(self.model, self.points, self.values)

    def sup_norm(self) -> float:
        return float(self.op_norms().max())

    def scaled(self, c: float) -> "Tensor2Field":
        return Tensor2Field(self.model, self.points, c * self.values)

    def minus(self, other: "Tensor2Field") -> "Tensor2Field":
        if other.points.shape != self.points.shape or not np.allclose(
            other.points, self.points, atol=0.0, rtol=0.0
        ):
            raise GridMismatchError("tensor fields sampled on different grids")
        return Tensor2Field(self.model, self.points, self.values - other.values)

    def min_eig_g0(self) -> float:
        """Smallest eigenvalue of g0^{-1/2} T g0^{-1/2} over the grid."""
        vals = self.values
        if self.model.dim == 1:
            return float(vals[:, 0, 0].min())
        if self.model.kind == "sphere2":
            s = np.sin(self.points[:, 0])
            scale = np.stack([np.ones_like(s), 1.0 / s], axis=1)
            vals = vals * scale[:, :, None] * scale[:, None, :]
        half_tr = 0.5 * (vals[:, 0, 0] + vals[:, 1, 1])
        disc = np.sqrt((0.5 * (vals[:, 0, 0] - vals[:, 1, 1])) ** 2 + vals[:, 0, 1] ** 2)
        return float((half_tr - disc).min())


@dataclass(frozen=True)
class MetricField:
    """Riemannian metric as an SPD chart-matrix field.

    ``conformal_u`` is set when the metric is e^u g0 for a scalar u; several
    assemblies (notably on the sphere) are only available in that case.
    """

    name: str
    model: ManifoldModel
    matrix_fn: Callable[[np.ndarray], np.ndarray]
    conformal_u: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def matrices(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = np.asarray(self.matrix_fn(pts), dtype=float)
        g = 0.5 * (g + np.transpose(g, (0, 2, 1)))
        if self.model.dim == 1:
            if np.any(g[:, 0, 0] <= 0.0):
                raise NotSPDError(f"metric {self.name!r} not positive at a queried point")
        else:
            det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
            if np.any(g[:, 0, 0] <= 0.0) or np.any(det <= 0.0):
                raise NotSPDError(f"metric {self.name!r} not SPD at a queried point")
        return g

    def inverses(self, points: np.ndarray) -> np.ndarray:
        g = self.matrices(points)
        if self.model.dim == 1:
            return 1.0 / g
        det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
        inv = np.empty_like(g)
        inv[:, 0, 0] = g[:, 1, 1] / det
        inv[:, 1, 1] = g[:, 0, 0] / det
        inv[:, 0, 1] = inv[:, 1, 0] = -g[:, 0, 1] / det
        return inv

    def volume_ratio(self, points: np.ndarray) -> np.ndarray:
        """dV_{g0}/dV_g = sqrt(det g0 / det g) at each point."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        g = self.matrices(pts)
        g0 = g0_matrices(self.model, pts)
        if self.model.dim == 1:
            return np.sqrt(g0[:, 0, 0] / g[:, 0, 0])
        det_g = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] ** 2
        det_g0 = g0[:, 0, 0] * g0[:, 1, 1] - g0[:, 0, 1] ** 2
        return np.sqrt(det_g0 / det_g)

    def as_field(self, points: np.ndarray) -> Tensor2Field:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return Tensor2Field(self.model, pts, self.matrices(pts))


@dataclass(frozen=True)
class MetricPerturbation:
    """Symmetric (not necessarily definite) 2-tensor field: a tangent to Met(M)."""

    name: str
    model: ManifoldModel
    matrix_fn: Callable[[np.ndarray], np.ndarray]

    def matrices(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = np.asarray(self.matrix_fn(pts), dtype=float)
        return 0.5 * (h + np.transpose(h, (0, 2, 1)))


def reference_metric(model: ManifoldModel) -> MetricField:
    return MetricField(
        "g0", model,
        lambda pts: g0_matrices(model, pts),
        conformal_u=lambda pts: np.zeros(np.atleast_2d(pts).shape[0]),
    )


def relative_errors(approx: Tensor2Field, target: MetricField, weights=None):
    """(sup, L2) relative error of a tensor field against a metric field.

    Pointwise errors use the g0 operator norm; the L2 version integrates the
    squared pointwise norms with the supplied grid weights (uniform if None).
    """
    tgt = target.matrices(approx.points)
    diff = g0_operator_norms(approx.model, approx.points, approx.values - tgt)
    ref = g0_operator_norms(approx.model, approx.points, tgt)
    sup = float((diff / ref).max())
    w = np.ones(len(diff)) if weights is None else np.asarray(weights, dtype=float)
    l2 = float(np.sqrt(np.dot(w, diff**2) / np.dot(w, ref**2)))
    return sup, l2
