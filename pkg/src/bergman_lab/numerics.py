"""Dense symmetric linear algebra and 1-D quadrature kernels.

Everything here is pure: inputs are treated as immutable, summation orders
are fixed by the underlying LAPACK/numpy calls, and repeated invocations
with the same arguments are bit-identical regardless of how many worker
threads the caller uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NotSPDError

FACTOR_RTOL = 1e-10  # relative tolerance for factorization residuals


def _as_array(mat) -> np.ndarray:
    if isinstance(mat, SymMatrix):
        return mat.entries
    if isinstance(mat, SPDMatrix):
        return mat.base.entries
    return np.asarray(mat, dtype=float)


@dataclass(frozen=True)
class SymMatrix:
    """Real symmetric matrix; symmetrized exactly on construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InputError(f"expected a square matrix, got shape {a.shape}")
        if not np.isfinite(a).all():
            raise InputError("matrix has non-finite entries")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SPDMatrix:
    """Symmetric positive-definite matrix with its smallest eigenvalue certified."""

    base: SymMatrix
    min_eigenvalue: float = field(default=None)

    def __post_init__(self):
        if self.min_eigenvalue is None:
            w = np.linalg.eigvalsh(self.base.entries)
            object.__setattr__(self, "min_eigenvalue", float(w[0]))
        if self.min_eigenvalue <= 0.0:
            raise NotSPDError(
                f"matrix is not positive-definite (min eigenvalue {self.min_eigenvalue:g})"
            )

    @property
    def entries(self) -> np.ndarray:
        return self.base.entries

    @property
    def dim(self) -> int:
        return self.base.dim


@dataclass(frozen=True)
class Quadrature1D:
    """1-D quadrature rule; weights are positive and sum to the interval measure."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str

    def integrate(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


def sym_eig(mat) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Within a repeated eigenvalue the eigenvector choice is arbitrary; callers
    must only use spectral projectors, never individual vectors from a cluster.
    """
    a = _as_array(mat)
    if not np.isfinite(a).all():
        raise InputError("matrix has non-finite entries")
    a = 0.5 * (a + a.T)
    w, q = np.linalg.eigh(a)
    return w, q


def spd_sqrt(mat) -> SPDMatrix:
    """Symmetric positive square root: result @ result == input."""
    a = _as_array(mat)
    w, q = sym_eig(a)
    scale = max(abs(w[0]), abs(w[-1]), 1.0)
    if w[0] <= 0.0 or w[0] <= -FACTOR_RTOL * scale:
        raise NotSPDError(f"matrix is not positive-definite (min eigenvalue {w[0]:g})")
    root = (q * np.sqrt(w)) @ q.T
    return SPDMatrix(SymMatrix(root), float(np.sqrt(w[0])))


def make_quadrature(kind: str, m: int) -> Quadrature1D:
    """Build a quadrature rule.

    ``periodic-trapezoid`` covers [0, 2pi) and is exact for trigonometric
    polynomials of degree < m.  ``gauss-legendre`` covers [-1, 1] and is
    exact for polynomials of degree <= 2m - 1.
    """
    if m < 2:
        raise InputError(f"need at least 2 nodes, got {m}")
    if kind == "periodic-trapezoid":
        nodes = 2.0 * np.pi * np.arange(m) / m
        weights = np.full(m, 2.0 * np.pi / m)
    elif kind == "gauss-legendre":
        nodes, weights = np.polynomial.legendre.leggauss(m)
    else:
        raise InputError(f"unknown quadrature kind {kind!r}")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return Quadrature1D(nodes, weights, kind)
