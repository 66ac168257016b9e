"""Closed-form spectral models: circle, flat 2-torus, round 2-sphere.

Each model provides its distinct Laplace eigenvalue levels, an orthonormal
real eigenbasis with closed-form values and chart gradients, product
quadrature grids that integrate basis products exactly, the unit cosphere
bundle with its hypersurface measure, and (sphere only) the periodic
geodesic flow.

Chart conventions:
  circle   theta in [0, 2pi),           g0 = dtheta^2
  torus2   (x1, x2) in [0, 2pi)^2,      g0 = dx1^2 + dx2^2
  sphere2  (theta, phi), theta in (0, pi) colatitude, phi in [0, 2pi),
           g0 = dtheta^2 + sin(theta)^2 dphi^2
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ChartError, InputError, UnsupportedModelError
from .numerics import make_quadrature

CIRCLE = "circle"
TORUS2 = "torus2"
SPHERE2 = "sphere2"


@dataclass(frozen=True)
class ManifoldModel:
    kind: str
    dim: int
    volume: float
    injectivity_radius: float

    @property
    def sphere_fiber_volume(self) -> float:
        """Vol(S^{n-1}) of the unit cosphere fiber."""
        return 2.0 if self.dim == 1 else 2.0 * math.pi


def circle() -> ManifoldModel:
    return ManifoldModel(CIRCLE, 1, 2.0 * math.pi, math.pi)


def torus2() -> ManifoldModel:
    return ManifoldModel(TORUS2, 2, 4.0 * math.pi**2, math.pi)


def sphere2() -> ManifoldModel:
    return ManifoldModel(SPHERE2, 2, 4.0 * math.pi, math.pi)


_MODELS = {CIRCLE: circle, TORUS2: torus2, SPHERE2: sphere2}


def model_by_name(name: str) -> ManifoldModel:
    try:
        return _MODELS[name]()
    except KeyError:
        raise InputError(f"unknown model {name!r}; expected one of {sorted(_MODELS)}")


@dataclass(frozen=True)
class SpectralLevel:
    """One distinct eigenvalue mu^2 with its multiplicity and flat offset."""

    index: int
    mu_sq: float
    multiplicity: int
    offset: int


@dataclass(frozen=True)
class ManifoldPoint:
    coords: np.ndarray
    g0_matrix: np.ndarray


@dataclass(frozen=True)
class CospherePoint:
    """Unit covector (w.r.t. g0) in chart components."""

    base: ManifoldPoint
    xi: np.ndarray


def manifold_point(model: ManifoldModel, coords) -> ManifoldPoint:
    """Validated chart point carrying g0 at the point."""
    c = np.asarray(coords, dtype=float).ravel()
    if c.shape[0] != model.dim:
        raise InputError(f"expected {model.dim} chart coordinates, got {c.shape[0]}")
    if model.kind == SPHERE2 and not 0.0 < c[0] < math.pi:
        raise ChartError("sphere chart excludes the poles")
    return ManifoldPoint(c, g0_matrices(model, c[None, :])[0])


def cosphere_point(model: ManifoldModel, coords, xi) -> CospherePoint:
    """Unit-covector point on S*M; rejects |xi|_{g0} away from 1 by > 1e-12."""
    base = manifold_point(model, coords)
    x = np.asarray(xi, dtype=float).ravel()
    norm = g0_norm_xi(model, base.coords[None, :], x[None, :])[0]
    if abs(norm - 1.0) > 1e-12:
        raise InputError(f"covector has |xi|_g0 = {norm:.15g}, expected 1")
    return CospherePoint(base, x)


@dataclass(frozen=True)
class CosphereQuadrature:
    """Flattened product quadrature on S*M; weights sum to Vol(S^{n-1}) Vol(M)."""

    points: np.ndarray   # (Q, n) chart coordinates of base points
    xis: np.ndarray      # (Q, n) unit covector components
    weights: np.ndarray  # (Q,)
    model: ManifoldModel


@lru_cache(maxsize=None)
def _torus_levels(mu2_max: int) -> tuple:
    """Distinct values a^2 + b^2 <= mu2_max with full-lattice multiplicities."""
    counts: dict[int, int] = {}
    kmax = int(math.isqrt(mu2_max))
    for a in range(-kmax, kmax + 1):
        for b in range(-kmax, kmax + 1):
            q = a * a + b * b
            if q <= mu2_max:
                counts[q] = counts.get(q, 0) + 1
    return tuple(sorted(counts.items()))


def enumerate_levels(model: ManifoldModel, cutoff) -> list[SpectralLevel]:
    """All spectral levels up to the cutoff.

    The cutoff is the top level index for circle and sphere and the value
    mu^2 for the torus (whose levels are the integers representable as a
    sum of two squares).
    """
    if cutoff < 0:
        raise InputError("cutoff must be non-negative")
    levels = []
    offset = 0
    if model.kind == CIRCLE:
        for n in range(int(cutoff) + 1):
            mult = 1 if n == 0 else 2
            levels.append(SpectralLevel(n, float(n * n), mult, offset))
            offset += mult
    elif model.kind == SPHERE2:
        for n in range(int(cutoff) + 1):
            levels.append(SpectralLevel(n, float(n * (n + 1)), 2 * n + 1, offset))
            offset += 2 * n + 1
    elif model.kind == TORUS2:
        for i, (q, mult) in enumerate(_torus_levels(int(cutoff))):
            levels.append(SpectralLevel(i, float(q), mult, offset))
            offset += mult
    else:
        raise UnsupportedModelError(model.kind)
    return levels


def basis_dimension(model: ManifoldModel, cutoff) -> int:
    levels = enumerate_levels(model, cutoff)
    return levels[-1].offset + levels[-1].multiplicity


def _torus_half_lattice(mu2_max: int) -> list[tuple[int, int]]:
    """One representative per {k, -k} pair: k1 > 0, or k1 = 0 and k2 > 0."""
    out = []
    kmax = int(math.isqrt(mu2_max))
    for a in range(0, kmax + 1):
        for b in range(-kmax, kmax + 1):
            if a == 0 and b <= 0:
                continue
            if a * a + b * b <= mu2_max:
                out.append((a, b))
    return out


@dataclass(frozen=True)
class EigenBasis:
    """Ordered orthonormal eigenbasis of H_{<=N}, with closed-form evaluation.

    Entries are ordered by level, then deterministically inside each level
    (cos before sin, lexicographic frequency on the torus, m = -l..l on the
    sphere).  ``lambdas[j]**2`` is the eigenvalue of entry j.
    """

    model: ManifoldModel
    cutoff: float
    levels: tuple
    lambdas: np.ndarray
    kinds: np.ndarray  # 0 constant, 1 cos, 2 sin (circle/torus); unused on sphere
    freqs: np.ndarray  # circle: (d,) int; torus: (d,2) int; sphere: (d,2) = (l, m)

    @property
    def dim(self) -> int:
        return self.lambdas.shape[0]

    @property
    def mu_top(self) -> float:
        return float(self.lambdas[-1])

    def level_slice(self, index: int) -> slice:
        lv = self.levels[index]
        return slice(lv.offset, lv.offset + lv.multiplicity)

    def eval(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return eval_basis(self, points)


def basis_for(model: ManifoldModel, cutoff) -> EigenBasis:
    levels = tuple(enumerate_levels(model, cutoff))
    lambdas, kinds, freqs = [], [], []
    if model.kind == CIRCLE:
        for lv in levels:
            k = lv.index
            if k == 0:
                lambdas.append(0.0); kinds.append(0); freqs.append(0)
            else:
                lambdas += [float(k), float(k)]
                kinds += [1, 2]
                freqs += [k, k]
        freqs = np.array(freqs, dtype=int)
    elif model.kind == TORUS2:
        for lv in levels:
            if lv.mu_sq == 0.0:
                lambdas.append(0.0); kinds.append(0); freqs.append((0, 0))
                continue
            shell = [k for k in _torus_half_lattice(int(lv.mu_sq))
                     if k[0] * k[0] + k[1] * k[1] == int(lv.mu_sq)]
            for k in sorted(shell):
                lam = math.sqrt(lv.mu_sq)
                lambdas += [lam, lam]
                kinds += [1, 2]
                freqs += [k, k]
        freqs = np.array(freqs, dtype=int).reshape(-1, 2)
    elif model.kind == SPHERE2:
        for lv in levels:
            l = lv.index
            lam = math.sqrt(lv.mu_sq)
            for m in range(-l, l + 1):
                lambdas.append(lam)
                kinds.append(0)
                freqs.append((l, m))
        freqs = np.array(freqs, dtype=int).reshape(-1, 2)
    else:
        raise UnsupportedModelError(model.kind)
    return EigenBasis(
        model, float(cutoff), levels,
        np.array(lambdas), np.array(kinds, dtype=int), freqs,
    )


def _eval_circle(basis: EigenBasis, theta: np.ndarray):
    d, p = basis.dim, theta.shape[0]
    vals = np.empty((d, p))
    grads = np.empty((d, 1, p))
    inv_sqrt_pi = 1.0 / math.sqrt(math.pi)
    for j in range(d):
        k = int(basis.freqs[j])
        if basis.kinds[j] == 0:
            vals[j] = 1.0 / math.sqrt(2.0 * math.pi)
            grads[j, 0] = 0.0
        elif basis.kinds[j] == 1:
            vals[j] = np.cos(k * theta) * inv_sqrt_pi
            grads[j, 0] = -k * np.sin(k * theta) * inv_sqrt_pi
        else:
            vals[j] = np.sin(k * theta) * inv_sqrt_pi
            grads[j, 0] = k * np.cos(k * theta) * inv_sqrt_pi
    return vals, grads


def _eval_torus(basis: EigenBasis, xy: np.ndarray):
    d, p = basis.dim, xy.shape[0]
    vals = np.empty((d, p))
    grads = np.empty((d, 2, p))
    norm = 1.0 / (math.sqrt(2.0) * math.pi)
    phase = basis.freqs @ xy.T  # (d, p)
    cos_ph, sin_ph = np.cos(phase), np.sin(phase)
    for j in range(d):
        k = basis.freqs[j]
        if basis.kinds[j] == 0:
            vals[j] = 1.0 / (2.0 * math.pi)
            grads[j] = 0.0
        elif basis.kinds[j] == 1:
            vals[j] = cos_ph[j] * norm
            grads[j, 0] = -k[0] * sin_ph[j] * norm
            grads[j, 1] = -k[1] * sin_ph[j] * norm
        else:
            vals[j] = sin_ph[j] * norm
            grads[j, 0] = k[0] * cos_ph[j] * norm
            grads[j, 1] = k[1] * cos_ph[j] * norm
    return vals, grads


def normalized_legendre(lmax: int, theta: np.ndarray):
    """Fully normalized associated Legendre P̄_l^m(cos theta) and d/dtheta.

    Normalization: integral over S^2 of (P̄_l^m e^{im phi})^2 equals 1, no
    Condon-Shortley sign.  Stable upward recurrence in l for each m.
    Returns arrays of shape (lmax+1, lmax+1, len(theta)); entries with
    m > l are zero.
    """
    theta = np.asarray(theta, dtype=float)
    ct, st = np.cos(theta), np.sin(theta)
    if np.any(st <= 0.0):
        raise ChartError("colatitude must lie strictly inside (0, pi)")
    p = np.zeros((lmax + 1, lmax + 1, theta.shape[0]))
    dp = np.zeros_like(p)
    p[0, 0] = 1.0 / math.sqrt(4.0 * math.pi)
    for m in range(1, lmax + 1):
        p[m, m] = math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * st * p[m - 1, m - 1]
    for m in range(0, lmax):
        p[m + 1, m] = math.sqrt(2.0 * m + 3.0) * ct * p[m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[l, m] = a * (ct * p[l - 1, m] - b * p[l - 2, m])
    for m in range(0, lmax + 1):
        for l in range(m, lmax + 1):
            if l == 0:
                continue
            c = math.sqrt((2.0 * l + 1.0) * (l * l - m * m) / (2.0 * l - 1.0))
            prev = p[l - 1, m] if l - 1 >= m else 0.0
            dp[l, m] = (l * ct * p[l, m] - c * prev) / st
    return p, dp


def _eval_sphere(basis: EigenBasis, pts: np.ndarray):
    theta, phi = pts[:, 0], pts[:, 1]
    lmax = int(basis.freqs[:, 0].max())
    p, dp = normalized_legendre(lmax, theta)
    d, npts = basis.dim, pts.shape[0]
    vals = np.empty((d, npts))
    grads = np.empty((d, 2, npts))
    sqrt2 = math.sqrt(2.0)
    for j in range(d):
        l, m = int(basis.freqs[j, 0]), int(basis.freqs[j, 1])
        am = abs(m)
        if m == 0:
            vals[j] = p[l, 0]
            grads[j, 0] = dp[l, 0]
            grads[j, 1] = 0.0
        elif m > 0:
            c = np.cos(m * phi)
            vals[j] = sqrt2 * p[l, am] * c
            grads[j, 0] = sqrt2 * dp[l, am] * c
            grads[j, 1] = -sqrt2 * m * p[l, am] * np.sin(m * phi)
        else:
            s = np.sin(am * phi)
            vals[j] = sqrt2 * p[l, am] * s
            grads[j, 0] = sqrt2 * dp[l, am] * s
            grads[j, 1] = sqrt2 * am * p[l, am] * np.cos(am * phi)
    return vals, grads


def eval_basis(basis: EigenBasis, points: np.ndarray):
    """Values (d, P) and chart-covector gradients (d, n, P) at chart points (P, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != basis.model.dim:
        raise InputError(
            f"points have dimension {pts.shape[1]}, model is {basis.model.dim}-dimensional"
        )
    if basis.model.kind == CIRCLE:
        return _eval_circle(basis, pts[:, 0])
    if basis.model.kind == TORUS2:
        return _eval_torus(basis, pts)
    return _eval_sphere(basis, pts)


def g0_matrices(model: ManifoldModel, points: np.ndarray) -> np.ndarray:
    """Reference metric g0 in chart components at each point, shape (P, n, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    p = pts.shape[0]
    if model.kind in (CIRCLE, TORUS2):
        out = np.broadcast_to(np.eye(model.dim), (p, model.dim, model.dim)).copy()
    else:
        out = np.zeros((p, 2, 2))
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = np.sin(pts[:, 0]) ** 2
    return out


def quadrature_grid(model: ManifoldModel, res: int) -> tuple[np.ndarray, np.ndarray]:
    """Chart points (P, n) and weights (P,) integrating dV_{g0} exactly.

    circle/torus: uniform trapezoid grids (exact for trig polynomials of
    degree < res per axis).  sphere: Gauss-Legendre in cos(theta) with res
    nodes crossed with a 2*res trapezoid in phi; exact for the polynomial
    integrands produced by harmonics of degree < res against each other.
    """
    if res < 2:
        raise InputError("grid resolution must be at least 2")
    if model.kind == CIRCLE:
        q = make_quadrature("periodic-trapezoid", res)
        return q.nodes[:, None].copy(), q.weights.copy()
    if model.kind == TORUS2:
        q = make_quadrature("periodic-trapezoid", res)
        x1, x2 = np.meshgrid(q.nodes, q.nodes, indexing="ij")
        pts = np.column_stack([x1.ravel(), x2.ravel()])
        w = np.outer(q.weights, q.weights).ravel()
        return pts, w
    gl = make_quadrature("gauss-legendre", res)
    tp = make_quadrature("periodic-trapezoid", 2 * res)
    theta = np.arccos(gl.nodes[::-1])  # ascending colatitude in (0, pi)
    wth = gl.weights[::-1]
    th, ph = np.meshgrid(theta, tp.nodes, indexing="ij")
    pts = np.column_stack([th.ravel(), ph.ravel()])
    w = np.outer(wth, tp.weights).ravel()
    return pts, w


def cosphere_quadrature(model: ManifoldModel, base_res: int, fiber_res: int) -> CosphereQuadrature:
    """Product quadrature on the unit cosphere bundle S*M.

    Fiber nodes are uniform on the unit g0-cosphere circle (n = 2) or the
    two covectors +-dtheta (n = 1); fiber directions are taken in an
    orthonormal coframe so |xi|_{g0} = 1 exactly.
    """
    if base_res < 4 or (model.dim == 2 and fiber_res < 4):
        raise InputError("cosphere resolutions must be at least 4")
    pts, wb = quadrature_grid(model, base_res)
    if model.dim == 1:
        points = np.repeat(pts, 2, axis=0)
        xis = np.tile(np.array([[1.0], [-1.0]]), (pts.shape[0], 1))
        weights = np.repeat(wb, 2)
        return CosphereQuadrature(points, xis, weights, model)
    alpha = 2.0 * math.pi * np.arange(fiber_res) / fiber_res
    wf = 2.0 * math.pi / fiber_res
    ca, sa = np.cos(alpha), np.sin(alpha)
    pn, fn = pts.shape[0], fiber_res
    points = np.repeat(pts, fn, axis=0)
    xis = np.empty((pn * fn, 2))
    xis[:, 0] = np.tile(ca, pn)
    if model.kind == TORUS2:
        xis[:, 1] = np.tile(sa, pn)
    else:
        # orthonormal coframe (dtheta, sin(theta) dphi): xi_phi = sin(alpha) sin(theta)
        xis[:, 1] = np.tile(sa, pn) * np.repeat(np.sin(pts[:, 0]), fn)
    weights = np.repeat(wb, fn) * wf
    return CosphereQuadrature(points, xis, weights, model)


def fiber_directions(model: ManifoldModel, point: np.ndarray, fiber_res: int):
    """Unit covectors and weights on the cosphere fiber over a single point."""
    point = np.asarray(point, dtype=float).ravel()
    if model.dim == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    alpha = 2.0 * math.pi * np.arange(fiber_res) / fiber_res
    xis = np.column_stack([np.cos(alpha), np.sin(alpha)])
    if model.kind == SPHERE2:
        xis[:, 1] *= math.sin(point[0])
    w = np.full(fiber_res, 2.0 * math.pi / fiber_res)
    return xis, w


def g0_norm_xi(model: ManifoldModel, points: np.ndarray, xis: np.ndarray) -> np.ndarray:
    """|xi|_{g0} for chart covector components at chart points."""
    pts = np.atleast_2d(points)
    xis = np.atleast_2d(xis)
    if model.dim == 1:
        return np.abs(xis[:, 0])
    if model.kind == TORUS2:
        return np.sqrt(xis[:, 0] ** 2 + xis[:, 1] ** 2)
    st = np.sin(pts[:, 0])
    return np.sqrt(xis[:, 0] ** 2 + (xis[:, 1] / st) ** 2)


def _sphere_chart_to_ambient(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    x = np.stack([st * cp, st * sp, ct], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
    e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)  # unit vector along d/dphi
    return x, e_theta, e_phi


def geodesic_flow_sphere(points: np.ndarray, xis: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
    """Great-circle flow G^t on S*S^2 in chart coordinates.

    Accepts arrays of points (P, 2), covectors (P, 2) and times broadcastable
    against P; the computation runs in ambient R^3 so pole crossings along
    the way are harmless.  Raises ChartError only if an *output* point lands
    on a pole.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi = np.atleast_2d(np.asarray(xis, dtype=float))
    t = np.asarray(t, dtype=float)
    theta, phi = pts[:, 0], pts[:, 1]
    st = np.sin(theta)
    if np.any(st <= 0.0):
        raise ChartError("flow input at a pole")
    x, e_th, e_ph = _sphere_chart_to_ambient(theta, phi)
    # velocity dual to xi: v = xi_theta e_theta + (xi_phi / sin theta) e_phi
    v = xi[:, :1] * e_th + (xi[:, 1:2] / st[:, None]) * e_ph
    ct, s_t = np.cos(t), np.sin(t)
    xt = ct[..., None] * x + s_t[..., None] * v
    vt = -s_t[..., None] * x + ct[..., None] * v
    x3 = np.clip(xt[..., 2], -1.0, 1.0)
    if np.any(np.abs(x3) >= 1.0 - 1e-14):
        raise ChartError("flow output at a pole")
    theta_t = np.arccos(x3)
    phi_t = np.mod(np.arctan2(xt[..., 1], xt[..., 0]), 2.0 * math.pi)
    st_t = np.sin(theta_t)
    _, e_th_t, e_ph_t = _sphere_chart_to_ambient(theta_t, phi_t)
    v_th = np.sum(vt * e_th_t, axis=-1)
    v_ph_unit = np.sum(vt * e_ph_t, axis=-1)
    xi_t = np.stack([v_th, v_ph_unit * st_t], axis=-1)
    return np.stack([theta_t, phi_t], axis=-1), xi_t
