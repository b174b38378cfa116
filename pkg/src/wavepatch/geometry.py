"""Curves, boundary panels and curved volume meshes for star-shaped patches.

The patch boundary is a smooth closed curve given by a trigonometric radius
function r(theta) (circle, cosine star, or general Fourier series).  The
boundary carries 16-point Gauss-Legendre panels; the interior carries a
polar-blended mesh of curved triangles:

* a core fan of curved triangles around the origin (affine maps plus a
  w^2-damped bulge toward the first ring, so the Jacobian stays bounded away
  from zero at the center vertex);
* rings of curved quadrilaterals, each split into two triangles, mapped by
  the smooth polar transfinite map;
* the outermost ring subdivided dyadically toward the boundary, where the
  volume density develops a logarithmic profile.

Every element is isoparametric: the exact map is sampled at an order-p
warp-and-blend node set and replaced by its polynomial interpolant, whose
Jacobian feeds the quadrature weights.  Solution data lives on a second copy
of the node family scaled toward the centroid, keeping all density unknowns
strictly inside the patch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg
import scipy.special as sp

from .errors import (DegenerateCurveError, DomainError, NotStarShapedError,
                     PointOutsideMeshError)

NODES_PER_PANEL = 16
DATA_NODE_SCALE = 0.95     # shrink factor of the interior (solution) nodes
_SWEEP = 4096              # samples for regularity / star-shapedness checks


# ----------------------------------------------------------------------
# curves
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SmoothCurve:
    """Closed curve gamma(theta) = r(theta) (cos theta, sin theta) with a
    trigonometric radius r(theta) = sum_m A_m cos(m theta) + B_m sin(m theta).
    theta runs counterclockwise over [0, 2 pi)."""

    cos_coefficients: tuple
    sin_coefficients: tuple
    kind: str = "fourier"

    def __post_init__(self):
        a = tuple(float(c) for c in self.cos_coefficients)
        b = tuple(float(c) for c in self.sin_coefficients)
        if len(a) == 0:
            raise DomainError("radius needs at least the constant Fourier term")
        object.__setattr__(self, "cos_coefficients", a)
        object.__setattr__(self, "sin_coefficients", b)

    @classmethod
    def circle(cls, radius=1.0):
        if radius <= 0:
            raise DomainError("circle radius must be positive")
        return cls((radius,), (), kind="circle")

    @classmethod
    def star(cls, a, k_arms):
        if not (isinstance(k_arms, (int, np.integer)) and k_arms >= 1):
            raise DomainError("k_arms must be a positive integer")
        coeffs = [1.0] + [0.0] * k_arms
        coeffs[k_arms] = float(a)
        return cls(tuple(coeffs), (), kind="star")

    @classmethod
    def fourier(cls, cos_coefficients, sin_coefficients=()):
        return cls(tuple(cos_coefficients), tuple(sin_coefficients),
                   kind="fourier")

    # -- radius and derivatives -------------------------------------------

    def radius(self, theta, order=0):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros_like(theta)
        for m, am in enumerate(self.cos_coefficients):
            if am == 0.0:
                continue
            phase = m * theta + 0.5 * np.pi * order
            out = out + am * float(m) ** order * np.cos(phase)
        for m1, bm in enumerate(self.sin_coefficients):
            m = m1 + 1
            if bm == 0.0:
                continue
            phase = m * theta + 0.5 * np.pi * order
            out = out + bm * float(m) ** order * np.sin(phase)
        return out

    def position(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def derivative1(self, theta):
        theta = np.asarray(theta, dtype=float)
        r, r1 = self.radius(theta), self.radius(theta, 1)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([r1 * c - r * s, r1 * s + r * c], axis=-1)

    def derivative2(self, theta):
        theta = np.asarray(theta, dtype=float)
        r, r1, r2 = (self.radius(theta), self.radius(theta, 1),
                     self.radius(theta, 2))
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([(r2 - r) * c - 2 * r1 * s,
                         (r2 - r) * s + 2 * r1 * c], axis=-1)

    def speed(self, theta):
        return np.linalg.norm(self.derivative1(theta), axis=-1)

    def curvature(self, theta):
        d1 = self.derivative1(theta)
        d2 = self.derivative2(theta)
        sp3 = np.linalg.norm(d1, axis=-1) ** 3
        return (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]) / sp3

    def check_regular(self):
        th = np.linspace(0.0, 2 * np.pi, _SWEEP, endpoint=False)
        if np.min(self.speed(th)) < 1e-12:
            raise DegenerateCurveError(
                "curve parameterization has |dgamma/dtheta| < 1e-12")

    def check_star_shaped(self):
        th = np.linspace(0.0, 2 * np.pi, _SWEEP, endpoint=False)
        if np.min(self.radius(th)) <= 0.0:
            raise NotStarShapedError(
                "radius function is not strictly positive; the domain is not "
                "star-shaped about the origin")

    def length(self, n=4096):
        """Curve length by the trapezoid rule (spectrally accurate on the
        smooth periodic speed)."""
        th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
        return float(np.sum(self.speed(th))) * (2 * np.pi / n)

    def area(self):
        """Enclosed area, exact via Parseval on the radius series."""
        a = np.asarray(self.cos_coefficients)
        b = np.asarray(self.sin_coefficients)
        return float(np.pi * a[0] ** 2 + 0.5 * np.pi * (np.sum(a[1:] ** 2)
                                                        + np.sum(b ** 2)))


# ----------------------------------------------------------------------
# boundary panels
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BoundaryPanels:
    """Composite 16-point Gauss-Legendre discretization of the curve."""

    curve: SmoothCurve
    n_panels: int
    panel_breaks: np.ndarray        # (n_panels+1,) parameter break points
    thetas: np.ndarray              # (N,) node parameters
    positions: np.ndarray           # (N, 2)
    tangents: np.ndarray            # (N, 2) unit, counterclockwise
    normals: np.ndarray             # (N, 2) unit, outward
    curvatures: np.ndarray          # (N,) signed
    speeds: np.ndarray              # (N,) |dgamma/dtheta|
    weights: np.ndarray             # (N,) arclength quadrature weights
    panel_of_node: np.ndarray       # (N,) panel index
    ref_nodes: np.ndarray           # (16,) Gauss-Legendre nodes on [-1, 1]
    ref_weights: np.ndarray         # (16,)

    @property
    def n_nodes(self):
        return self.thetas.size


def panelize(curve, n_panels):
    """Split the curve into equal-parameter panels with 16 Gauss-Legendre
    nodes each, carrying positions, frames, curvature and arclength weights."""
    if not isinstance(curve, SmoothCurve):
        raise DomainError("panelize expects a SmoothCurve")
    if not (isinstance(n_panels, (int, np.integer)) and n_panels >= 4):
        raise DomainError("need at least 4 panels")
    curve.check_regular()

    x, w = np.polynomial.legendre.leggauss(NODES_PER_PANEL)
    breaks = np.linspace(0.0, 2 * np.pi, n_panels + 1)
    h = breaks[1] - breaks[0]
    thetas = (breaks[:-1, None] + 0.5 * h * (x[None, :] + 1.0)).ravel()
    wts = np.tile(0.5 * h * w, n_panels)

    d1 = curve.derivative1(thetas)
    speeds = np.linalg.norm(d1, axis=-1)
    tangents = d1 / speeds[:, None]
    normals = np.stack([tangents[:, 1], -tangents[:, 0]], axis=-1)
    return BoundaryPanels(
        curve=curve, n_panels=int(n_panels), panel_breaks=breaks,
        thetas=thetas, positions=curve.position(thetas), tangents=tangents,
        normals=normals, curvatures=curve.curvature(thetas), speeds=speeds,
        weights=wts * speeds,
        panel_of_node=np.repeat(np.arange(n_panels), NODES_PER_PANEL),
        ref_nodes=x, ref_weights=w)


# ----------------------------------------------------------------------
# reference triangle: nodes, modal basis, derivative operators
# ----------------------------------------------------------------------

def _gauss_lobatto(p):
    """p+1 Gauss-Lobatto-Legendre points on [-1, 1]."""
    c = np.zeros(p + 1)
    c[p] = 1.0
    interior = npleg.legroots(npleg.legder(c))
    return np.concatenate([[-1.0], interior, [1.0]])


def _warp_factor(p, rout):
    lgl = _gauss_lobatto(p)
    req = np.linspace(-1.0, 1.0, p + 1)
    veq = np.stack([npleg.legval(req, np.eye(p + 1)[n]) for n in range(p + 1)],
                   axis=1)                       # (p+1 pts, p+1 modes)
    pmat = np.stack([npleg.legval(rout, np.eye(p + 1)[n])
                     for n in range(p + 1)], axis=0)   # (modes, K)
    lmat = np.linalg.solve(veq.T, pmat)          # Lagrange values (p+1, K)
    warp = (lgl - req) @ lmat
    inner = np.abs(rout) < 1.0 - 1e-10
    sf = 1.0 - (np.where(inner, rout, 0.0)) ** 2
    return np.where(inner, warp / sf, 0.0)


_ALPHA_OPT = (0.0, 0.0, 1.4152, 0.1001, 0.2751, 0.9800, 1.0999, 1.2832,
              1.3648, 1.4773, 1.4959, 1.5743, 1.5770, 1.6223, 1.6258)


def _warp_blend_nodes(p):
    """Warp-and-blend interpolation nodes on the reference triangle
    (0,0)-(1,0)-(0,1), in barycentric-derived (xi, eta) coordinates."""
    alpha = _ALPHA_OPT[p - 1] if p <= len(_ALPHA_OPT) else 5.0 / 3.0
    l1, l2, l3 = [], [], []
    for i in range(p + 1):
        for j in range(p + 1 - i):
            lam3 = i / p
            lam2 = j / p
            l3.append(lam3)
            l2.append(lam2)
            l1.append(1.0 - lam2 - lam3)
    l1, l2, l3 = map(np.asarray, (l1, l2, l3))

    x = -l2 + l3
    y = (-l2 - l3 + 2 * l1) / np.sqrt(3.0)
    blend = (4 * l2 * l3, 4 * l1 * l3, 4 * l1 * l2)
    warpf = (_warp_factor(p, l3 - l2), _warp_factor(p, l1 - l3),
             _warp_factor(p, l2 - l1))
    lam = (l1, l2, l3)
    for k, ang in enumerate([0.0, 2 * np.pi / 3, 4 * np.pi / 3]):
        wk = blend[k] * warpf[k] * (1.0 + (alpha * lam[k]) ** 2)
        x = x + np.cos(ang) * wk
        y = y + np.sin(ang) * wk

    lam1 = (np.sqrt(3.0) * y + 1.0) / 3.0
    lam2 = (-3.0 * x - np.sqrt(3.0) * y + 2.0) / 6.0
    lam3 = (3.0 * x - np.sqrt(3.0) * y + 2.0) / 6.0
    return np.stack([lam2, lam3], axis=-1)     # (xi, eta)


def _jacobi_norm(n, alpha):
    # L2 norm^2 of P_n^(alpha,0) on [-1,1]
    return 2.0 ** (alpha + 1) / (2 * n + alpha + 1)


def _jacobi(n, alpha, x):
    return sp.eval_jacobi(n, alpha, 0.0, x) / np.sqrt(_jacobi_norm(n, alpha))


def _jacobi_deriv(n, alpha, x):
    if n == 0:
        return np.zeros_like(np.asarray(x, dtype=float))
    d = 0.5 * (n + alpha + 1) * sp.eval_jacobi(n - 1, alpha + 1, 1.0, x)
    return d / np.sqrt(_jacobi_norm(n, alpha))


class ReferenceTriangle:
    """Modal/nodal machinery on the reference triangle (0,0)-(1,0)-(0,1).

    Uses the orthonormal collapsed-coordinate (Koornwinder-Dubiner) basis;
    ``geom_nodes`` are the raw warp-and-blend points (with edge nodes, used
    to sample element maps), ``data_nodes`` the same family scaled by
    DATA_NODE_SCALE about the centroid (strictly interior; solution nodes).
    """

    def __init__(self, order):
        if order not in (6, 8):
            raise DomainError("element order must be 6 or 8")
        self.order = p = int(order)
        self.n_nodes = (p + 1) * (p + 2) // 2
        self.geom_nodes = _warp_blend_nodes(p)
        centroid = np.array([1.0 / 3.0, 1.0 / 3.0])
        self.data_nodes = centroid + DATA_NODE_SCALE * (self.geom_nodes
                                                        - centroid)
        self.mode_ids = [(i, j) for i in range(p + 1)
                         for j in range(p + 1 - i)]
        self.v_geom = self.basis_at(self.geom_nodes)
        self.v_data = self.basis_at(self.data_nodes)
        self.vinv_geom = np.linalg.inv(self.v_geom)
        self.vinv_data = np.linalg.inv(self.v_data)
        # Duffy-collapsed tensor Gauss rule (integrates the smooth maps to
        # machine accuracy)
        gx, gw = np.polynomial.legendre.leggauss(2 * p)
        gx = 0.5 * (gx + 1.0)
        gw = 0.5 * gw
        X, Y = np.meshgrid(gx, gx, indexing="ij")
        WX, WY = np.meshgrid(gw, gw, indexing="ij")
        xi = (X * (1.0 - Y)).ravel()
        eta = Y.ravel()
        self.quad_points = np.stack([xi, eta], axis=-1)
        self.quad_weights = (WX * WY * (1.0 - Y)).ravel()

    # -- modal basis -------------------------------------------------------

    def _collapsed(self, pts):
        xi = np.asarray(pts)[..., 0]
        eta = np.asarray(pts)[..., 1]
        r = 2.0 * xi - 1.0
        s = 2.0 * eta - 1.0
        denom = 1.0 - s
        a = np.where(denom > 1e-14, 2.0 * (1.0 + r) / np.where(
            denom > 1e-14, denom, 1.0) - 1.0, -1.0)
        return a, s

    def basis_at(self, pts):
        """Orthonormal basis values; shape (npts, n_modes)."""
        a, b = self._collapsed(pts)
        cols = []
        for (i, j) in self.mode_ids:
            val = (np.sqrt(2.0) * _jacobi(i, 0.0, a)
                   * _jacobi(j, 2.0 * i + 1.0, b) * (1.0 - b) ** i)
            # factor 2: push orthonormality from the bi-unit triangle to the
            # quarter-size reference triangle
            cols.append(2.0 * val)
        return np.stack(cols, axis=-1)

    def basis_grad_at(self, pts):
        """Gradients (d/dxi, d/deta) of the basis; two (npts, n_modes)."""
        a, b = self._collapsed(pts)
        half_b = 0.5 * (1.0 - b)
        dxi_cols, deta_cols = [], []
        for (i, j) in self.mode_ids:
            fa = _jacobi(i, 0.0, a)
            dfa = _jacobi_deriv(i, 0.0, a)
            gb = _jacobi(j, 2.0 * i + 1.0, b)
            dgb = _jacobi_deriv(j, 2.0 * i + 1.0, b)
            pow_im1 = half_b ** (i - 1) if i > 0 else np.zeros_like(b)
            pow_i = half_b ** i
            # d/dr and d/ds on the (-1,1) triangle, collapsed-coordinate
            # chain rule
            dmodedr = dfa * gb
            if i > 0:
                dmodedr = dmodedr * pow_im1
            dmodeds = dfa * (gb * 0.5 * (1.0 + a))
            if i > 0:
                dmodeds = dmodeds * pow_im1
            tmp = dgb * pow_i
            if i > 0:
                tmp = tmp - 0.5 * i * gb * pow_im1
            dmodeds = dmodeds + fa * tmp
            # 2^(i+1/2) restores the (1-b)^i powers from the (0.5(1-b))
            # bookkeeping; one factor 2 per d/dr -> d/dxi chain rule and one
            # from the reference-triangle normalization of the basis itself
            norm = 4.0 * 2.0 ** (i + 0.5)
            dxi_cols.append(norm * dmodedr)
            deta_cols.append(norm * dmodeds)
        return (np.stack(dxi_cols, axis=-1), np.stack(deta_cols, axis=-1))


@lru_cache(maxsize=4)
def reference_triangle(order):
    return ReferenceTriangle(order)


# ----------------------------------------------------------------------
# volume mesh
# ----------------------------------------------------------------------

def _ring_radii(n_rings, n_refinements):
    """Scaled ring boundaries 0 = rho_0 < ... < 1 with the outermost band
    subdivided dyadically toward 1."""
    base = np.linspace(0.0, 1.0, n_rings + 1)
    inner = list(base[:-1])
    lo = base[-2]
    width = 1.0 - lo
    sub = [lo + width * (1.0 - 2.0 ** (-l)) for l in range(1, n_refinements + 1)]
    return np.array(inner + sub + [1.0]), n_refinements


@dataclass(frozen=True)
class VolumeMesh:
    """Curved triangular mesh of the patch interior.

    ``node_*`` arrays hold the (strictly interior) solution nodes of every
    element concatenated; geometry-node positions and the modal coefficients
    of each isoparametric map are kept per element for interpolation and
    adaptive requadrature.
    """

    curve: SmoothCurve
    order: int
    n_rings: int
    n_sectors: int
    n_boundary_refinements: int
    ring_bounds: np.ndarray          # scaled radii of band boundaries
    band_level: np.ndarray           # dyadic refinement level per band
    # per element
    element_modal: np.ndarray        # (E, Np, 2) modal map coefficients
    element_band: np.ndarray         # (E,) band index (-1 for core)
    element_sector: np.ndarray       # (E,)
    element_half: np.ndarray         # (E,) 0=core, 1=outer-diag tri, 2=inner
    element_geom_positions: np.ndarray  # (E, Np, 2)
    # per solution node
    node_positions: np.ndarray       # (N, 2)
    node_weights: np.ndarray         # (N,)
    node_jacobians: np.ndarray       # (N,)
    node_element: np.ndarray         # (N,)

    @property
    def n_elements(self):
        return self.element_modal.shape[0]

    @property
    def n_nodes(self):
        return self.node_positions.shape[0]

    @property
    def reference(self):
        return reference_triangle(self.order)

    # -- map evaluation ----------------------------------------------------

    def map_points(self, element, ref_pts):
        ref = self.reference
        return ref.basis_at(ref_pts) @ self.element_modal[element]

    def map_jacobian(self, element, ref_pts):
        ref = self.reference
        bx, by = ref.basis_grad_at(ref_pts)
        mod = self.element_modal[element]
        dxdxi = bx @ mod
        dxdeta = by @ mod
        return (dxdxi[..., 0] * dxdeta[..., 1]
                - dxdxi[..., 1] * dxdeta[..., 0])

    # -- point location ----------------------------------------------------

    def locate(self, point, tol=1e-10):
        """Element index and reference coordinates containing ``point``."""
        pt = np.asarray(point, dtype=float).reshape(2)
        rad = float(np.hypot(pt[0], pt[1]))
        theta = float(np.arctan2(pt[1], pt[0])) % (2 * np.pi)
        r_curve = float(self.curve.radius(theta))
        rho = rad / r_curve
        if rho > 1.0 + tol:
            raise PointOutsideMeshError("point lies outside the patch")
        rho = min(rho, 1.0)
        dtheta = 2 * np.pi / self.n_sectors
        sector = min(int(theta / dtheta), self.n_sectors - 1)
        bounds = self.ring_bounds
        if rho <= bounds[1]:
            # core fan triangle: Newton on the polynomial map from the
            # affine initial guess
            elem = int(np.flatnonzero((self.element_half == 0)
                                      & (self.element_sector == sector))[0])
            dth = 2 * np.pi / self.n_sectors
            v1 = bounds[1] * self.curve.position(sector * dth)
            v2 = bounds[1] * self.curve.position((sector + 1) * dth)
            xi0 = np.linalg.solve(np.stack([v1, v2], axis=-1), pt)
            xi = self._newton_refine(elem, pt, np.clip(xi0, 0.0, 1.0))
            return elem, xi
        band = int(np.searchsorted(bounds, rho, side="left") - 1)
        band = min(max(band, 1), len(bounds) - 2)
        ra, rb = bounds[band], bounds[band + 1]
        u = (rho - ra) / (rb - ra)
        v = (theta - sector * dtheta) / dtheta
        u = min(max(u, 0.0), 1.0)
        v = min(max(v, 0.0), 1.0)
        if v <= u:
            half, xi, eta = 1, u - v, v       # outer-diagonal triangle
        else:
            half, xi, eta = 2, u, v - u
        mask = ((self.element_band == band) & (self.element_sector == sector)
                & (self.element_half == half))
        elem = int(np.flatnonzero(mask)[0])
        # the closed form inverts the exact polar map; polish against the
        # polynomial isoparametric map
        xi = self._newton_refine(elem, pt, np.array([xi, eta]))
        return elem, xi

    def _newton_refine(self, elem, pt, xi):
        mod = self.element_modal[elem]
        ref = self.reference
        for _ in range(12):
            pts = np.array([xi])
            resid = (ref.basis_at(pts) @ mod)[0] - pt
            if np.linalg.norm(resid) < 1e-13:
                break
            bx, by = ref.basis_grad_at(pts)
            jac = np.stack([(bx @ mod)[0], (by @ mod)[0]], axis=-1)
            xi = xi - np.linalg.solve(jac, resid)
        return xi

    def interpolate(self, nodal_values, point):
        """Evaluate a solution-node field at an interior point."""
        vals = np.asarray(nodal_values)
        if vals.shape[0] != self.n_nodes:
            raise DomainError("nodal_values must have one entry per node")
        elem, xi = self.locate(point)
        ref = self.reference
        row = ref.basis_at(np.array([xi])) @ ref.vinv_data
        idx = np.flatnonzero(self.node_element == elem)
        return complex(row[0] @ vals[idx]) if np.iscomplexobj(vals) \
            else float(row[0] @ vals[idx])


def interpolate(mesh, nodal_values, point):
    """Functional wrapper around :meth:`VolumeMesh.interpolate`."""
    return mesh.interpolate(nodal_values, point)


def _core_map(curve, rho1, t0, t1):
    """Exact core-triangle map: affine part to the two outer vertices plus an
    analytic bulge xi*eta*E(sigma) reproducing the curved edge.

    E(t) = (edge(t) - chord(t)) / (t (1-t)) is analytic (the deviation
    vanishes linearly at both ends) and sigma = eta + (1-xi-eta)/2 extends the
    edge parameter smoothly into the triangle, so the whole map is analytic --
    in particular its Jacobian stays bounded away from zero at the center
    vertex and its polynomial interpolant is tame.
    """
    v1 = rho1 * curve.position(t0)
    v2 = rho1 * curve.position(t1)

    def mapping(ref_pts):
        ref_pts = np.atleast_2d(ref_pts)
        xi, eta = ref_pts[:, 0], ref_pts[:, 1]
        sigma = eta + 0.5 * (1.0 - xi - eta)
        sigma = np.clip(sigma, 1e-9, 1.0 - 1e-9)
        th = t0 + (t1 - t0) * sigma
        edge = rho1 * curve.position(th)
        chord = np.outer(1.0 - sigma, v1) + np.outer(sigma, v2)
        bulge = (edge - chord) / (sigma * (1.0 - sigma))[:, None]
        return (np.outer(xi, v1) + np.outer(eta, v2)
                + (xi * eta)[:, None] * bulge)
    return mapping


def _ring_map(curve, ra, rb, t0, t1, half):
    """Exact map of one half (curved triangle) of a polar ring quad."""
    def mapping(ref_pts):
        ref_pts = np.atleast_2d(ref_pts)
        xi, eta = ref_pts[:, 0], ref_pts[:, 1]
        if half == 1:          # corners (ra,t0), (rb,t0), (rb,t1)
            u = xi + eta
            v = eta
        else:                  # corners (ra,t0), (rb,t1), (ra,t1)
            u = xi
            v = xi + eta
        rho = ra + (rb - ra) * u
        th = t0 + (t1 - t0) * v
        return rho[:, None] * curve.position(th)
    return mapping


def mesh_domain(curve, n_rings, n_sectors, n_boundary_refinements=4, order=8):
    """Curved-triangle mesh of the star-shaped patch bounded by ``curve``.

    Polar rings of curved quads (split in two) around a core fan, with the
    outermost ring dyadically subdivided ``n_boundary_refinements`` times
    toward the boundary.  Element edges on the boundary coincide with the
    panels of ``panelize(curve, n_sectors)``.
    """
    if not isinstance(curve, SmoothCurve):
        raise DomainError("mesh_domain expects a SmoothCurve")
    if not (isinstance(n_rings, (int, np.integer)) and n_rings >= 2):
        raise DomainError("need n_rings >= 2")
    if not (isinstance(n_sectors, (int, np.integer)) and n_sectors >= 4
            and n_sectors % 4 == 0):
        raise DomainError("n_sectors must be a positive multiple of 4")
    if not (isinstance(n_boundary_refinements, (int, np.integer))
            and n_boundary_refinements >= 0):
        raise DomainError("n_boundary_refinements must be >= 0")
    curve.check_regular()
    curve.check_star_shaped()

    ref = reference_triangle(order)
    bounds, _ = _ring_radii(int(n_rings), int(n_boundary_refinements))
    n_bands = len(bounds) - 1
    band_level = np.zeros(n_bands, dtype=int)
    if n_boundary_refinements > 0:
        for b in range(n_rings - 1, n_bands):
            band_level[b] = min(b - (n_rings - 2), int(n_boundary_refinements))
    dtheta = 2 * np.pi / n_sectors

    maps = []
    bands, sectors, halves = [], [], []
    for j in range(n_sectors):
        t0, t1 = j * dtheta, (j + 1) * dtheta
        maps.append(_core_map(curve, bounds[1], t0, t1))
        bands.append(-1)
        sectors.append(j)
        halves.append(0)
    for b in range(1, n_bands):
        ra, rb = bounds[b], bounds[b + 1]
        for j in range(n_sectors):
            t0, t1 = j * dtheta, (j + 1) * dtheta
            for half in (1, 2):
                maps.append(_ring_map(curve, ra, rb, t0, t1, half))
                bands.append(b)
                sectors.append(j)
                halves.append(half)

    n_elem = len(maps)
    npn = ref.n_nodes
    element_modal = np.empty((n_elem, npn, 2))
    element_geom = np.empty((n_elem, npn, 2))
    node_pos = np.empty((n_elem * npn, 2))
    node_w = np.empty(n_elem * npn)
    node_jac = np.empty(n_elem * npn)
    node_elem = np.repeat(np.arange(n_elem), npn)

    data_basis = ref.basis_at(ref.data_nodes)
    quad_basis = ref.basis_at(ref.quad_points)
    gx_q, gy_q = ref.basis_grad_at(ref.quad_points)
    bx_d, by_d = ref.basis_grad_at(ref.data_nodes)
    lagrange_data_at_quad = quad_basis @ ref.vinv_data   # (Q, Np)

    for e, mapping in enumerate(maps):
        geom = mapping(ref.geom_nodes)
        element_geom[e] = geom
        modal = ref.vinv_geom @ geom
        element_modal[e] = modal
        # Jacobian at the volume quadrature points of the polynomial map
        dxdxi = gx_q @ modal
        dxdeta = gy_q @ modal
        jq = (dxdxi[:, 0] * dxdeta[:, 1] - dxdxi[:, 1] * dxdeta[:, 0])
        if np.min(jq) <= 0.0:
            raise DomainError(
                f"element {e} has a non-positive map Jacobian; the mesh "
                "resolution does not resolve the curve")
        sl = slice(e * npn, (e + 1) * npn)
        node_pos[sl] = data_basis @ modal
        node_w[sl] = lagrange_data_at_quad.T @ (jq * ref.quad_weights)
        ddxi = bx_d @ modal
        ddeta = by_d @ modal
        jd = ddxi[:, 0] * ddeta[:, 1] - ddxi[:, 1] * ddeta[:, 0]
        if np.min(jd) <= 0.0:
            raise DomainError(
                f"element {e} has a non-positive Jacobian at a solution node")
        node_jac[sl] = jd

    return VolumeMesh(
        curve=curve, order=int(order), n_rings=int(n_rings),
        n_sectors=int(n_sectors),
        n_boundary_refinements=int(n_boundary_refinements),
        ring_bounds=bounds, band_level=band_level,
        element_modal=element_modal,
        element_band=np.asarray(bands), element_sector=np.asarray(sectors),
        element_half=np.asarray(halves),
        element_geom_positions=element_geom,
        node_positions=node_pos, node_weights=node_w,
        node_jacobians=node_jac, node_element=node_elem)
