"""Singular and near-singular quadrature on curved triangles and panels.

Far interactions use the plain node weights.  Near and self interactions are
re-integrated adaptively:

* volume elements: recursive reference-triangle subdivision with a
  dyadic-Duffy transform about the target's preimage when the target touches
  the element (the radial Duffy factor removes 1/r; dyadic grading toward the
  singular vertex handles the log);
* boundary panels: adaptive 1D subdivision, with the touching panel split at
  the target parameter; Cauchy principal values use the symmetric-limit
  pairing u -> {theta* - u, theta* + u} whose odd singular parts cancel.

Correction matrices store replacement entries for the near source sets; the
boundary Hilbert transform is assembled from the same machinery.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .errors import (DimensionMismatchError, DomainError, NonConvergenceError,
                     PointOutsideMeshError)
from .geometry import BoundaryPanels, VolumeMesh

NEAR_RADIUS_FACTOR = 1.5
REFINED_RADIUS_FACTOR = 6.0
ADAPT_TOL = 1e-11
MAX_LEVELS = 30
_DUFFY_LEVELS = 16

SINGULARITY_CLASSES = ("smooth", "log", "one_over_r", "cauchy_pv")


@dataclass(frozen=True)
class KernelHandle:
    """A kernel with a declared singularity class.

    ``evaluator`` signature depends on the source domain:
      volume: evaluator(target_xy (2,), source_xy (m, 2)) -> (m,) complex
      panel:  evaluator(target_xy (2,), curve, thetas (m,)) -> (m,) complex
    The values exclude the integration measure (Jacobian/arclength), which
    the quadrature supplies.
    """

    evaluator: object
    singularity: str
    source_kind: str = "volume"          # "volume" | "panel"
    target_kind: str = "volume"
    name: str = ""

    def __post_init__(self):
        if self.singularity not in SINGULARITY_CLASSES:
            raise DomainError(f"unknown singularity class {self.singularity}")
        if self.source_kind not in ("volume", "panel"):
            raise DomainError("source_kind must be 'volume' or 'panel'")


def probe_singularity(kernel, curve_or_point, direction=None, base=1e-3):
    """Classify |K| growth by a factor-of-2 shrinking-separation probe."""
    if kernel.source_kind == "volume":
        center = np.asarray(curve_or_point, dtype=float)
        d = np.asarray(direction if direction is not None else (1.0, 0.7))
        d = d / np.linalg.norm(d)
        seps = base * 2.0 ** -np.arange(6)
        vals = np.array([abs(kernel.evaluator(center, (center + s * d)[None, :])[0])
                         for s in seps])
    else:
        curve = curve_or_point
        t0 = 0.37
        target = curve.position(t0)
        seps = base * 2.0 ** -np.arange(6)
        vals = np.array([abs(kernel.evaluator(target, curve,
                                              np.array([t0 + s]))[0])
                         for s in seps])
    ratios = vals[1:] / vals[:-1]
    r = np.median(ratios)
    if r > 1.7:
        # 1/r doubles; cot-type PV kernels do too
        return "cauchy_pv" if kernel.source_kind == "panel" and \
            kernel.singularity == "cauchy_pv" else "one_over_r"
    growth = vals[-1] - vals[0]
    if r > 1.005 and growth > 0:
        return "log"
    return "smooth"


@dataclass(frozen=True)
class CorrectionMatrix:
    """Replacement entries for near interactions.

    ``matrix[i, j]`` replaces the plain product ``w_j K(r_i, r_j)`` for every
    source ``j`` in the near set ``near_sets[i]``; sources outside the near
    set keep the plain smooth rule.
    """

    matrix: scipy.sparse.csr_matrix
    near_sets: tuple                     # tuple of int arrays, one per target

    @property
    def n_targets(self):
        return self.matrix.shape[0]

    def corrected_apply(self, plain_matrix, density):
        """Dense reference apply: plain rule with near entries replaced."""
        plain = np.array(plain_matrix, dtype=complex, copy=True)
        for i, js in enumerate(self.near_sets):
            plain[i, js] = 0.0
        return plain @ density + self.matrix @ density


# ----------------------------------------------------------------------
# element adapters
# ----------------------------------------------------------------------

class SimplexElement:
    """Flat triangle given by its three vertices (affine map)."""

    def __init__(self, v0, v1, v2):
        self.verts = np.array([v0, v1, v2], dtype=float)
        self._a = np.stack([self.verts[1] - self.verts[0],
                            self.verts[2] - self.verts[0]])
        self._jac = abs(np.linalg.det(self._a))
        if self._jac < 1e-300:
            raise DomainError("degenerate triangle")
        e = self.verts - np.roll(self.verts, 1, axis=0)
        self.diameter = float(np.max(np.linalg.norm(e, axis=1)))

    def map_points(self, ref_pts):
        ref_pts = np.atleast_2d(ref_pts)
        return self.verts[0] + ref_pts @ self._a

    def map_jacobian(self, ref_pts):
        return np.full(np.atleast_2d(ref_pts).shape[0], self._jac)

    def tangent_matrix(self, ref_pt):
        return self._a.T

    def invert(self, point):
        rhs = np.asarray(point, dtype=float) - self.verts[0]
        xi = np.linalg.solve(self._a.T, rhs)
        if xi[0] > -1e-12 and xi[1] > -1e-12 and xi.sum() < 1 + 1e-12:
            return xi
        return None


class MeshElement:
    """View of one curved element of a :class:`VolumeMesh`."""

    def __init__(self, mesh, index):
        self.mesh = mesh
        self.index = int(index)
        geom = mesh.element_geom_positions[self.index]
        self.diameter = float(np.max(
            np.linalg.norm(geom[:, None, :] - geom[None, :, :], axis=-1)))

    def map_points(self, ref_pts):
        return self.mesh.map_points(self.index, np.atleast_2d(ref_pts))

    def map_jacobian(self, ref_pts):
        return self.mesh.map_jacobian(self.index, np.atleast_2d(ref_pts))

    def tangent_matrix(self, ref_pt):
        g1, g2 = self.mesh.reference.basis_grad_at(
            np.asarray(ref_pt, dtype=float)[None, :])
        modal = self.mesh.element_modal[self.index]
        return np.stack([(g1 @ modal)[0], (g2 @ modal)[0]], axis=1)

    def invert(self, point):
        try:
            elem, xi = self.mesh.locate(point)
        except PointOutsideMeshError:
            return None
        if elem != self.index:
            # locate() picks one element on shared edges; accept the preimage
            # if it also lies in this element
            xi = self.mesh._newton_refine(self.index, np.asarray(point, float),
                                          np.array([1 / 3, 1 / 3]))
            back = self.map_points(xi[None, :])[0]
            if np.linalg.norm(back - np.asarray(point, float)) > 1e-9 * \
                    max(1.0, self.diameter):
                return None
        if xi[0] > -1e-9 and xi[1] > -1e-9 and xi.sum() < 1 + 1e-9:
            return np.clip(xi, 0.0, 1.0)
        return None


# ----------------------------------------------------------------------
# reference rules
# ----------------------------------------------------------------------

def _duffy_rule(n):
    gx, gw = np.polynomial.legendre.leggauss(n)
    gx = 0.5 * (gx + 1.0)
    gw = 0.5 * gw
    X, Y = np.meshgrid(gx, gx, indexing="ij")
    WX, WY = np.meshgrid(gw, gw, indexing="ij")
    pts = np.stack([(X * (1.0 - Y)).ravel(), Y.ravel()], axis=-1)
    wts = (WX * WY * (1.0 - Y)).ravel()
    return pts, wts


_BASE_PTS, _BASE_WTS = _duffy_rule(12)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_ANG_X, _ANG_W = np.polynomial.legendre.leggauss(24)


def _children(verts):
    m01 = 0.5 * (verts[0] + verts[1])
    m12 = 0.5 * (verts[1] + verts[2])
    m02 = 0.5 * (verts[0] + verts[2])
    return (np.array([verts[0], m01, m02]), np.array([m01, verts[1], m12]),
            np.array([m02, m12, verts[2]]), np.array([m01, m12, m02]))


def _signed_area2(verts):
    return ((verts[1][0] - verts[0][0]) * (verts[2][1] - verts[0][1])
            - (verts[1][1] - verts[0][1]) * (verts[2][0] - verts[0][0]))


# ----------------------------------------------------------------------
# near-singular volume integration
# ----------------------------------------------------------------------

def near_singular_integrate(kernel, element, density_fn, target,
                            tol=ADAPT_TOL, max_levels=MAX_LEVELS):
    """Integral of K(target, .) * density over a curved element.

    ``density_fn(ref_pts) -> (n,) or (n, k)`` is expressed in reference
    coordinates; the result has the density's trailing shape.  Absolute
    tolerance ``tol`` scaled by element diameter and sup|density|.
    """
    if kernel.source_kind != "volume":
        raise DomainError("near_singular_integrate needs a volume kernel")
    target = np.asarray(target, dtype=float).reshape(2)

    probe = density_fn(_BASE_PTS)
    dens_scale = float(np.max(np.abs(probe))) if probe.size else 1.0
    scale = max(element.diameter * max(dens_scale, 1e-30), 1e-300)
    tol_abs = tol * scale

    xi_sing = element.invert(target)

    def piece(ref_pts, ref_wts):
        phys = element.map_points(ref_pts)
        jac = element.map_jacobian(ref_pts)
        kern = kernel.evaluator(target, phys)
        dens = density_fn(ref_pts)
        w = ref_wts * jac * kern
        return w @ dens if dens.ndim > 1 else np.sum(w * dens)

    def rule_on(verts):
        a2 = _signed_area2(verts)
        pts = verts[0] + _BASE_PTS @ np.stack([verts[1] - verts[0],
                                               verts[2] - verts[0]])
        return piece(pts, _BASE_WTS * abs(a2))

    def duffy_near_vertex(verts):
        """Dyadically graded Duffy integration of the triangle ``verts``
        whose singular point is verts[0].

        Radially the s-factor cancels the kernel growth and dyadic levels
        absorb any leftover log; in the angular direction the factor behaves
        like 1/|d(T)| with |d(T)|^2 = |B|^2 (T - T0)^2 + h^2 in the metric of
        the map tangent, so a sinh substitution about the in-metric foot T0
        resolves the peak regardless of the triangle's aspect ratio.
        """
        p0, p1, p2 = verts
        a2 = abs(_signed_area2(verts))
        jmat = element.tangent_matrix(p0)
        avec = jmat @ (p1 - p0)
        bvec = jmat @ (p2 - p1)
        b2 = bvec @ bvec
        if b2 < 1e-24 * max(avec @ avec, 1e-30):
            t_nodes = 0.5 * (_ANG_X + 1.0)
            t_wts = 0.5 * _ANG_W
        else:
            t0 = -(avec @ bvec) / b2
            hb = np.sqrt(max(avec @ avec - (avec @ bvec) ** 2 / b2, 0.0)
                         / b2)
            hb = max(hb, 1e-14)
            pieces = ([(0.0, t0), (t0, 1.0)] if 0.0 < t0 < 1.0
                      else [(0.0, 1.0)])
            tn, tw = [], []
            for (ta, tb) in pieces:
                if tb - ta < 1e-12:
                    continue
                ua = np.arcsinh((ta - t0) / hb)
                ub = np.arcsinh((tb - t0) / hb)
                v = 0.5 * (ub - ua) * (_ANG_X + 1.0) + ua
                tn.append(t0 + hb * np.sinh(v))
                tw.append(0.5 * (ub - ua) * _ANG_W * hb * np.cosh(v))
            t_nodes = np.concatenate(tn)
            t_wts = np.concatenate(tw)
        total = 0.0
        hi = 1.0
        for lev in range(_DUFFY_LEVELS):
            lo = 0.0 if lev == _DUFFY_LEVELS - 1 else hi / 2.0
            s = lo + (hi - lo) * 0.5 * (_GL_X + 1.0)
            ws = 0.5 * (hi - lo) * _GL_W
            S, T = np.meshgrid(s, t_nodes, indexing="ij")
            WS, WT = np.meshgrid(ws, t_wts, indexing="ij")
            dirs = ((1.0 - T)[..., None] * (p1 - p0)
                    + T[..., None] * (p2 - p0))
            pts = p0 + S[..., None] * dirs
            wts = (WS * WT * S * a2).ravel()
            total = total + piece(pts.reshape(-1, 2), wts)
            hi = lo
            if hi == 0.0:
                break
        return total

    # leaves whose closure contains the singular preimage are finished with
    # the graded Duffy rule; everything else is adaptive subdivision
    def contains(verts, xi):
        a2 = _signed_area2(verts)
        b0 = _signed_area2(np.array([xi, verts[1], verts[2]])) / a2
        b1 = _signed_area2(np.array([verts[0], xi, verts[2]])) / a2
        b2 = _signed_area2(np.array([verts[0], verts[1], xi])) / a2
        return min(b0, b1, b2) > -1e-10

    def singular_rule(verts):
        out = 0.0
        for k in range(3):
            sub = np.array([xi_sing, verts[k], verts[(k + 1) % 3]])
            if abs(_signed_area2(sub)) < 1e-14:
                continue
            out = out + duffy_near_vertex(sub)
        return out

    root = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    total = 0.0
    stack = [(root, 0)]
    while stack:
        verts, level = stack.pop()
        if xi_sing is not None and contains(verts, xi_sing):
            # handing the whole leaf to the graded rule at once avoids
            # sibling leaves that carry the singularity on their boundary
            total = total + singular_rule(verts)
            continue
        coarse = rule_on(verts)
        kids = _children(verts)
        fine = sum(rule_on(c) for c in kids)
        err = np.max(np.abs(coarse - fine))
        frac = abs(_signed_area2(verts))      # 2 * ref area; root = 1
        if err <= tol_abs * max(frac, 1e-3) or err <= 1e-16 * scale:
            total = total + fine
        elif level >= max_levels:
            raise NonConvergenceError(
                f"adaptive volume quadrature stalled at level {level} "
                f"(err {err:.2e}, tol {tol_abs:.2e})")
        else:
            stack.extend((c, level + 1) for c in kids)
    return total


# ----------------------------------------------------------------------
# volume correction matrices
# ----------------------------------------------------------------------

def _element_diameters(mesh):
    geom = mesh.element_geom_positions
    return np.max(np.linalg.norm(geom[:, :, None, :] - geom[:, None, :, :],
                                 axis=-1), axis=(1, 2))


def _element_centers(mesh):
    return np.mean(mesh.element_geom_positions, axis=1)


def build_volume_corrections(kernel, mesh, targets,
                             near_radius_factor=NEAR_RADIUS_FACTOR,
                             tol=ADAPT_TOL, max_levels=MAX_LEVELS):
    """Near-interaction replacement entries against mesh solution nodes.

    ``targets`` is an (n, 2) array.  Elements within
    ``near_radius_factor * diameter`` of a target are re-integrated
    adaptively; the rest is left to the upsampled smooth rule.
    """
    if kernel.source_kind != "volume":
        raise DomainError("volume corrections need a volume kernel")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    ref = mesh.reference
    diam = _element_diameters(mesh)
    centers = _element_centers(mesh)
    npe = ref.n_nodes

    def basis_fn(ref_pts):
        return ref.basis_at(ref_pts) @ ref.vinv_data

    rows, cols, vals = [], [], []
    near_sets = []
    for i, tgt in enumerate(targets):
        dist = np.linalg.norm(centers - tgt[None, :], axis=1)
        near = np.flatnonzero(dist <= near_radius_factor * diam + 0.5 * diam)
        cols_i = []
        for e in near:
            el = MeshElement(mesh, e)
            node_idx = np.arange(e * npe, (e + 1) * npe)
            if kernel.singularity == "smooth":
                entries = (mesh.node_weights[node_idx]
                           * kernel.evaluator(tgt,
                                              mesh.node_positions[node_idx]))
            else:
                try:
                    entries = near_singular_integrate(
                        kernel, el, basis_fn, tgt, tol=tol,
                        max_levels=max_levels)
                except NonConvergenceError as exc:
                    raise NonConvergenceError(
                        f"target {i}, element {e}: {exc}") from exc
            rows.extend([i] * npe)
            cols.extend(node_idx.tolist())
            vals.extend(np.asarray(entries, dtype=complex).tolist())
            cols_i.append(node_idx)
        near_sets.append(np.concatenate(cols_i) if cols_i
                         else np.empty(0, dtype=int))
    mat = scipy.sparse.csr_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)),
        shape=(targets.shape[0], mesh.n_nodes))
    return CorrectionMatrix(matrix=mat, near_sets=tuple(near_sets))


_UPSAMPLE_CACHE = {}


def upsampled_rule(mesh):
    """Refined one-shot rule on every element.

    Returns ``(positions, weights, transfer)`` with shapes (E, q, 2),
    (E, q) and (q, nodes-per-element); ``transfer`` carries solution-node
    values to the refined nodes.  The far field is summed on this rule
    because the solution-node rule alone converges only at first order
    just outside the adaptive correction zone.
    """
    key = id(mesh)
    hit = _UPSAMPLE_CACHE.get(key)
    if hit is not None and hit[0]() is mesh:
        return hit[1]
    ref = mesh.reference
    basis = ref.basis_at(_BASE_PTS)
    transfer = basis @ ref.vinv_data
    g1, g2 = ref.basis_grad_at(_BASE_PTS)
    modal = mesh.element_modal
    pos = np.einsum("qm,emd->eqd", basis, modal)
    t1 = np.einsum("qm,emd->eqd", g1, modal)
    t2 = np.einsum("qm,emd->eqd", g2, modal)
    jac = t1[..., 0] * t2[..., 1] - t1[..., 1] * t2[..., 0]
    data = (pos, jac * _BASE_WTS[None, :], transfer)
    _UPSAMPLE_CACHE[key] = (weakref.ref(mesh), data)
    return data


def smooth_volume_apply(kernel, mesh, targets, density, exclude=None):
    """Far-field sum on the upsampled rule; ``exclude[i]`` = solution-node
    indices whose elements are dropped for target i (those covered by a
    correction matrix)."""
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    pos, wts, transfer = upsampled_rule(mesh)
    npe = mesh.reference.n_nodes
    q = transfer.shape[0]
    dens = np.asarray(density).reshape(mesh.n_elements, npe)
    dens_up = np.einsum("qn,en->eq", transfer, dens)
    flat_pos = pos.reshape(-1, 2)
    flat_contrib = (wts * dens_up).reshape(-1)
    out = np.empty(targets.shape[0], dtype=complex)
    for i, tgt in enumerate(targets):
        contrib = flat_contrib * kernel.evaluator(tgt, flat_pos)
        if exclude is not None and len(exclude[i]):
            els = np.unique(np.asarray(exclude[i]) // npe)
            contrib[(els[:, None] * q
                     + np.arange(q)[None, :]).ravel()] = 0.0
        out[i] = contrib.sum()
    return out


# ----------------------------------------------------------------------
# boundary (panel) quadrature
# ----------------------------------------------------------------------

def _panel_basis_matrix(panels, thetas, panel_index):
    """Lagrange basis (on the panel's 16 reference nodes) at ``thetas``."""
    a = panels.panel_breaks[panel_index]
    b = panels.panel_breaks[panel_index + 1]
    x = 2.0 * (np.asarray(thetas) - a) / (b - a) - 1.0
    ref = panels.ref_nodes
    n = ref.size
    V = np.polynomial.legendre.legvander(ref, n - 1)
    P = np.polynomial.legendre.legvander(x, n - 1)
    return np.linalg.solve(V.T, P.T).T         # (len(x), 16)


def _gl_on(a, b):
    return (a + 0.5 * (b - a) * (_GL_X + 1.0), 0.5 * (b - a) * _GL_W)


def _panel_integrate(kernel, panels, panel_index, target, tol, max_levels,
                     theta_star=None):
    """Adaptive integral of kernel x (each Lagrange basis) over one panel.

    ``theta_star``: parameter of the target on this panel (None if off);
    for log kernels the interval is graded dyadically toward it, for
    cauchy_pv the symmetric-limit pairing around it is used.
    """
    curve = panels.curve
    a = panels.panel_breaks[panel_index]
    b = panels.panel_breaks[panel_index + 1]

    def piece(th, wth):
        kern = kernel.evaluator(target, curve, th)
        speed = curve.speed(th)
        basis = _panel_basis_matrix(panels, th, panel_index)
        return (wth * speed * kern) @ basis

    def adaptive(lo, hi, level=0):
        x1, w1 = _gl_on(lo, hi)
        coarse = piece(x1, w1)
        mid = 0.5 * (lo + hi)
        xa, wa = _gl_on(lo, mid)
        xb, wb = _gl_on(mid, hi)
        fine = piece(xa, wa) + piece(xb, wb)
        if np.max(np.abs(fine - coarse)) <= tol * max(hi - lo, 1e-3):
            return fine
        if level >= max_levels:
            raise NonConvergenceError(
                f"adaptive panel quadrature stalled on panel {panel_index}")
        return adaptive(lo, mid, level + 1) + adaptive(mid, hi, level + 1)

    if theta_star is None:
        return adaptive(a, b)

    ts = float(theta_star)
    if kernel.singularity == "cauchy_pv":
        # symmetric-limit principal value: pair theta* +/- u.  The paired
        # sum is analytic across u = 0, so it is integrated without any
        # grading -- clustering nodes at u = 0 would amplify the roundoff
        # of the position differences through the 1/u kernel growth.
        r = min(ts - a, b - ts)
        total = 0.0
        if r > 1e-14:
            # Single Gauss panel on [0, r]: the paired integrand varies at
            # the panel scale (>= 2 r), so 16 points resolve it, and keeping
            # the nodes away from u = 0 avoids magnifying the roundoff of
            # the position differences through the 1/u kernel growth.
            u, wu = _gl_on(0.0, r)
            total = total + piece(ts + u, wu) + piece(ts - u, wu)
        # leftover one-sided regular piece
        if ts - a < b - ts - 1e-14:
            total = total + adaptive(ts + r, b)
        elif b - ts < ts - a - 1e-14:
            total = total + adaptive(a, ts - r)
        return total

    # weak (log / 1/r-integrable) singularity: dyadic grading toward theta*
    def graded(side_lo, side_hi, toward_lo):
        width = side_hi - side_lo
        if width < 1e-14:
            return 0.0
        total = 0.0
        hi = width
        for lev in range(_DUFFY_LEVELS - 1):
            lo = hi / 2.0
            if toward_lo:
                x, w = _gl_on(side_lo + lo, side_lo + hi)
            else:
                x, w = _gl_on(side_hi - hi, side_hi - lo)
            total = total + piece(x, w)
            hi = lo
        # innermost sliver [0, hi]: quartic substitution clusters nodes at
        # the endpoint so log and inverse-square-root growth integrate to
        # near machine accuracy
        s, ws = _gl_on(0.0, 1.0)
        u = hi * s ** 4
        wu = ws * 4.0 * hi * s ** 3
        if toward_lo:
            total = total + piece(side_lo + u, wu)
        else:
            total = total + piece(side_hi - u, wu)
        return total

    return graded(ts, b, True) + graded(a, ts, False)


def build_boundary_corrections(kernel, panels, targets, target_thetas=None,
                               near_radius_factor=NEAR_RADIUS_FACTOR,
                               refined_radius_factor=REFINED_RADIUS_FACTOR,
                               tol=ADAPT_TOL, max_levels=MAX_LEVELS):
    """Near-interaction replacement entries against panel nodes.

    ``targets``: (n, 2) points.  ``target_thetas``: optional (n,) curve
    parameters for targets lying on the curve (enables the touching-panel
    split and PV pairing).  Panels between the adaptive zone and
    ``refined_radius_factor`` diameters get a one-shot composite rule.
    """
    if kernel.source_kind != "panel":
        raise DomainError("boundary corrections need a panel kernel")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    curve = panels.curve
    n_p = panels.n_panels
    npp = panels.ref_nodes.size

    # panel chord diameters and centers
    ends = curve.position(panels.panel_breaks)
    centers = 0.5 * (ends[:-1] + ends[1:])
    diam = np.array([
        np.max(np.linalg.norm(
            panels.positions[p * npp:(p + 1) * npp]
            - panels.positions[p * npp:(p + 1) * npp][:, None], axis=-1))
        for p in range(n_p)])
    diam = np.maximum(diam, np.linalg.norm(ends[1:] - ends[:-1], axis=1))

    def oneshot(p, tgt):
        a, b = panels.panel_breaks[p], panels.panel_breaks[p + 1]
        total = 0.0
        for k in range(4):
            lo = a + 0.25 * k * (b - a)
            hi = lo + 0.25 * (b - a)
            th, w = _gl_on(lo, hi)
            kern = kernel.evaluator(tgt, curve, th)
            total = total + (w * curve.speed(th) * kern) @ \
                _panel_basis_matrix(panels, th, p)
        return total

    rows, cols, vals = [], [], []
    near_sets = []
    for i, tgt in enumerate(targets):
        th_i = None if target_thetas is None else float(target_thetas[i])
        dist = np.linalg.norm(centers - tgt[None, :], axis=1)
        near = dist <= near_radius_factor * diam + 0.5 * diam
        refined = (~near) & (dist <= refined_radius_factor * diam)
        cols_i = []
        for p in np.flatnonzero(near | refined):
            node_idx = np.arange(p * npp, (p + 1) * npp)
            theta_star = None
            if th_i is not None:
                lo, hi = panels.panel_breaks[p], panels.panel_breaks[p + 1]
                for shift in (-2 * np.pi, 0.0, 2 * np.pi):
                    if lo - 1e-13 <= th_i + shift <= hi + 1e-13:
                        theta_star = min(max(th_i + shift, lo), hi)
                        break
            if kernel.singularity == "smooth" and theta_star is None:
                entries = (panels.weights[node_idx]
                           * kernel.evaluator(tgt, curve,
                                              panels.thetas[node_idx]))
            elif refined[p] and theta_star is None:
                entries = oneshot(p, tgt)
            else:
                try:
                    entries = _panel_integrate(kernel, panels, p, tgt,
                                               tol, max_levels, theta_star)
                except NonConvergenceError as exc:
                    raise NonConvergenceError(
                        f"target {i}, panel {p}: {exc}") from exc
            rows.extend([i] * npp)
            cols.extend(node_idx.tolist())
            vals.extend(np.asarray(entries, dtype=complex).tolist())
            cols_i.append(node_idx)
        near_sets.append(np.concatenate(cols_i) if cols_i
                         else np.empty(0, dtype=int))
    mat = scipy.sparse.csr_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)),
        shape=(targets.shape[0], panels.n_nodes))
    return CorrectionMatrix(matrix=mat, near_sets=tuple(near_sets))


# ----------------------------------------------------------------------
# boundary Hilbert transform
# ----------------------------------------------------------------------

def tangential_hilbert_kernel():
    """K_H(r, r') = (1/pi) (r - r') . tau(r') / |r - r'|^2 (PV class)."""
    def evaluator(target, curve, thetas):
        src = curve.position(thetas)
        d1 = curve.derivative1(thetas)
        tau = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
        d = target[None, :] - src
        r2 = np.sum(d * d, axis=-1)
        # coincident points only appear as later-discarded diagonal samples
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.sum(d * tau, axis=-1) / (np.pi * r2)
        return np.where(r2 == 0.0, 0.0, out)
    return KernelHandle(evaluator=evaluator, singularity="cauchy_pv",
                        source_kind="panel", target_kind="panel",
                        name="tangential_hilbert")


def hilbert_matrix(panels, tol=ADAPT_TOL):
    """PV-corrected dense matrix of the boundary Hilbert transform at the
    panel nodes."""
    kernel = tangential_hilbert_kernel()
    corr = build_boundary_corrections(kernel, panels, panels.positions,
                                      target_thetas=panels.thetas, tol=tol)
    plain = np.empty((panels.n_nodes, panels.n_nodes))
    for i in range(panels.n_nodes):
        plain[i] = (panels.weights
                    * kernel.evaluator(panels.positions[i], panels.curve,
                                       panels.thetas)).real
        plain[i, i] = 0.0
    for i, js in enumerate(corr.near_sets):
        plain[i, js] = 0.0
    return plain + corr.matrix.toarray().real


def hilbert_convolve(panels, boundary_kernel_values, h_matrix=None):
    """Discrete composition L * K_H: multiply a boundary operator matrix by
    the PV-corrected Hilbert transform matrix."""
    L = np.asarray(boundary_kernel_values)
    if L.ndim != 2 or L.shape[1] != panels.n_nodes:
        raise DimensionMismatchError(
            f"operator shape {L.shape} incompatible with "
            f"{panels.n_nodes} panel nodes")
    if h_matrix is None:
        h_matrix = hilbert_matrix(panels)
    return L @ h_matrix
