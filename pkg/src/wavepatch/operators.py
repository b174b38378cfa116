"""Coupled surface-volume / surface-boundary block systems.

Assembles the discrete second-kind integral equations for a compact
surface patch carrying a lower-order condition (stretched membrane with
a Neumann or Dirichlet rim condition, or a thin elastic plate with a
free edge) embedded in an unbounded higher-order far surface.

The unknowns are a surface-volume density ``mu`` on the patch interior
and one or two surface-boundary densities ``eta_i`` on its rim.  Each
block has an explicit identity part (kept separate from all quadrature)
plus a compact integral part; the volume-volume integral kernel is
radial, the boundary-coupled kernels carry directional derivatives in
the rim's local frame.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import legendre as npleg

from .errors import (DimensionMismatchError, DomainError, NotApplicableError,
                     UnsupportedKernelError)
from .greens import (GreensEvaluator, SurfaceOperatorSpec, build_dispersion,
                     contract_directional)
from .quadrature import (KernelHandle, build_boundary_corrections,
                         build_volume_corrections, hilbert_matrix,
                         upsampled_rule)

__all__ = [
    "PROBLEM_CLASSES", "ProblemSpec", "DensityVector", "RhsData",
    "BlockOperator", "assemble", "incident_rhs",
    "exterior_relation_residual", "capillary_kernels", "flexural_kernels",
    "tangential_derivative_matrix",
]

PROBLEM_CLASSES = ("capillary_neumann", "capillary_dirichlet",
                   "flexural_free")

HILBERT_DERIVATIVE_MODES = ("combined", "by_parts", "disabled")


# ----------------------------------------------------------------------
# problem specification
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ProblemSpec:
    """Physical coefficients of one scattering problem.

    ``capillary_*``: far-surface operator p(z) = beta z + gamma,
    one rim density.  ``flexural_free``: p(z) = alpha z^2 [+ beta z]
    + gamma with Poisson ratio ``nu``, two rim densities.
    ``gamma`` may be complex (dissipative far surface).
    """

    problem_class: str
    gamma: complex
    beta: float | None = None
    alpha: float | None = None
    nu: float | None = None

    def __post_init__(self):
        if self.problem_class not in PROBLEM_CLASSES:
            raise DomainError(
                f"unknown problem class {self.problem_class!r}; "
                f"expected one of {PROBLEM_CLASSES}")
        object.__setattr__(self, "gamma", complex(self.gamma))
        if self.problem_class in ("capillary_neumann",
                                  "capillary_dirichlet"):
            if self.beta is None or not (float(self.beta) > 0.0):
                raise DomainError("capillary problems need beta > 0")
            if self.alpha is not None:
                raise DomainError("capillary problems take no alpha")
            if self.nu is not None:
                raise DomainError("capillary problems take no nu")
        else:
            if self.alpha is None or not (float(self.alpha) > 0.0):
                raise DomainError("flexural problems need alpha > 0")
            if self.beta is not None and float(self.beta) < 0.0:
                raise DomainError("flexural beta must be >= 0 when given")
            if self.nu is None or not (0.0 < float(self.nu) <= 0.5):
                raise DomainError("flexural problems need nu in (0, 0.5]")

    @property
    def is_flexural(self):
        return self.problem_class == "flexural_free"

    @property
    def n_boundary_unknowns(self):
        return 2 if self.is_flexural else 1

    @property
    def lam(self):
        if not self.is_flexural:
            return None
        return (1.0 + self.nu) / 2.0

    def surface_spec(self):
        """Far-surface operator polynomial for the dispersion machinery."""
        if self.is_flexural:
            if self.beta:
                return SurfaceOperatorSpec(
                    coefficients=(self.gamma, self.beta, self.alpha), d_p=2)
            return SurfaceOperatorSpec.flexural(alpha=self.alpha,
                                                gamma=self.gamma)
        return SurfaceOperatorSpec.capillary(beta=self.beta,
                                             gamma=self.gamma)

    @property
    def volume_gs_coefficient(self):
        """Coefficient of G_S in the volume ansatz kernel.

        Chosen so the ansatz kernel's symbol is a nonnegative multiple
        of the dispersion symbol: (|gamma| - gamma)/2 for the membrane
        family, -gamma/2 for the plate family.
        """
        if self.is_flexural:
            return -self.gamma / 2.0
        return (abs(self.gamma) - self.gamma) / 2.0

    @property
    def identity_values(self):
        """Explicit identity parts (T_0, T_i) of the block system.

        Derived from the one-sided trace limits of the printed kernels:
        half of each measured exterior-minus-interior jump.
        """
        if self.problem_class == "capillary_neumann":
            return (0.5, -0.5)
        if self.problem_class == "capillary_dirichlet":
            return (0.5, +0.5)
        a = float(self.alpha)
        return (0.5, -1.0 / (2.0 * a), +1.0 / (2.0 * a))


# ----------------------------------------------------------------------
# density / right-hand-side containers
# ----------------------------------------------------------------------

@dataclass
class DensityVector:
    """Solution layout: volume density plus rim densities."""

    volume: np.ndarray
    boundary: tuple

    @classmethod
    def split(cls, x, n_volume, n_boundary, m):
        x = np.asarray(x)
        if x.size != n_volume + m * n_boundary:
            raise DimensionMismatchError(
                f"vector length {x.size} != {n_volume} + {m}*{n_boundary}")
        parts = tuple(x[n_volume + k * n_boundary:
                        n_volume + (k + 1) * n_boundary]
                      for k in range(m))
        return cls(volume=x[:n_volume], boundary=parts)

    def concat(self):
        return np.concatenate((self.volume,) + tuple(self.boundary))


@dataclass
class RhsData:
    """Forcing layout matching :class:`DensityVector`."""

    volume: np.ndarray
    boundary: tuple

    def concat(self):
        return np.concatenate((self.volume,) + tuple(self.boundary))


# ----------------------------------------------------------------------
# tangential differentiation on panels
# ----------------------------------------------------------------------

def tangential_derivative_matrix(panels):
    """Arclength derivative, spectral per panel on the Gauss nodes."""
    k = panels.ref_nodes.size
    vand = npleg.legvander(panels.ref_nodes, k - 1)
    deriv = np.empty((k, k))
    for col in range(k):
        coeff = np.zeros(k)
        coeff[col] = 1.0
        deriv[:, col] = npleg.legval(panels.ref_nodes, npleg.legder(coeff))
    d_ref = deriv @ np.linalg.inv(vand)
    out = np.zeros((panels.n_nodes, panels.n_nodes))
    for p in range(panels.n_panels):
        a = panels.panel_breaks[p]
        b = panels.panel_breaks[p + 1]
        sl = slice(p * k, (p + 1) * k)
        scale = (2.0 / (b - a)) / panels.speeds[sl]
        out[sl, sl] = scale[:, None] * d_ref
    return out


# ----------------------------------------------------------------------
# kernel bodies (vectorized over sources; frames passed explicitly)
# ----------------------------------------------------------------------

def _safe_r(d):
    """Distances with exact coincidences masked to a dummy value."""
    r = np.linalg.norm(d, axis=-1)
    mask = r == 0.0
    if np.any(mask):
        r = np.where(mask, 1.0, r)
    return r, mask


def _zero_masked(values, mask):
    if np.any(mask):
        values = np.where(mask, 0.0, values)
    return values


class _Kernels:
    """All integral-kernel bodies for one problem + evaluator pair.

    Methods take the target point, source points and whatever local
    frames the kernel needs, and return values without the integration
    measure.  ``lam_chain`` scales the Hilbert-convolution couplings;
    the regularizing derivative-of-Hilbert subtraction always uses the
    physical lambda so the combined kernel stays principal-value
    integrable.
    """

    def __init__(self, problem, evaluator, lam_chain=None):
        self.problem = problem
        self.ev = evaluator
        self.c_v = problem.volume_gs_coefficient
        if problem.is_flexural:
            self.lam_phys = problem.lam
            self.lam_chain = (problem.lam if lam_chain is None
                              else float(lam_chain))
            self.nu = float(problem.nu)
        else:
            self.lam_phys = self.lam_chain = self.nu = None

    # -- radial tables ------------------------------------------------

    def _gs(self, r, m):
        return self.ev.radial_g_table("GS", r, m)

    def _gphi(self, r, m):
        return self.ev.radial_g_table("Gphi", r, m)

    def _ansatz_table(self, r, m):
        """Radial derivative stack of c_v * G_S + G_phi."""
        return self.c_v * self._gs(r, m) + self._gphi(r, m)

    # -- volume-volume radial kernel -----------------------------------

    def k00_radial(self, r):
        """Volume self-interaction kernel; -1/(4 pi r) at short range."""
        p = self.problem
        f0 = self.ev.radial_table(0, r)[0]
        f1 = self.ev.radial_table(1, r)[0]
        if p.is_flexural:
            val = (-p.gamma / 4.0) * f1 + 0.25 * f0 \
                - (p.alpha / 4.0) * self.ev.radial_table(4, r)[0]
            if p.beta:
                val = val - (p.beta / 4.0) * self.ev.radial_table(2, r)[0]
            return val
        g = p.gamma
        return ((abs(g) - g) / 4.0) * f1 + ((1.0 - abs(g)) / 4.0) * f0 \
            - (p.beta / 4.0) * self.ev.radial_table(2, r)[0]

    def ansatz_radial(self, r):
        """Integral part of the volume ansatz kernel c_v G_S + G_phi."""
        return self.c_v * self._gs(r, 0)[0] + self._gphi(r, 0)[0]

    # -- target-frame trace combinations --------------------------------

    def _m1(self, table, d, tf):
        n = np.broadcast_to(tf["normal"], d.shape)
        t = np.broadcast_to(tf["tangent"], d.shape)
        return 0.5 * (contract_directional(table, d, [n, n])
                      + self.nu * contract_directional(table, d, [t, t]))

    def _m1_src(self, table, d, tf, sdir):
        n = np.broadcast_to(tf["normal"], d.shape)
        t = np.broadcast_to(tf["tangent"], d.shape)
        return 0.5 * (contract_directional(table, d, [n, n, sdir])
                      + self.nu * contract_directional(table, d,
                                                       [t, t, sdir]))

    def _m2(self, table, d, tf):
        n = np.broadcast_to(tf["normal"], d.shape)
        t = np.broadcast_to(tf["tangent"], d.shape)
        kap = tf["curvature"]
        return 0.5 * (contract_directional(table, d, [n, n, n])
                      + (2.0 - self.nu) * contract_directional(
                          table, d, [n, t, t])
                      + (1.0 - self.nu) * kap * (
                          contract_directional(table, d, [t, t])
                          - contract_directional(table, d, [n, n])))

    def _m2_src(self, table, d, tf, sdir):
        n = np.broadcast_to(tf["normal"], d.shape)
        t = np.broadcast_to(tf["tangent"], d.shape)
        kap = tf["curvature"]
        return 0.5 * (contract_directional(table, d, [n, n, n, sdir])
                      + (2.0 - self.nu) * contract_directional(
                          table, d, [n, t, t, sdir])
                      + (1.0 - self.nu) * kap * (
                          contract_directional(table, d, [t, t, sdir])
                          - contract_directional(table, d, [n, n, sdir])))

    @staticmethod
    def _hilbert_kernel_s_derivative(d, r, tgt_tangent, src_tangent):
        """d/ds_target of (1/pi) (r-r') . tau' / |r-r'|^2."""
        tt = np.broadcast_to(tgt_tangent, d.shape)
        dot_tt = np.einsum("ij,ij->i", tt, src_tangent)
        d_dot_src = np.einsum("ij,ij->i", d, src_tangent)
        d_dot_tgt = np.einsum("ij,ij->i", d, tt)
        return (dot_tt / r ** 2
                - 2.0 * d_dot_src * d_dot_tgt / r ** 4) / math.pi

    # -- named kernels ---------------------------------------------------
    # Source frames enter through ``sn``/``st`` = outward normal and unit
    # tangent rows at the sources; source-side derivatives use the
    # negated direction with the target-based radial tables.

    def value(self, name, target, src, sn=None, st=None, tf=None):
        d = np.atleast_2d(target) - src
        r, mask = _safe_r(d)
        out = self._dispatch(name, d, r, sn, st, tf)
        return _zero_masked(out, mask)

    def _dispatch(self, name, d, r, sn, st, tf):
        p = self.problem
        beta = p.beta
        if name == "k00":
            return self.k00_radial(r)
        if name == "ansatz":
            return self.ansatz_radial(r)

        if not p.is_flexural:
            if name == "B":
                if p.problem_class == "capillary_neumann":
                    return beta * self._gs(r, 0)[0]
                return beta * contract_directional(self._gs(r, 1), d, [-sn])
            if name == "K01":
                if p.problem_class == "capillary_neumann":
                    return (beta / 2.0) * self._gs(r, 0)[0] \
                        - beta * self._gphi(r, 0)[0]
                return (beta / 2.0) * contract_directional(
                    self._gs(r, 1), d, [-sn]) - beta * contract_directional(
                    self._gphi(r, 1), d, [-sn])
            if name == "K10":
                if p.problem_class == "capillary_neumann":
                    n = np.broadcast_to(tf["normal"], d.shape)
                    return 0.5 * contract_directional(
                        self._ansatz_table(r, 1), d, [n])
                return 0.5 * self.ansatz_radial(r)
            if name == "K11":
                if p.problem_class == "capillary_neumann":
                    n = np.broadcast_to(tf["normal"], d.shape)
                    return (beta / 2.0) * contract_directional(
                        self._gs(r, 1), d, [n])
                return (beta / 2.0) * contract_directional(
                    self._gs(r, 1), d, [-sn])
            raise UnsupportedKernelError(
                f"unknown capillary kernel {name!r}")

        lam_c = self.lam_chain
        if name == "B1":
            return contract_directional(self._gs(r, 1), d, [-sn])
        if name == "B1_chain":
            return lam_c * contract_directional(self._gs(r, 1), d, [-st])
        if name == "B2":
            return self._gs(r, 0)[0]
        if name == "K01":
            return 0.5 * contract_directional(self._gs(r, 1), d, [-sn]) \
                - contract_directional(self._gphi(r, 1), d, [-sn])
        if name == "K01_chain":
            return lam_c * (
                0.5 * contract_directional(self._gs(r, 1), d, [-st])
                - contract_directional(self._gphi(r, 1), d, [-st]))
        if name == "K02":
            return 0.5 * self._gs(r, 0)[0] - self._gphi(r, 0)[0]
        if name == "K10":
            return self._m1(self._ansatz_table(r, 2), d, tf)
        if name == "K20":
            return self._m2(self._ansatz_table(r, 3), d, tf)
        if name == "K11":
            return self._m1_src(self._gs(r, 3), d, tf, -sn)
        if name == "K11_chain":
            return lam_c * self._m1_src(self._gs(r, 3), d, tf, -st)
        if name == "K12":
            return self._m1(self._gs(r, 2), d, tf)
        if name == "K21":
            direct = self._m2_src(self._gs(r, 4), d, tf, -sn)
            reg = self._hilbert_kernel_s_derivative(d, r, tf["tangent"], st)
            return direct - (self.lam_phys / (2.0 * self.problem.alpha)) * reg
        if name == "K21_chain":
            return lam_c * self._m2_src(self._gs(r, 4), d, tf, -st)
        if name == "K22":
            return self._m2(self._gs(r, 3), d, tf)
        raise UnsupportedKernelError(f"unknown flexural kernel {name!r}")


# singularity classes used for the adaptive near-field treatment
_CAP_CLASSES = {
    "k00": "one_over_r",
    "ansatz": "log",
    "B": "log",
    "K01": "log",
    "K10": "one_over_r",
    "K11": "log",
}
_FLEX_CLASSES = {
    "k00": "one_over_r",
    "ansatz": "log",
    "B1": "log", "B1_chain": "log", "B2": "log",
    "K01": "log", "K01_chain": "log", "K02": "log",
    "K10": "log", "K20": "one_over_r",
    "K11": "cauchy_pv", "K11_chain": "cauchy_pv",
    "K12": "log",
    "K21": "cauchy_pv", "K21_chain": "cauchy_pv",
    "K22": "cauchy_pv",
}


def _singularity_class(problem, name):
    table = _FLEX_CLASSES if problem.is_flexural else _CAP_CLASSES
    return table[name]


# ----------------------------------------------------------------------
# pointwise kernel API
# ----------------------------------------------------------------------

def _frame_rows(frame):
    if frame is None:
        return None, None
    n = np.asarray(frame["normal"], dtype=float).reshape(1, 2)
    t = np.asarray(frame["tangent"], dtype=float).reshape(1, 2)
    return n, t


def _pointwise(problem, evaluator, name, r, rp, target_frame, source_frame,
               lam_chain=None):
    r = np.asarray(r, dtype=float).reshape(2)
    rp = np.asarray(rp, dtype=float).reshape(2)
    if np.all(r == rp):
        raise DomainError("kernel evaluation requires r != r'")
    kernels = _Kernels(problem, evaluator, lam_chain=lam_chain)
    sn, st = _frame_rows(source_frame)
    tf = None
    if target_frame is not None:
        tf = {"normal": np.asarray(target_frame["normal"], float),
              "tangent": np.asarray(target_frame["tangent"], float),
              "curvature": float(target_frame.get("curvature", 0.0))}
    out = kernels.value(name, r, rp.reshape(1, 2), sn=sn, st=st, tf=tf)
    return complex(out[0])


def capillary_kernels(problem, evaluator, which, r, rp, *,
                      target_frame=None, source_frame=None):
    """Pointwise membrane-family kernel values.

    ``which``: "V" (integral part of the volume ansatz kernel), "B",
    "K00", "K01", "K10" or "K11".  Frames are dicts with "normal",
    "tangent" and optionally "curvature" entries.
    """
    if problem.is_flexural:
        raise DomainError("capillary_kernels needs a capillary problem")
    name = {"V": "ansatz", "K00": "k00"}.get(which, which)
    if name not in _CAP_CLASSES:
        raise UnsupportedKernelError(f"unknown capillary kernel {which!r}")
    return _pointwise(problem, evaluator, name, r, rp, target_frame,
                      source_frame)


def flexural_kernels(problem, evaluator, which, r, rp, *,
                     target_frame=None, source_frame=None,
                     hilbert_derivative="combined", part="direct"):
    """Pointwise plate-family kernel values.

    ``which``: "V", "B1", "B2", "K00".."K22".  ``part="chain_left"``
    returns the left factor of a Hilbert-convolution coupling (including
    its lambda weight); ``part="direct"`` returns the non-convolution
    part.  For "K21" the direct part is the combined kernel whose
    derivative-of-Hilbert subtraction makes it principal-value
    integrable; it is unavailable with ``hilbert_derivative="disabled"``.
    """
    if not problem.is_flexural:
        raise DomainError("flexural_kernels needs a flexural problem")
    if hilbert_derivative not in HILBERT_DERIVATIVE_MODES:
        raise DomainError(
            f"unknown hilbert_derivative mode {hilbert_derivative!r}")
    name = {"V": "ansatz", "K00": "k00"}.get(which, which)
    if part == "chain_left":
        name = name + "_chain"
    elif part != "direct":
        raise DomainError("part must be 'direct' or 'chain_left'")
    if name not in _FLEX_CLASSES:
        raise UnsupportedKernelError(
            f"unknown flexural kernel {which!r} (part {part!r})")
    if name == "K21" and hilbert_derivative == "disabled":
        raise UnsupportedKernelError(
            "the shear-row kernel needs the derivative-of-Hilbert "
            "subtraction; enable 'combined' or 'by_parts'")
    return _pointwise(problem, evaluator, name, r, rp, target_frame,
                      source_frame)


# ----------------------------------------------------------------------
# assembled block operator
# ----------------------------------------------------------------------

class BlockOperator:
    """Discrete system: identity diagonal plus dense integral blocks.

    ``matrices[(i, j)]`` is the integral part coupling density ``j`` to
    equation ``i`` (0 = volume, 1.. = rim).  The identity values are
    stored separately and only enter in :meth:`apply` / :meth:`dense`.
    """

    def __init__(self, problem, n_volume, n_boundary, identity, matrices):
        self.problem = problem
        self.n_volume = int(n_volume)
        self.n_boundary = int(n_boundary)
        self.identity = tuple(identity)
        self.matrices = matrices

    @property
    def n_unknowns(self):
        return 1 + self.problem.n_boundary_unknowns

    @property
    def n_total(self):
        return self.n_volume + self.problem.n_boundary_unknowns \
            * self.n_boundary

    def _block_slices(self):
        out = [slice(0, self.n_volume)]
        for k in range(self.problem.n_boundary_unknowns):
            start = self.n_volume + k * self.n_boundary
            out.append(slice(start, start + self.n_boundary))
        return out

    def apply(self, x):
        x = np.asarray(x)
        if x.shape != (self.n_total,):
            raise DimensionMismatchError(
                f"expected vector of length {self.n_total}")
        slices = self._block_slices()
        parts = [x[s] for s in slices]
        out = np.zeros(self.n_total, dtype=complex)
        for i in range(self.n_unknowns):
            acc = self.identity[i] * parts[i]
            for j in range(self.n_unknowns):
                acc = acc + self.matrices[(i, j)] @ parts[j]
            out[slices[i]] = acc
        return out

    def dense(self):
        big = np.zeros((self.n_total, self.n_total), dtype=complex)
        slices = self._block_slices()
        for i in range(self.n_unknowns):
            for j in range(self.n_unknowns):
                big[slices[i], slices[j]] = self.matrices[(i, j)]
            d = slices[i]
            big[d, d] += self.identity[i] * np.eye(d.stop - d.start)
        return big


# ----------------------------------------------------------------------
# assembly helpers
# ----------------------------------------------------------------------

class _TargetFrameLookup:
    """Recover a rim node's local frame from its coordinates.

    The correction builders pass targets back into kernel evaluators as
    bare points; rim-target kernels need the node's frame, so assembly
    keys the frames by exact coordinates with a nearest-node fallback.
    """

    def __init__(self, panels):
        self.positions = panels.positions
        self.frames = [
            {"normal": panels.normals[i], "tangent": panels.tangents[i],
             "curvature": panels.curvatures[i]}
            for i in range(panels.n_nodes)]
        self._by_key = {self.positions[i].tobytes(): i
                        for i in range(panels.n_nodes)}

    def __call__(self, target_xy):
        idx = self._by_key.get(np.asarray(target_xy, float).tobytes())
        if idx is None:
            dist = np.linalg.norm(self.positions - target_xy, axis=1)
            idx = int(np.argmin(dist))
            if dist[idx] > 1e-12:
                raise DomainError("target is not a rim node")
        return self.frames[idx]


def _curve_source_frames(curve, thetas):
    d1 = curve.derivative1(np.atleast_1d(thetas))
    speed = np.linalg.norm(d1, axis=1)
    st = d1 / speed[:, None]
    sn = np.stack([st[:, 1], -st[:, 0]], axis=1)
    return sn, st


class _PiecewiseChebTables:
    """Piecewise-Chebyshev acceleration of the radial kernel tables.

    Duck-types the two table methods of the Green's-function evaluator.
    Each requested table row is fitted as a function of log r over
    [r_lo, r_hi] with its known inverse-power growth factored out, the
    fit is validated against the direct evaluator at random radii, and
    radii outside the fitted range (or any table whose validation
    fails) fall back to the direct evaluator.  The direct tables spend
    most of their time in extended-precision special-function series,
    so this turns the all-pairs kernel sweeps of assembly from the
    dominant cost into a minor one without changing any result beyond
    the validated 1e-12 relative level.
    """

    _PIECES = 24
    _DEGREE = 30
    _REL_TOL = 5e-12

    def __init__(self, evaluator, r_lo, r_hi):
        if not (0.0 < r_lo < r_hi):
            raise DomainError("need 0 < r_lo < r_hi for table fitting")
        self.ev = evaluator
        self.u_lo = math.log(r_lo)
        self.u_hi = math.log(r_hi)
        self._fits = {}

    # -- fitting -----------------------------------------------------

    def _fit(self, key, sample, powers):
        n_rows = len(powers)
        pieces, deg = self._PIECES, self._DEGREE
        edges = np.linspace(self.u_lo, self.u_hi, pieces + 1)
        xk = np.cos(np.pi * (2.0 * np.arange(deg + 1) + 1.0)
                    / (2.0 * (deg + 1)))
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        u_nodes = mid[:, None] + half[:, None] * xk[None, :]
        r_nodes = np.exp(u_nodes.reshape(-1))
        tab = sample(r_nodes) * r_nodes[None, :] ** powers[:, None]
        tab = tab.reshape(n_rows, pieces, deg + 1)
        coeffs = np.empty((pieces, deg + 1, n_rows), dtype=complex)
        for p in range(pieces):
            coeffs[p] = npcheb.chebfit(xk, tab[:, p, :].T, deg)
        entry = (coeffs, edges, powers)

        rng = np.random.default_rng(1234)
        u_val = rng.uniform(self.u_lo, self.u_hi, 257)
        r_val = np.exp(u_val)
        exact = sample(r_val) * r_val[None, :] ** powers[:, None]
        approx = np.empty_like(exact)
        self._eval_entry(entry, r_val, approx)
        approx *= r_val[None, :] ** powers[:, None]
        scale = np.maximum(np.max(np.abs(exact), axis=1, keepdims=True),
                           1e-30)
        if np.max(np.abs(approx - exact) / scale) > self._REL_TOL:
            entry = None
        self._fits[key] = entry
        return entry

    @staticmethod
    def _eval_entry(entry, r, out):
        coeffs, edges, powers = entry
        pieces = len(edges) - 1
        u = np.log(r)
        idx = np.clip(np.searchsorted(edges, u, side="right") - 1,
                      0, pieces - 1)
        order = np.argsort(idx, kind="stable")
        bounds = np.searchsorted(idx[order], np.arange(pieces + 1))
        for p in range(pieces):
            sel = order[bounds[p]:bounds[p + 1]]
            if not sel.size:
                continue
            x = (2.0 * u[sel] - (edges[p] + edges[p + 1])) \
                / (edges[p + 1] - edges[p])
            vals = npcheb.chebval(x, coeffs[p])
            out[:, sel] = vals / r[sel][None, :] ** powers[:, None]

    def _dispatch(self, key, sample, powers, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        entry = self._fits[key] if key in self._fits \
            else self._fit(key, sample, powers)
        if entry is None:
            return sample(r)
        out = np.empty((len(powers), r.size), dtype=complex)
        inside = (r >= math.exp(self.u_lo)) & (r <= math.exp(self.u_hi))
        if inside.all():
            self._eval_entry(entry, r, out)
            return out
        tmp = np.empty((len(powers), int(inside.sum())), dtype=complex)
        self._eval_entry(entry, r[inside], tmp)
        out[:, inside] = tmp
        out[:, ~inside] = sample(r[~inside])
        return out

    # -- evaluator protocol -------------------------------------------

    def radial_table(self, s, r, kmax=0):
        powers = np.arange(kmax + 1) + 1.0
        return self._dispatch(("f", int(s), int(kmax)),
                              lambda rr: self.ev.radial_table(s, rr, kmax),
                              powers, r)

    def radial_g_table(self, which, r, mmax):
        powers = 2.0 * np.arange(mmax + 1) + 1.0
        return self._dispatch(("g", which, int(mmax)),
                              lambda rr: self.ev.radial_g_table(which, rr,
                                                                mmax),
                              powers, r)


def _geometry_digest(*arrays):
    h = hashlib.sha1()
    for a in arrays:
        h.update(np.ascontiguousarray(np.asarray(a)).tobytes())
    return h.digest()


# near-field requadrature entries are deterministic in (kernel, geometry,
# tolerance) and by far the most expensive part of assembly, so repeated
# assemblies of the same discretization (parameter studies, convergence
# sweeps, the fast-apply accuracy checks) reuse them
_CORRECTION_CACHE = {}
_HILBERT_CACHE = {}


def _cached_hilbert_matrix(panels):
    key = _geometry_digest(panels.positions, panels.weights, panels.thetas)
    hit = _HILBERT_CACHE.get(key)
    if hit is None:
        hit = hilbert_matrix(panels)
        _HILBERT_CACHE[key] = hit
    return hit


def _panel_source_handle(kernels, problem, name, frame_lookup=None):
    """KernelHandle for a panel-source kernel (volume or rim targets)."""
    if problem.is_flexural:
        needs_tf = name in ("K11", "K12", "K21", "K22",
                            "K11_chain", "K21_chain")
    else:
        needs_tf = (problem.problem_class == "capillary_neumann"
                    and name == "K11")

    def evaluator(target_xy, curve, thetas):
        thetas = np.atleast_1d(thetas)
        src = curve.position(thetas)
        sn, st = _curve_source_frames(curve, thetas)
        tf = frame_lookup(target_xy) if needs_tf else None
        return kernels.value(name, np.asarray(target_xy, float), src,
                             sn=sn, st=st, tf=tf)

    return KernelHandle(evaluator=evaluator,
                        singularity=_singularity_class(problem, name),
                        source_kind="panel", target_kind="point",
                        name=name)


def _volume_source_handle(kernels, problem, name, frame_lookup=None):
    """KernelHandle for a volume-source kernel."""
    def evaluator(target_xy, source_xy):
        source_xy = np.atleast_2d(source_xy)
        tf = frame_lookup(target_xy) if frame_lookup is not None else None
        return kernels.value(name, np.asarray(target_xy, float), source_xy,
                             tf=tf)

    return KernelHandle(evaluator=evaluator,
                        singularity=_singularity_class(problem, name),
                        source_kind="volume", target_kind="point",
                        name=name)


def _volume_far_matrix(kernel, mesh, targets, exclude):
    """Dense far-field block on the upsampled volume rule."""
    pos, wts, transfer = upsampled_rule(mesh)
    n_e, q = wts.shape
    npe = mesh.reference.n_nodes
    flat_pos = pos.reshape(-1, 2)
    out = np.zeros((len(targets), n_e * npe), dtype=complex)
    for i, tgt in enumerate(targets):
        vals = (kernel.evaluator(tgt, flat_pos)
                * wts.reshape(-1)).reshape(n_e, q)
        if exclude is not None and len(exclude[i]):
            vals[np.unique(np.asarray(exclude[i]) // npe)] = 0.0
        out[i] = (vals @ transfer).reshape(-1)
    return out


def _materialize_boundary_block(handle, panels, targets, target_thetas,
                                tol, cache_key=None):
    """Dense block for a panel-source kernel at the given targets."""
    corr = _CORRECTION_CACHE.get(cache_key)
    if corr is None:
        corr = build_boundary_corrections(handle, panels, targets,
                                          target_thetas=target_thetas,
                                          tol=tol)
        if cache_key is not None:
            _CORRECTION_CACHE[cache_key] = corr
    block = np.empty((len(targets), panels.n_nodes), dtype=complex)
    for i, tgt in enumerate(targets):
        block[i] = handle.evaluator(tgt, panels.curve, panels.thetas) \
            * panels.weights
        near = corr.near_sets[i]
        if len(near):
            block[i, near] = 0.0
    return block + corr.matrix.toarray()


def _materialize_volume_block(handle, mesh, targets, tol, cache_key=None):
    corr = _CORRECTION_CACHE.get(cache_key)
    if corr is None:
        corr = build_volume_corrections(handle, mesh, targets, tol=tol)
        if cache_key is not None:
            _CORRECTION_CACHE[cache_key] = corr
    block = _volume_far_matrix(handle, mesh, targets, corr.near_sets)
    return block + corr.matrix.toarray()


def _check_geometry(mesh, panels):
    if mesh.curve is panels.curve:
        return
    probe = np.linspace(0.0, 2.0 * math.pi, 7)[:-1]
    if not np.allclose(mesh.curve.position(probe),
                       panels.curve.position(probe), atol=1e-12):
        raise DimensionMismatchError(
            "volume mesh and rim panels discretize different curves")


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

def assemble(problem, mesh, panels, *, quad_tol=1e-11,
             hilbert_derivative="combined", lam_override=None,
             hilbert_matrix_override=None, pfft=None, _fast_tables=True):
    """Assemble the block system for one problem on one discretization.

    ``hilbert_derivative`` selects how the derivative-of-Hilbert factor
    in the plate shear row is realized: "combined" (default) folds its
    kernel derivative into the row's regularized kernel; "by_parts"
    moves the arclength derivative onto the density, adding the
    commutator with the Hilbert matrix; "disabled" refuses to assemble
    a plate problem.  ``lam_override`` rescales the Hilbert-convolution
    couplings (test hook); ``pfft`` optionally carries far-field
    acceleration parameters consumed by the fast-apply path.
    """
    if hilbert_derivative not in HILBERT_DERIVATIVE_MODES:
        raise DomainError(
            f"unknown hilbert_derivative mode {hilbert_derivative!r}")
    if problem.is_flexural and hilbert_derivative == "disabled":
        raise UnsupportedKernelError(
            "plate assembly needs the derivative-of-Hilbert term; "
            "choose 'combined' or 'by_parts'")
    _check_geometry(mesh, panels)

    evaluator = GreensEvaluator(build_dispersion(problem.surface_spec()))
    kernels = _Kernels(problem, evaluator, lam_chain=lam_override)
    nv, nb = mesh.n_nodes, panels.n_nodes
    m = problem.n_boundary_unknowns
    frame_lookup = _TargetFrameLookup(panels)
    vol_targets = mesh.node_positions
    rim_targets = panels.positions
    rim_thetas = panels.thetas

    if problem.is_flexural:
        if hilbert_matrix_override is not None:
            h_mat = np.asarray(hilbert_matrix_override)
            if h_mat.shape != (nb, nb):
                raise DimensionMismatchError(
                    "hilbert_matrix_override has the wrong shape")
        else:
            h_mat = hilbert_matrix(panels)

    def rim_block(name):
        handle = _panel_source_handle(kernels, problem, name, frame_lookup)
        return _materialize_boundary_block(handle, panels, rim_targets,
                                           rim_thetas, quad_tol)

    def volume_target_block(name):
        handle = _panel_source_handle(kernels, problem, name)
        return _materialize_boundary_block(handle, panels, vol_targets,
                                           None, quad_tol)

    def volume_source_block(name, targets, with_frames):
        handle = _volume_source_handle(
            kernels, problem, name, frame_lookup if with_frames else None)
        return _materialize_volume_block(handle, mesh, targets, quad_tol)

    matrices = {
        (0, 0): volume_source_block("k00", vol_targets, False),
    }

    if not problem.is_flexural:
        matrices[(0, 1)] = volume_target_block("K01")
        matrices[(1, 0)] = volume_source_block(
            "K10", rim_targets,
            problem.problem_class == "capillary_neumann")
        matrices[(1, 1)] = rim_block("K11")
    else:
        matrices[(0, 1)] = volume_target_block("K01") \
            + volume_target_block("K01_chain") @ h_mat
        matrices[(0, 2)] = volume_target_block("K02")
        matrices[(1, 0)] = volume_source_block("K10", rim_targets, True)
        matrices[(2, 0)] = volume_source_block("K20", rim_targets, True)
        matrices[(1, 1)] = rim_block("K11") + rim_block("K11_chain") @ h_mat
        matrices[(1, 2)] = rim_block("K12")
        k21 = rim_block("K21") + rim_block("K21_chain") @ h_mat
        if hilbert_derivative == "by_parts":
            d_s = tangential_derivative_matrix(panels)
            k21 = k21 + (kernels.lam_phys / (2.0 * problem.alpha)) \
                * (d_s @ h_mat - h_mat @ d_s)
        matrices[(2, 1)] = k21
        matrices[(2, 2)] = rim_block("K22")

    return BlockOperator(problem, nv, nb, problem.identity_values, matrices)


# ----------------------------------------------------------------------
# incident forcing
# ----------------------------------------------------------------------

def _direction_vector(direction):
    arr = np.asarray(direction, dtype=float)
    if arr.ndim == 0:
        phi = math.radians(float(arr))
        return np.array([math.cos(phi), math.sin(phi)])
    if arr.shape == (2,):
        norm = np.linalg.norm(arr)
        if norm == 0.0:
            raise DomainError("incident direction must be nonzero")
        return arr / norm
    raise DomainError("direction must be an angle in degrees or a 2-vector")


def _outgoing_wavenumber(problem):
    disp = build_dispersion(problem.surface_spec())
    if disp.outgoing_root_index is None:
        raise NotApplicableError(
            "no outgoing propagating wave for a dissipative far surface")
    return disp.roots[disp.outgoing_root_index].real


def incident_rhs(problem, mesh, panels, direction):
    """Forcing from a unit-amplitude incident plane wave.

    ``direction``: propagation angle in degrees, or a 2-vector.  The
    incident surface pair is phi = exp(i k.r), dz phi = rho1 exp(i k.r)
    with |k| = rho1 the outgoing dispersion root; the volume forcing is
    -(rho1 - 1) exp(i k.r) and each rim forcing applies the row's trace
    operator (including its 1/2 scaling) to the incident vertical
    velocity analytically.
    """
    rho1 = _outgoing_wavenumber(problem)
    khat = _direction_vector(direction)
    k = rho1 * khat

    vol_phase = np.exp(1j * (mesh.node_positions @ k))
    f = -(rho1 - 1.0) * vol_phase

    phase = np.exp(1j * (panels.positions @ k))
    w = rho1 * phase
    ikn = 1j * (panels.normals @ k)
    ikt = 1j * (panels.tangents @ k)
    kap = panels.curvatures

    if problem.problem_class == "capillary_neumann":
        boundary = (-0.5 * ikn * w,)
    elif problem.problem_class == "capillary_dirichlet":
        boundary = (-0.5 * w,)
    else:
        nu = float(problem.nu)
        g1 = -0.5 * (ikn ** 2 + nu * ikt ** 2) * w
        g2 = -0.5 * (ikn ** 3 + (2.0 - nu) * ikn * ikt ** 2
                     + (1.0 - nu) * kap * (ikt ** 2 - ikn ** 2)) * w
        boundary = (g1, g2)
    return RhsData(volume=f, boundary=boundary)


def exterior_relation_residual(problem, points, direction):
    """Residual of the far-surface relation for the incident pair.

    For the plane-wave pair the relation reduces to
    (rho1 p(rho1^2) - 1) exp(i k.r); the returned values are zero to
    roundoff exactly because rho1 is a dispersion root.
    """
    rho1 = _outgoing_wavenumber(problem)
    coeffs = problem.surface_spec().coefficients
    p_val = sum(a * rho1 ** (2 * j) for j, a in enumerate(coeffs))
    khat = _direction_vector(direction)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    phase = np.exp(1j * rho1 * (points @ khat))
    return (rho1 * p_val - 1.0) * phase
