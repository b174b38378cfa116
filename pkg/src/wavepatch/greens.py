"""Radial fundamental kernels of the uniform exterior surface condition.

The far surface obeys a condition of the form p(-Lap) dphi/dz = (wave
operator) phi with p a real-coefficient polynomial of degree d_p in {1, 2}
(membrane-like or plate-like).  Its fundamental kernels are superpositions,
over the roots rho_j of the scalar dispersion polynomial

    P(z) = (z p(z^2) - 1) / 2,        deg P = d_P = 2 d_p + 1,

of a single radial resolvent profile

    W(rho, r) = 1/(2 pi r) + T(rho, r),

the inverse transform of xi / (xi - rho).  Off the positive real axis
T(rho, r) = (rho/4) K_0(-rho r), with K_0(z) = StruveH_0(z) - Y_0(z); for the
outgoing (positive real) root the limiting-absorption limit from above gives

    T(rho, r) = -(rho/4) K_0(rho r) + (i rho / 2) H_0^(1)(rho r).

With residues c_j = 1/P'(rho_j) and moment sums m_s = sum_j c_j rho_j^s, the
weighted combinations

    f_s(r) = m_s/(2 pi r) + sum_j c_j rho_j^s T(rho_j, r)

collect everything this module serves: the vertical-velocity kernel
G_S = f_1, the potential kernel G_phi = f_0 / 2, and their iterated surface
Laplacians  Lap G_S = -f_3,  Lap^2 G_S = f_5,  Lap G_phi = -f_2/2,
Lap^2 G_phi = f_4/2 (valid for r > 0; the moment identities m_s = 0 for
s <= d_P - 2 and s = d_P kill all non-distributional leftovers).

Near r = 0 the root contributions cancel through the moment identities, so
each f_s is also carried as an explicit short-range expansion
(:class:`KernelSplit`) in powers of r and r^(2k) log r, used below
``r_split`` where the direct superposition loses digits.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import specfun
from .errors import (DomainError, MultiplePositiveRootsError,
                     MultipleRootError, NotApplicableError,
                     UnsupportedKernelError)

_N_SPLIT_TERMS = 12
_REAL_AXIS_RTOL = 1e-9
_SPLIT_RADIUS_FACTOR = 0.25
_S_MAX = 5  # highest moment index ever needed (Lap^2 G_S = f_5)


@dataclass(frozen=True)
class SurfaceOperatorSpec:
    """The polynomial p(z) = sum_j a_j z^j of the exterior surface condition.

    ``coefficients`` lists a_0 .. a_{d_p} (ascending).  a_0 may be complex
    (dissipative far surface); the leading coefficient must be nonzero.
    """

    coefficients: tuple
    d_p: int

    def __post_init__(self):
        if self.d_p not in (1, 2):
            raise DomainError("surface operator degree d_p must be 1 or 2")
        coeffs = tuple(complex(a) for a in self.coefficients)
        if len(coeffs) != self.d_p + 1:
            raise DomainError("need exactly d_p + 1 coefficients a_0..a_{d_p}")
        if coeffs[-1] == 0:
            raise DomainError("leading coefficient a_{d_p} must be nonzero")
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def capillary(cls, beta, gamma):
        """p(z) = beta z + gamma: membrane/surface-tension far surface."""
        return cls(coefficients=(gamma, beta), d_p=1)

    @classmethod
    def flexural(cls, alpha, gamma):
        """p(z) = alpha z^2 + gamma: thin elastic plate far surface."""
        return cls(coefficients=(gamma, 0.0, alpha), d_p=2)

    @property
    def is_real(self):
        return all(a.imag == 0.0 for a in self.coefficients)


@dataclass(frozen=True)
class DispersionData:
    """Roots and residues of the dispersion polynomial P, plus moment sums.

    ``moments[s]`` = sum_j residues[j] * roots[j]**s for s = 0.._S_MAX.
    ``outgoing_root_index`` marks the single positive real root (None for a
    dissipative spec).  ``moment_residual`` is the worst relative defect of
    the analytic moment identities, recorded as a conditioning certificate.
    """

    spec: SurfaceOperatorSpec
    P_coefficients: np.ndarray
    d_P: int
    roots: np.ndarray
    residues: np.ndarray
    moments: np.ndarray
    outgoing_root_index: int | None
    dissipative: bool
    moment_residual: float


def build_dispersion(spec):
    """Solve P(z) = (z p(z^2) - 1)/2 = 0 and package roots/residues/moments.

    Raises :class:`MultipleRootError` for (numerically) repeated roots and
    :class:`MultiplePositiveRootsError` when more than one root sits on the
    positive real axis.
    """
    if not isinstance(spec, SurfaceOperatorSpec):
        raise DomainError("build_dispersion expects a SurfaceOperatorSpec")
    d_P = 2 * spec.d_p + 1
    P = np.zeros(d_P + 1, dtype=complex)
    P[0] = -0.5
    for j, a in enumerate(spec.coefficients):
        P[2 * j + 1] += 0.5 * a

    roots = np.roots(P[::-1])
    dP_coeffs = npoly.polyder(P)
    scale = float(np.max(np.abs(roots)))
    if scale == 0.0:
        raise MultipleRootError("all dispersion roots collapse at the origin")
    # Newton polish (np.roots is backward stable but not forward accurate)
    for _ in range(6):
        dv = npoly.polyval(roots, dP_coeffs)
        if np.any(dv == 0):
            raise MultipleRootError("dispersion polynomial has a repeated root")
        step = npoly.polyval(roots, P) / dv
        step = np.where(np.abs(step) > 0.5 * scale, 0.0, step)
        roots = roots - step

    if spec.is_real:
        # conjugate-symmetric polynomial: snap numerically real roots
        near_axis = np.abs(roots.imag) <= _REAL_AXIS_RTOL * max(scale, 1.0)
        roots = np.where(near_axis, roots.real + 0.0j, roots)

    diff = np.abs(roots[:, None] - roots[None, :])
    np.fill_diagonal(diff, np.inf)
    if np.min(diff) <= 1e-10 * max(scale, 1.0):
        raise MultipleRootError(
            "dispersion roots closer than 1e-10 of the root scale")
    dv = npoly.polyval(roots, dP_coeffs)
    if np.min(np.abs(dv)) <= 1e-7 * np.max(np.abs(dv)):
        raise MultipleRootError(
            "derivative nearly vanishes at a root; roots are numerically "
            "indistinguishable")
    residues = 1.0 / dv

    pos = (roots.real > 0) & (np.abs(roots.imag)
                              <= _REAL_AXIS_RTOL * max(scale, 1.0))
    idx = np.flatnonzero(pos)
    if idx.size > 1:
        raise MultiplePositiveRootsError(
            f"{idx.size} roots on the positive real axis; the outgoing wave "
            "is not unique")
    outgoing = int(idx[0]) if idx.size == 1 else None

    # verify the residue moment identities: m_s = 0 for s <= d_P - 2 and
    # s = d_P; m_{d_P - 1} = 1 / leading coefficient
    lead = P[-1]
    worst = 0.0
    for s in range(d_P + 1):
        m = np.sum(residues * roots ** s)
        target = 1.0 / lead if s == d_P - 1 else 0.0
        msc = max(float(np.sum(np.abs(residues * roots ** s))),
                  abs(1.0 / lead))
        worst = max(worst, abs(m - target) / msc)
    if worst > 1e-9:
        raise MultipleRootError(
            f"residue moment identities violated (relative defect {worst:.2e});"
            " the root configuration is numerically degenerate")

    moments = _exact_moments(roots, residues, lead, d_P, _S_MAX)
    return DispersionData(spec=spec, P_coefficients=P, d_P=d_P, roots=roots,
                          residues=residues, moments=moments,
                          outgoing_root_index=outgoing,
                          dissipative=outgoing is None,
                          moment_residual=worst)


# ----------------------------------------------------------------------
# short-range expansions
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSplit:
    """Short-range expansion of one weighted radial kernel f_s:

        f_s(r) = sum_i coefficients[i] * r**powers[i] * (log r if log_flags[i])

    valid for 0 < r < r_split (powers may include -1 when the moment m_s does
    not vanish).  The log part starts at power d_P - 3 + (s odd adjustments)
    as dictated by the moment identities; ``smooth`` and ``log_series``
    expose the two groups separately.
    """

    moment_index: int
    r_split: float
    coefficients: np.ndarray
    powers: np.ndarray
    log_flags: np.ndarray

    def evaluate(self, r):
        r = np.asarray(r, dtype=float)
        return _eval_terms((self.coefficients, self.powers, self.log_flags), r)

    @property
    def smooth(self):
        m = ~self.log_flags
        return self.coefficients[m], self.powers[m]

    @property
    def log_series(self):
        m = self.log_flags
        return self.coefficients[m], self.powers[m]


def _pack_terms(acc):
    items = sorted(acc.items(), key=lambda kv: (kv[0][1], kv[0][0]))
    powers = np.array([p for (p, _l), _c in items], dtype=np.int64)
    logs = np.array([l for (_p, l), _c in items], dtype=bool)
    coefs = np.array([c for (_pl), c in items], dtype=complex)
    return coefs, powers, logs


def _eval_terms(terms, r):
    coefs, powers, logs = terms
    out = np.zeros(r.shape, dtype=complex)
    lnr = np.log(r) if logs.any() else None
    for c, p, l in zip(coefs, powers, logs):
        mono = c * r ** float(p)
        out += mono * lnr if l else mono
    return out


def _derive_terms(terms):
    coefs, powers, logs = terms
    acc = {}

    def add(c, p, l):
        if c != 0:
            key = (int(p), bool(l))
            acc[key] = acc.get(key, 0.0 + 0.0j) + c

    for c, p, l in zip(coefs, powers, logs):
        if l:
            if p != 0:
                add(c * p, p - 1, True)
            add(c, p - 1, False)
        elif p != 0:
            add(c * p, p - 1, False)
    return _pack_terms(acc)


def _exact_moments(roots, residues, lead, d_P, t_max):
    """Moment sums m_t for t = 0..t_max with the analytically exact values
    (zeros for t <= d_P - 2 and t = d_P, 1/lead for t = d_P - 1) imposed.

    The split expansion multiplies high inverse powers of r by these, so the
    identically-zero moments must be exactly zero, not 1e-13 noise.
    """
    m = np.array([np.sum(residues * roots ** t) for t in range(t_max + 1)])
    for t in range(min(d_P - 1, t_max + 1)):
        m[t] = 0.0
    if d_P - 1 <= t_max:
        m[d_P - 1] = 1.0 / lead
    if d_P <= t_max:
        m[d_P] = 0.0
    return m


def _build_split_terms(disp, s, n_terms=_N_SPLIT_TERMS):
    """Assemble the r-power / r-power-log expansion of f_s.

    The StruveH odd powers, the Y_0 log group and the Y_0 harmonic-sum group
    all reduce exactly to moment sums (same rho power regardless of the
    outgoing/off-axis branch), so they are built from :func:`_exact_moments`;
    only the log(zeta_j/2)-weighted part stays root-individual.
    """
    k = np.arange(n_terms)
    fact2 = np.exp(2 * np.array([math.lgamma(kk + 1.0) for kk in k]))
    g32sq = np.exp(2 * np.array([math.lgamma(kk + 1.5) for kk in k]))
    jk = (-1.0) ** k / fact2                      # J_0: sum jk u^k, u=(z/2)^2
    hk = (-1.0) ** k / (2.0 ** (2 * k + 1) * g32sq)   # StruveH_0: sum hk z^{2k+1}
    harm = np.zeros(n_terms)
    harm[1:] = np.cumsum(1.0 / np.arange(1, n_terms))
    qk = (-1.0) ** (k + 1) * harm / fact2         # Y_0 regular part: sum qk u^k

    moments = _exact_moments(disp.roots, disp.residues,
                             disp.P_coefficients[-1], disp.d_P,
                             s + 2 * n_terms)

    acc = {}

    def add(c, p, l):
        if c != 0:
            key = (int(p), bool(l))
            acc[key] = acc.get(key, 0.0 + 0.0j) + c

    add(moments[s] / (2 * np.pi), -1, False)
    for kk in range(n_terms):
        # StruveH odd powers: coefficient -h_k/4 * m_{s+2k+2} either branch
        add(-(hk[kk] / 4.0) * moments[s + 2 * kk + 2], 2 * kk + 1, False)
        # -(rho/4)(2/pi) w u^k collapses to -(1/(2 pi 4^k)) c rho^{s+1+2k}
        wmom = moments[s + 1 + 2 * kk] / (2 * np.pi * 4.0 ** kk)
        add(-jk[kk] * wmom, 2 * kk, True)
        add(-qk[kk] * wmom, 2 * kk, False)

    for j, (rho, cres) in enumerate(zip(disp.roots, disp.residues)):
        w = cres * rho ** s
        out = (j == disp.outgoing_root_index)
        zeta = rho if out else -rho
        log_zeta = np.log(zeta / 2.0)  # principal branch; zeta is never on R^-
        for kk in range(n_terms):
            wk = cres * rho ** (s + 1 + 2 * kk) / 4.0 ** kk
            ce = -(log_zeta + np.euler_gamma) * jk[kk] * wk / (2 * np.pi)
            if out:
                ce += 0.5j * jk[kk] * wk
            add(ce, 2 * kk, False)

    return _pack_terms(acc)


# ----------------------------------------------------------------------
# evaluation
# ----------------------------------------------------------------------

def _radial_direct(ev, s, r, kmax):
    """f_s and its first kmax radial derivatives by direct root
    superposition (the accurate route away from r = 0)."""
    d = ev.dispersion
    out = np.zeros((kmax + 1, r.size), dtype=complex)
    m = d.moments[s]
    if m != 0:
        kk = np.arange(kmax + 1)
        signfact = (-1.0) ** kk * np.array([math.factorial(i) for i in kk])
        out += (m / (2 * np.pi)) * signfact[:, None] * r ** (-(kk[:, None] + 1))
    for j, (rho, cres) in enumerate(zip(d.roots, d.residues)):
        w = cres * rho ** s
        if j == d.outgoing_root_index:
            K = specfun._radial_deriv_array("K0pos", rho, r, kmax)
            H = specfun._radial_deriv_array("H1", rho, r, kmax)
            out += w * (-(rho / 4.0) * K + 0.5j * rho * H)
        else:
            K = specfun._radial_deriv_array("K0neg", rho, r, kmax)
            out += w * (rho / 4.0) * K
    return out


def _radial_split(ev, s, r, kmax):
    """f_s and derivatives from the short-range expansion (r < r_split)."""
    out = np.empty((kmax + 1, r.size), dtype=complex)
    for kd in range(kmax + 1):
        out[kd] = _eval_terms(ev._terms_for(s, kd), r)
    return out


class GreensEvaluator:
    """Evaluator for the radial kernels f_s of one dispersion configuration.

    Dispatches between the direct root superposition and the short-range
    expansion at ``r_split`` (default 0.25 / max_j |rho_j|), and provides
    radial derivative tables up to order ``k_max`` (<= 4) plus Cartesian
    partials via the radial chain rule.
    """

    def __init__(self, dispersion, k_max=4, r_split=None):
        if not isinstance(dispersion, DispersionData):
            raise DomainError("GreensEvaluator expects DispersionData")
        if not (isinstance(k_max, (int, np.integer)) and 1 <= k_max <= 4):
            raise DomainError("k_max must be an integer in 1..4")
        self.dispersion = dispersion
        self.k_max = int(k_max)
        scale = float(np.max(np.abs(dispersion.roots)))
        if r_split is None:
            r_split = _SPLIT_RADIUS_FACTOR / scale
        r_split = float(r_split)
        if not (r_split > 0):
            raise DomainError("r_split must be positive")
        self.r_split = r_split
        self._term_cache = {}
        self.splits = {}
        for s in range(_S_MAX + 1):
            terms = _build_split_terms(dispersion, s)
            self._term_cache[(s, 0)] = terms
            self.splits[s] = KernelSplit(moment_index=s, r_split=r_split,
                                         coefficients=terms[0],
                                         powers=terms[1], log_flags=terms[2])

    def _terms_for(self, s, k):
        key = (s, k)
        if key not in self._term_cache:
            self._term_cache[key] = _derive_terms(self._terms_for(s, k - 1))
        return self._term_cache[key]

    # -- radial tables ---------------------------------------------------

    def radial_table(self, s, r, kmax=0):
        """d^k/dr^k f_s(r) for k = 0..kmax; shape (kmax+1, len(r))."""
        if not (isinstance(s, (int, np.integer)) and 0 <= s <= _S_MAX):
            raise UnsupportedKernelError(f"moment index s={s} outside 0..{_S_MAX}")
        if not (isinstance(kmax, (int, np.integer)) and 0 <= kmax <= 4):
            raise UnsupportedKernelError("radial derivative order limited to 4")
        r = np.asarray(r, dtype=float)
        scalar = (r.ndim == 0)
        r = np.atleast_1d(r)
        if (not np.all(np.isfinite(r))) or np.any(r <= 0):
            raise DomainError("radii must be positive and finite")
        out = np.empty((kmax + 1, r.size), dtype=complex)
        near = r < self.r_split
        if near.any():
            out[:, near] = _radial_split(self, s, r[near], kmax)
        far = ~near
        if far.any():
            out[:, far] = _radial_direct(self, s, r[far], kmax)
        return out[:, 0] if scalar else out

    def radial_table_GS(self, r, kmax=0):
        """G_S = f_1 and radial derivatives."""
        return self.radial_table(1, r, kmax)

    def radial_table_Gphi(self, r, kmax=0):
        """G_phi = f_0 / 2 and radial derivatives."""
        return 0.5 * self.radial_table(0, r, kmax)

    def eval_GS(self, r):
        out = self.radial_table(1, r, 0)
        val = out[..., 0] if np.asarray(r).ndim == 0 else out[0]
        return complex(val) if np.asarray(r).ndim == 0 else val

    def eval_Gphi(self, r):
        out = 0.5 * self.radial_table(0, r, 0)
        val = out[..., 0] if np.asarray(r).ndim == 0 else out[0]
        return complex(val) if np.asarray(r).ndim == 0 else val

    # -- Cartesian derivatives -------------------------------------------

    _WHICH = {"GS": (1, 1.0), "Gphi": (0, 0.5)}

    def radial_g_table(self, which, r, mmax):
        """Iterated radial-gradient factors g_m = ((1/r) d/dr)^m f at r.

        These are the radial weights of the chain rule for Cartesian
        derivatives of a radial function; shape (mmax+1, len(r)).
        """
        if which not in self._WHICH:
            raise UnsupportedKernelError(f"unknown kernel {which!r}")
        s, fac = self._WHICH[which]
        if not (0 <= mmax <= 4):
            raise UnsupportedKernelError("g-table order limited to 4")
        r = np.atleast_1d(np.asarray(r, dtype=float))
        tab = fac * self.radial_table(s, r, mmax)
        g = np.empty_like(tab)
        g[0] = tab[0]
        if mmax >= 1:
            g[1] = tab[1] / r
        if mmax >= 2:
            g[2] = tab[2] / r ** 2 - tab[1] / r ** 3
        if mmax >= 3:
            g[3] = tab[3] / r ** 3 - 3 * tab[2] / r ** 4 + 3 * tab[1] / r ** 5
        if mmax >= 4:
            g[4] = (tab[4] / r ** 4 - 6 * tab[3] / r ** 5
                    + 15 * tab[2] / r ** 6 - 15 * tab[1] / r ** 7)
        return g

    def eval_derivs(self, which, dx, k):
        """Cartesian partial d^{k0}_x d^{k1}_y of G_S or G_phi at offset dx."""
        k0, k1 = int(k[0]), int(k[1])
        if k0 < 0 or k1 < 0 or k0 + k1 > self.k_max:
            raise UnsupportedKernelError(
                f"derivative order {k0 + k1} exceeds k_max={self.k_max}")
        dx = np.asarray(dx, dtype=float).reshape(2)
        rr = float(np.hypot(dx[0], dx[1]))
        if not (rr > 0) or not np.isfinite(rr):
            raise DomainError("offset must be nonzero and finite")
        m = k0 + k1
        g = self.radial_g_table(which, np.array([rr]), m)
        d = dx[None, :]
        ex = np.array([[1.0, 0.0]])
        ey = np.array([[0.0, 1.0]])
        dirs = [ex] * k0 + [ey] * k1
        return complex(contract_directional(g, d, dirs)[0])

    # -- diagnostics -------------------------------------------------------

    def radiation_residual(self, r):
        """dG_S/dr - i rho_1 G_S; decays faster than the outgoing wave."""
        d = self.dispersion
        if d.dissipative:
            raise NotApplicableError(
                "no outgoing wavenumber: the spec is dissipative")
        rho1 = d.roots[d.outgoing_root_index]
        scalar = np.asarray(r).ndim == 0
        tab = self.radial_table(1, np.atleast_1d(np.asarray(r, dtype=float)), 1)
        res = tab[1] - 1j * rho1 * tab[0]
        return complex(res[0]) if scalar else res


def contract_directional(g, d, dirs):
    """m-th directional derivative of a radial kernel from its g-table.

    ``g``: (m+1, N) table of g_j = ((1/r) d/dr)^j f at r = |d| per point;
    ``d``: (N, 2) offsets (target minus source); ``dirs``: m arrays (N, 2),
    one direction per derivative, applied to the target argument.  For a
    source-side derivative pass the negated direction.
    """
    m = len(dirs)
    if m == 0:
        return g[0]
    dd = [np.einsum("ni,ni->n", v, d) for v in dirs]
    if m == 1:
        return dd[0] * g[1]
    vv = {}
    for a in range(m):
        for b in range(a + 1, m):
            vv[(a, b)] = np.einsum("ni,ni->n", dirs[a], dirs[b])
    if m == 2:
        return vv[(0, 1)] * g[1] + dd[0] * dd[1] * g[2]
    if m == 3:
        s2 = (vv[(0, 1)] * dd[2] + vv[(0, 2)] * dd[1] + vv[(1, 2)] * dd[0])
        return s2 * g[2] + dd[0] * dd[1] * dd[2] * g[3]
    if m == 4:
        p2 = (vv[(0, 1)] * vv[(2, 3)] + vv[(0, 2)] * vv[(1, 3)]
              + vv[(0, 3)] * vv[(1, 2)])
        s3 = 0.0
        for a, b in itertools.combinations(range(4), 2):
            c, e = (i for i in range(4) if i not in (a, b))
            s3 = s3 + vv[(a, b)] * dd[c] * dd[e]
        return p2 * g[2] + s3 * g[3] + dd[0] * dd[1] * dd[2] * dd[3] * g[4]
    raise UnsupportedKernelError("directional derivatives limited to order 4")


def radial_resolvent(rho, r):
    """W(rho, r) = 1/(2 pi r) + T(rho, r), the radial resolvent profile.

    Equals the transform (1/2pi) int_0^inf xi J_0(xi r)/(xi - rho) dxi for
    rho off the positive real axis, and its limiting-absorption limit (from
    Im rho > 0) on it.
    """
    rho = complex(rho)
    r = float(r)
    if r <= 0:
        raise DomainError("r must be positive")
    if rho == 0:
        return 1.0 / (2 * np.pi * r)
    if rho.imag == 0 and rho.real > 0:
        t = (-(rho / 4.0) * specfun.struve_k(0, rho * r).value
             + 0.5j * rho * specfun.cyl_bessel("H1", 0, rho * r).value)
    else:
        t = (rho / 4.0) * specfun.struve_k(0, -rho * r).value
    return 1.0 / (2 * np.pi * r) + t
