"""Bessel, Hankel and Struve-type special functions on the principal branch.

The radial Green's functions of the surface-wave problem are built from
H_0^(1)(z) and from the combination

    K_nu(z) = StruveH_nu(z) - Y_nu(z),        nu in {0, 1},

which, unlike H and Y separately, stays algebraically bounded in the whole
cut plane |arg z| < pi.  scipy has no complex Struve functions, so K is
evaluated here by three regimes:

* power series for StruveH minus AMOS Y (small |z|; summed in extended
  precision because the series terms peak near e^{|z|} while the sum is O(1));
* a Laplace-type integral  K_0(z) = (2/pi) int_0^inf e^{-zt} (1+t^2)^{-1/2} dt
  (and the analogous (1+t^2)^{+1/2} form for K_1), with the contour rotated
  by -arg z so the exponential decays along the path (intermediate |z|);
* the divergent large-z expansion truncated at its minimal term (large |z|).

Arguments with |arg z| > pi/2 are first reflected into the right half plane
with   K_0(w e^{+i pi}) = -K_0(w) - 2i H_0^(2)(w),
       K_0(w e^{-i pi}) = -K_0(w) + 2i H_0^(1)(w),
       K_1(w e^{+i pi}) =  K_1(w) + 2i H_1^(2)(w),
       K_1(w e^{-i pi}) =  K_1(w) - 2i H_1^(1)(w),
where the Hankel factor is always the decaying one for the half plane it is
evaluated in.

Everything is vectorized over numpy arrays internally; the public operations
wrap scalars into :class:`SpecialValue` / :class:`RadialDerivTable`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.special as sp

from .errors import DomainError

# regime boundaries (see the crossover-continuity tests)
SERIES_RADIUS = 16.0      # power series for |z| <= this ...
SERIES_IM_MAX = 12.0      # ... provided |Im z| <= this (K = H - Y cancellation)
ASYMPTOTIC_RADIUS = 30.0  # minimal-term truncated expansion beyond this

_N_SERIES = 48
_N_LAGUERRE = 48
_STRAIGHT_T_MAX = 3.0
_N_STRAIGHT_PANELS = 24
_TWO_OVER_PI = 2.0 / np.pi

_EPS_LD = float(np.finfo(np.longdouble).eps)

# ---- precomputed tables ------------------------------------------------

_SQRT_PI_LD = np.longdouble("1.77245385090551602729816748334114518")


def _series_coefficients():
    # Gamma(k+3/2) by recurrence in extended precision
    gam = np.empty(_N_SERIES + 1, dtype=np.longdouble)
    gam[0] = _SQRT_PI_LD / 2
    for k in range(_N_SERIES):
        gam[k + 1] = gam[k] * (np.longdouble(k) + np.longdouble(1.5))
    sign = np.where(np.arange(_N_SERIES) % 2 == 0, 1, -1).astype(np.longdouble)
    c0 = sign / gam[:_N_SERIES] ** 2
    c1 = sign / (gam[:_N_SERIES] * gam[1:_N_SERIES + 1])
    return c0, c1


_SER_C0, _SER_C1 = _series_coefficients()

_LAG_X, _LAG_W = np.polynomial.laguerre.laggauss(_N_LAGUERRE)

_GL_X15, _GL_W15 = np.polynomial.legendre.leggauss(15)


def _straight_nodes():
    edges = np.linspace(0.0, _STRAIGHT_T_MAX, _N_STRAIGHT_PANELS + 1)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (b - a) * _GL_X15 + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * _GL_W15)
    return np.concatenate(nodes), np.concatenate(weights)


_ST_T, _ST_W = _straight_nodes()

# Gamma(k+1/2)^2 for the large-z expansion
_ASY_MAXK = 20
_ASY_G2 = np.exp(2 * sp.gammaln(np.arange(_ASY_MAXK) + 0.5))


# ---- regime evaluators (arrays in, arrays out) -------------------------

def _struve_h01_series(z):
    """StruveH_0, StruveH_1 by power series in extended precision."""
    zl = np.asarray(z, dtype=complex).astype(np.clongdouble)
    u = (zl / 2) ** 2
    s0 = np.zeros_like(u)
    s1 = np.zeros_like(u)
    for k in range(_N_SERIES - 1, -1, -1):
        s0 = s0 * u + _SER_C0[k]
        s1 = s1 * u + _SER_C1[k]
    h0 = ((zl / 2) * s0).astype(complex)
    h1 = ((zl / 2) ** 2 * s1).astype(complex)
    # peak-term roundoff estimate
    az = np.maximum(np.abs(np.asarray(z, dtype=complex)), 1e-290)
    kpk = np.clip(np.round(az / 2), 0, _N_SERIES - 1)
    logpeak = (2 * kpk + 1) * np.log(az / 2) - 2 * sp.gammaln(kpk + 1.5)
    est = np.exp(np.clip(logpeak, -700, 700)) * _N_SERIES * _EPS_LD
    return h0, h1, est


def _k01_series(z):
    z = np.asarray(z, dtype=complex)
    h0, h1, est = _struve_h01_series(z)
    y0 = sp.yv(0, z)
    y1 = sp.yv(1, z)
    k0 = h0 - y0
    k1 = h1 - y1
    est = est + (np.abs(y0) + np.abs(y1)) * 2e-16
    return k0, k1, est


def _k01_laplace(z):
    """Rotated-contour Laplace integrals; needs |arg z| <= pi/2, z not tiny."""
    z = np.asarray(z, dtype=complex)
    absz = np.abs(z)
    theta = np.angle(z)
    rot = np.exp(-1j * theta)
    k0 = np.empty_like(z)
    k1 = np.empty_like(z)

    near_axis = np.abs(theta) > np.pi / 4

    # full contour rotation: t = e^{-i theta} u, valid while the path stays
    # far from the branch points t = +-i (needs |theta| <= pi/4 here)
    m = ~near_axis
    if m.any():
        u = _LAG_X[:, None] / absz[None, m]
        t = rot[None, m] * u
        one_pt2 = 1.0 + t * t
        i0 = (_LAG_W[:, None] / np.sqrt(one_pt2)).sum(0) / absz[m]
        i1 = (_LAG_W[:, None] * np.sqrt(one_pt2)).sum(0) / absz[m]
        k0[m] = _TWO_OVER_PI * rot[m] * i0
        k1[m] = (2.0 * z[m] / np.pi) * rot[m] * i1

    # near the imaginary axis: integrate [0, 3] straight (the oscillation is
    # resolved by fixed panels since |z| < 30 here), then rotate the tail,
    # which starts far enough from t = +-i
    if near_axis.any():
        zb = z[near_axis]
        e = np.exp(-_ST_T[:, None] * zb[None, :])
        p0 = (_ST_W[:, None] * e / np.sqrt(1.0 + _ST_T ** 2)[:, None]).sum(0)
        p1 = (_ST_W[:, None] * e * np.sqrt(1.0 + _ST_T ** 2)[:, None]).sum(0)
        u = _LAG_X[:, None] / absz[None, near_axis]
        t = _STRAIGHT_T_MAX + rot[None, near_axis] * u
        one_pt2 = 1.0 + t * t
        pref = np.exp(-_STRAIGHT_T_MAX * zb) * rot[near_axis] / absz[near_axis]
        q0 = pref * (_LAG_W[:, None] / np.sqrt(one_pt2)).sum(0)
        q1 = pref * (_LAG_W[:, None] * np.sqrt(one_pt2)).sum(0)
        k0[near_axis] = _TWO_OVER_PI * (p0 + q0)
        k1[near_axis] = (2.0 * zb / np.pi) * (p1 + q1)

    est = 2e-14 * (np.abs(k0) + np.abs(k1) + _TWO_OVER_PI)
    return k0, k1, est


def _k01_asymptotic(z):
    """Large-z expansion truncated at the (per-point) minimal term."""
    z = np.asarray(z, dtype=complex)
    v = (2.0 / z) ** 2
    kstar = np.clip((np.abs(z) / 2 - 0.5).astype(int), 1, _ASY_MAXK - 1)
    term = np.ones_like(z) * _ASY_G2[0]
    s0 = term.copy()
    s1 = term * 0.5
    last = np.abs(term)
    for k in range(1, _ASY_MAXK):
        term = -term * v * (k - 0.5) ** 2
        use = k <= kstar
        s0 = np.where(use, s0 + term, s0)
        s1 = np.where(use, s1 + term * (k + 0.5), s1)
        last = np.where(k == kstar, np.abs(term), last)
    k0 = (2.0 / z) * s0 / np.pi ** 2
    k1 = _TWO_OVER_PI + v * s1 / np.pi ** 2
    est = np.abs(2.0 / z) * last / np.pi ** 2 + 1e-15
    return k0, k1, est


def _k01_halfplane(z, force_regime=None):
    """K_0, K_1 for |arg z| <= pi/2."""
    z = np.asarray(z, dtype=complex)
    if force_regime == "series":
        return _k01_series(z)
    if force_regime == "laplace":
        return _k01_laplace(z)
    if force_regime == "asymptotic":
        return _k01_asymptotic(z)

    absz = np.abs(z)
    m_series = (absz <= SERIES_RADIUS) & (np.abs(z.imag) <= SERIES_IM_MAX)
    m_asym = ~m_series & (absz >= ASYMPTOTIC_RADIUS)
    m_lap = ~m_series & ~m_asym

    k0 = np.empty_like(z)
    k1 = np.empty_like(z)
    est = np.empty(z.shape, dtype=float)
    for mask, fn in ((m_series, _k01_series),
                     (m_lap, _k01_laplace),
                     (m_asym, _k01_asymptotic)):
        if mask.any():
            a, b, e = fn(z[mask])
            k0[mask], k1[mask], est[mask] = a, b, e
    return k0, k1, est


def _struve_k01(z, force_regime=None):
    """Vectorized K_0(z), K_1(z), error estimate, for |arg z| < pi.

    This is the workhorse the Green's-function tables are built on.
    """
    z = np.asarray(z, dtype=complex)
    ang = np.angle(z)
    refl_p = ang > np.pi / 2          # reflect z = w e^{+i pi}
    refl_m = ang < -np.pi / 2         # reflect z = w e^{-i pi}
    keep = ~(refl_p | refl_m)

    k0 = np.empty_like(z)
    k1 = np.empty_like(z)
    est = np.empty(z.shape, dtype=float)

    if keep.any():
        k0[keep], k1[keep], est[keep] = _k01_halfplane(z[keep], force_regime)
    if refl_p.any():
        w = -z[refl_p]
        a, b, e = _k01_halfplane(w, force_regime)
        # the decaying Hankel correction ~ e^{Im w}; AMOS reports underflow
        # as NaN, but the true contribution is then indistinguishable from 0
        tiny = w.imag < -600.0
        h0 = np.where(tiny, 0.0, sp.hankel2(0, np.where(tiny, 1.0, w)))
        h1 = np.where(tiny, 0.0, sp.hankel2(1, np.where(tiny, 1.0, w)))
        k0[refl_p] = -a - 2j * h0
        k1[refl_p] = b + 2j * h1
        est[refl_p] = e + (np.abs(h0) + np.abs(h1)) * 2e-15
    if refl_m.any():
        w = -z[refl_m]
        a, b, e = _k01_halfplane(w, force_regime)
        tiny = w.imag > 600.0
        h0 = np.where(tiny, 0.0, sp.hankel1(0, np.where(tiny, 1.0, w)))
        h1 = np.where(tiny, 0.0, sp.hankel1(1, np.where(tiny, 1.0, w)))
        k0[refl_m] = -a + 2j * h0
        k1[refl_m] = b - 2j * h1
        est[refl_m] = e + (np.abs(h0) + np.abs(h1)) * 2e-15
    return k0, k1, est


def _hankel1_01(z):
    z = np.asarray(z, dtype=complex)
    return sp.hankel1(0, z), sp.hankel1(1, z)


# ---- derivative tables (w.r.t. the argument w) -------------------------

def _deriv_table_k0(w, kmax):
    """d^j/dw^j K_0(w), j = 0..kmax, from the order-0/1 values and the
    inhomogeneous Bessel equation  f'' + f'/w + f = 2/(pi w)."""
    w = np.asarray(w, dtype=complex)
    k0, k1, _ = _struve_k01(w)
    D = np.empty((kmax + 1,) + w.shape, dtype=complex)
    D[0] = k0
    if kmax >= 1:
        D[1] = _TWO_OVER_PI - k1
    if kmax >= 2:
        D[2] = _TWO_OVER_PI / w - D[0] - D[1] / w
    if kmax >= 3:
        D[3] = -_TWO_OVER_PI / w ** 2 - D[1] - D[2] / w + D[1] / w ** 2
    if kmax >= 4:
        D[4] = (4.0 / (np.pi * w ** 3) - D[2] - D[3] / w
                + 2 * D[2] / w ** 2 - 2 * D[1] / w ** 3)
    return D


def _deriv_table_h1(w, kmax):
    """d^j/dw^j H_0^(1)(w) via the homogeneous Bessel equation."""
    w = np.asarray(w, dtype=complex)
    h0, h1 = _hankel1_01(w)
    D = np.empty((kmax + 1,) + w.shape, dtype=complex)
    D[0] = h0
    if kmax >= 1:
        D[1] = -h1
    if kmax >= 2:
        D[2] = -D[0] - D[1] / w
    if kmax >= 3:
        D[3] = -D[1] - D[2] / w + D[1] / w ** 2
    if kmax >= 4:
        D[4] = -D[2] - D[3] / w + 2 * D[2] / w ** 2 - 2 * D[1] / w ** 3
    return D


# ---- public scalar interface -------------------------------------------


@dataclass(frozen=True)
class SpecialValue:
    """A function value with a forward (truncation+roundoff) error estimate."""
    value: complex
    abs_err_estimate: float


@dataclass(frozen=True)
class RadialDerivTable:
    """Derivatives d^j/dr^j f(rho r) for one of the radial basis functions.

    basis: "K0neg" -> f = K_0(-rho .), "K0pos" -> K_0(rho .),
    "H1" -> H_0^(1)(rho .).
    """
    scale: complex
    radius: float
    basis: str
    derivs: np.ndarray


def _as_special(value, est):
    value = complex(value)
    if not np.isfinite(value.real) or not np.isfinite(value.imag):
        raise OverflowError("result magnitude exceeds the floating range")
    return SpecialValue(value, float(est))


def cyl_bessel(kind, order, z):
    """Bessel J/Y or Hankel H^(1) of order 0 or 1 at complex z."""
    if kind not in ("J", "Y", "H1"):
        raise ValueError(f"unknown kind {kind!r}")
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    z = complex(z)
    if z == 0 and kind in ("Y", "H1"):
        raise DomainError(f"{kind} is singular at z = 0")
    # stay on the real AMOS path for real arguments (keeps Y exactly real)
    arg = z.real if (z.imag == 0.0 and (z.real > 0 or kind == "J")) else z
    if kind == "J":
        v = sp.jv(order, arg)
    elif kind == "Y":
        v = sp.yv(order, arg)
    else:
        v = sp.hankel1(order, arg)
    return _as_special(v, abs(v) * 1e-14)


def struve_h(order, z):
    """Struve H_0 or H_1 at complex z (principal branch)."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    z = complex(z)
    if abs(z) <= SERIES_RADIUS and abs(z.imag) <= SERIES_IM_MAX:
        h0, h1, est = _struve_h01_series(np.array([z]))
        return _as_special((h0 if order == 0 else h1)[0], est[0])
    # large |z|: StruveH = K + Y with K from its cancellation-safe path
    k0, k1, est = _struve_k01(np.array([z]))
    y = sp.yv(order, z)
    v = (k0 if order == 0 else k1)[0] + y
    return _as_special(v, est[0] + abs(y) * 2e-16)


def struve_k(order, z):
    """K_nu(z) = StruveH_nu(z) - Y_nu(z), algebraically bounded on
    |arg z| < pi."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    z = complex(z)
    if z == 0:
        raise DomainError("K is singular at z = 0")
    if z.imag == 0 and z.real < 0:
        raise DomainError("negative real axis is outside the principal branch")
    k0, k1, est = _struve_k01(np.array([z]))
    return _as_special((k0 if order == 0 else k1)[0], est[0])


_BASES = ("K0neg", "K0pos", "H1")


def _radial_deriv_array(f, rho, r, k):
    """Vectorized d^j/dr^j f(rho r) for r a positive 1-D array; shape
    (k+1, len(r)).  Internal workhorse behind :func:`radial_derivs`."""
    rho = complex(rho)
    zeta = -rho if f == "K0neg" else rho
    w = zeta * np.asarray(r, dtype=float)
    D = (_deriv_table_k0(w, k) if f.startswith("K0")
         else _deriv_table_h1(w, k))
    powers = zeta ** np.arange(k + 1)
    return powers.reshape((k + 1,) + (1,) * (D.ndim - 1)) * D


def radial_derivs(f, rho, r, k):
    """Table of d^j/dr^j f(rho r), j = 0..k (k <= 4), for a radial basis.

    Built from the order-0/1 function values via the Bessel-equation
    recurrences; no finite differencing is involved.
    """
    if f not in _BASES:
        raise ValueError(f"unknown basis {f!r}; expected one of {_BASES}")
    if not (isinstance(k, (int, np.integer)) and 0 <= k <= 4):
        raise ValueError("k must be an integer in 0..4")
    r = float(r)
    if r <= 0:
        raise DomainError("radial derivative tables need r > 0")
    derivs = _radial_deriv_array(f, rho, np.array([r]), k)[:, 0]
    return RadialDerivTable(scale=complex(rho), radius=r, basis=f,
                            derivs=derivs)
