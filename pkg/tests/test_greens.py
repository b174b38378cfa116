import numpy as np
import pytest

from wavepatch import greens
from wavepatch.errors import (DomainError, MultipleRootError,
                              MultiplePositiveRootsError, NotApplicableError)

import oracles


CAP = greens.SurfaceOperatorSpec.capillary(beta=0.5, gamma=1.0)
FLEX = greens.SurfaceOperatorSpec.flexural(alpha=1.5, gamma=-0.1)


def test_capillary_preset_roots():
    d = greens.build_dispersion(CAP)
    assert d.d_P == 3
    assert not d.dissipative
    assert d.outgoing_root_index is not None
    rho1 = d.roots[d.outgoing_root_index]
    assert abs(rho1 - oracles.CAPILLARY_PRESET_ROOT) <= 1e-12
    c1 = d.residues[d.outgoing_root_index]
    assert abs(c1 - oracles.CAPILLARY_PRESET_RESIDUE) <= 1e-12
    # the complex pair
    others = sorted([d.roots[i] for i in range(3)
                     if i != d.outgoing_root_index], key=lambda z: z.imag)
    assert abs(others[1] - oracles.CAPILLARY_PRESET_COMPLEX_ROOT) <= 1e-12


def test_flexural_preset_roots():
    d = greens.build_dispersion(FLEX)
    assert d.d_P == 5
    assert not d.dissipative
    rho1 = d.roots[d.outgoing_root_index]
    assert abs(rho1 - oracles.FLEXURAL_PRESET_ROOT) <= 1e-12
    assert abs(d.residues[d.outgoing_root_index]
               - oracles.FLEXURAL_PRESET_RESIDUE) <= 1e-12
    # exactly one root on the positive real axis
    on_axis = [z for z in d.roots if abs(z.imag) < 1e-10 and z.real > 0]
    assert len(on_axis) == 1


def test_roots_match_independent_oracle():
    d = greens.build_dispersion(CAP)
    roots_ref, res_ref = oracles.dispersion_roots_oracle([0.25, 0.0, 0.5, -0.5])
    got = sorted(d.roots, key=lambda z: (round(z.real, 9), z.imag))
    ref = sorted(roots_ref, key=lambda z: (round(z.real, 9), z.imag))
    for g, r in zip(got, ref):
        assert abs(g - r) <= 1e-12


def _random_specs(n, rng):
    specs = []
    while len(specs) < n:
        if rng.random() < 0.5:
            beta = 10 ** rng.uniform(-1.3, 0.7)
            gamma = 10 ** rng.uniform(-1, 0.7)
            if rng.random() < 0.3:
                gamma = gamma + 1j * rng.uniform(0.05, 0.5)
            specs.append(greens.SurfaceOperatorSpec.capillary(beta, gamma))
        else:
            alpha = 10 ** rng.uniform(-1, 1)
            gamma = rng.uniform(-1.5, 1.5)
            if rng.random() < 0.3:
                gamma = gamma + 1j * rng.uniform(0.05, 0.5)
            specs.append(greens.SurfaceOperatorSpec.flexural(alpha, gamma))
    return specs


def test_moment_conditions_random_specs():
    rng = np.random.default_rng(42)
    for spec in _random_specs(100, rng):
        try:
            d = greens.build_dispersion(spec)
        except (MultipleRootError, MultiplePositiveRootsError):
            continue  # random draw hit a degenerate configuration
        dP = d.d_P
        scale = max(np.sum(np.abs(d.residues * d.roots ** s))
                    for s in range(dP + 1))
        for s in range(dP - 1):
            m = np.sum(d.residues * d.roots ** s)
            assert abs(m) <= 1e-12 * max(scale, 1.0), (spec, s)
        m = np.sum(d.residues * d.roots ** (dP - 1))
        lead = d.P_coefficients[-1]
        assert abs(m - 1 / lead) <= 1e-12 * abs(1 / lead) * max(scale, 1.0)
        m = np.sum(d.residues * d.roots ** dP)
        assert abs(m) <= 1e-12 * max(scale, 1.0)


def test_multiple_root_rejected():
    # beta = sqrt(2), gamma = -1.5 sqrt(2) puts a double root on P
    b = np.sqrt(2.0)
    spec = greens.SurfaceOperatorSpec.capillary(beta=b, gamma=-1.5 * b)
    with pytest.raises(MultipleRootError):
        greens.build_dispersion(spec)


def test_multiple_positive_roots_rejected():
    # beta z^3 + gamma z - 1 proportional to (z-1)(z-2)(z+3)
    spec = greens.SurfaceOperatorSpec.capillary(beta=-1 / 6, gamma=7 / 6)
    with pytest.raises(MultiplePositiveRootsError):
        greens.build_dispersion(spec)


# ----------------------------------------------------------------------
# evaluator
# ----------------------------------------------------------------------

def test_resolvent_primitive_vs_hankel_transform():
    # Fourier inversion spot-check against the frozen oscillatory-quadrature
    # values of (1/2pi) int xi J0(xi r)/(xi - rho) dxi
    rho = oracles.RESOLVENT_TRANSFORM_RHO
    for r, ref in oracles.RESOLVENT_TRANSFORM_FROZEN.items():
        got = greens.radial_resolvent(rho, r)
        assert abs(got - ref) <= 1e-6 * abs(ref)
        # in fact much closer (limited by cancellation against 1/(2 pi r))
        assert abs(got - ref) <= 1e-9 * abs(ref)


def test_gs_hankel_transform_oracle():
    # full G_S against the adaptive oscillatory Hankel-transform oracle at
    # r=1, using a dissipative spec so every root is off the real axis and
    # the transform integrand is pole-free
    spec = greens.SurfaceOperatorSpec.capillary(beta=0.5, gamma=1.0 + 0.5j)
    d = greens.build_dispersion(spec)
    ev = greens.GreensEvaluator(d)
    got = ev.eval_GS(1.0)
    ref = 0.0
    for rho_j, c_j in zip(d.roots, d.residues):
        # W(rho_j, 1) from the independent quadrature oracle
        ref += c_j * rho_j * oracles.resolvent_hankel_transform(rho_j, 1.0)
    assert abs(got - ref) <= 1e-6 * abs(ref)


def test_gs_dissipative_cubic_decay():
    spec = greens.SurfaceOperatorSpec.capillary(beta=0.5, gamma=1.0 + 0.5j)
    d = greens.build_dispersion(spec)
    assert d.dissipative
    ev = greens.GreensEvaluator(d)
    # radii large enough that exp(-|Im rho|_min r) << r^-3 for this spec
    ratio = abs(ev.eval_GS(240.0)) / abs(ev.eval_GS(120.0))
    assert abs(ratio - (120.0 / 240.0) ** 3) <= 0.15 * (120.0 / 240.0) ** 3
    # and the residue sum over 1/rho_j fixes the universal tail amplitude
    m_neg1 = np.sum(d.residues / d.roots)
    tail = abs(m_neg1) / (2 * np.pi * 120.0 ** 3)
    assert abs(abs(ev.eval_GS(120.0)) - tail) <= 0.05 * tail


def test_gs_outgoing_tail_dominance():
    d = greens.build_dispersion(CAP)
    ev = greens.GreensEvaluator(d)
    i1 = d.outgoing_root_index
    rho1 = d.roots[i1]
    c1 = d.residues[i1]
    r = 60.0 / rho1.real
    from wavepatch import specfun
    tail = 0.5j * c1 * rho1 ** 2 * specfun.cyl_bessel("H1", 0, rho1 * r).value
    assert abs(ev.eval_GS(r) - tail) <= 1e-2 * abs(tail)


def test_gphi_is_half_p_of_laplacian_gs():
    # G_phi = (1/2) p(-Lap) G_S, radial Laplacian from the derivative tables
    for spec in (CAP, FLEX):
        d = greens.build_dispersion(spec)
        ev = greens.GreensEvaluator(d)
        r = 2.0
        tab = ev.radial_table_GS(np.array([r]), kmax=4)
        lap = tab[2] + tab[1] / r
        bilap = tab[4] + 2 * tab[3] / r - tab[2] / r ** 2 + tab[1] / r ** 3
        if spec.d_p == 1:
            gamma, beta = spec.coefficients
            val = 0.5 * (-beta * lap + gamma * tab[0])
        else:
            gamma, _, alpha = spec.coefficients
            val = 0.5 * (alpha * bilap + gamma * tab[0])
        gphi = ev.eval_Gphi(r)
        assert abs(val[0] - gphi) <= 1e-7 * max(abs(gphi), 1.0)


def test_capillary_small_r_regularity():
    d = greens.build_dispersion(CAP)
    ev = greens.GreensEvaluator(d)
    beta = 0.5
    vals = []
    for r in [1e-2, 1e-4, 1e-6]:
        tab = ev.radial_table_GS(np.array([r]), kmax=1)
        # d/dr [G_S + (1/(pi beta)) log r]; the log coefficient of G_S is
        # -m_2/(2 pi) = -1/(pi beta) (verified against the transform oracle)
        vals.append(abs(tab[1][0] - (2 / beta) * (-1 / (2 * np.pi)) / r))
    assert vals[1] <= 2 * vals[0] + 1.0
    assert vals[2] <= 2 * vals[0] + 1.0


def test_flexural_small_r_regularity():
    d = greens.build_dispersion(FLEX)
    ev = greens.GreensEvaluator(d)
    alpha = 1.5
    vals = []
    for r in [1e-2, 1e-3, 1e-4]:
        tab = ev.radial_table_GS(np.array([r]), kmax=3)
        # third derivative of G_S - (2/alpha) r^2 log(r)/(8 pi);
        # d^3/dr^3 [r^2 log r] = 2/r
        gb3 = (2 / r) / (8 * np.pi)
        vals.append(abs(tab[3][0] - (2 / alpha) * gb3))
    assert vals[1] <= 2 * vals[0] + 1.0
    assert vals[2] <= 2 * vals[0] + 1.0


def test_kernel_split_matches_direct_and_oracle():
    for spec in (CAP, FLEX):
        d = greens.build_dispersion(spec)
        ev = greens.GreensEvaluator(d)
        rs = ev.r_split
        # near the split radius the direct special-function path is reliable
        for frac in [0.3, 0.7, 0.99]:
            r = frac * rs
            direct = greens._radial_direct(ev, 1, np.array([r]), 0)[0][0]
            split = greens._radial_split(ev, 1, np.array([r]), 0)[0][0]
            assert abs(direct - split) <= 1e-10 * max(abs(direct), 1.0)
        # deep inside, compare against the arbitrary-precision oracle
        for r in [1e-4 * rs, 1e-2 * rs]:
            ref = 0
            for j, (rho_j, c_j) in enumerate(zip(d.roots, d.residues)):
                if j == d.outgoing_root_index:
                    t = (-(rho_j / 4) * oracles.struve_k_oracle(0, rho_j * r)
                         + 0.5j * rho_j * oracles.bessel_oracle("H1", 0, rho_j * r))
                else:
                    t = (rho_j / 4) * oracles.struve_k_oracle(0, -rho_j * r)
                ref += c_j * rho_j * t
            got = ev.eval_GS(r)
            assert abs(got - ref) <= 1e-10 * max(abs(ref), 1.0), (spec.d_p, r)


def test_eval_derivs_consistency_and_symmetry():
    d = greens.build_dispersion(FLEX)
    ev = greens.GreensEvaluator(d)
    dx = np.array([0.7, -0.4])
    g0 = ev.eval_derivs("GS", dx, (0, 0))
    assert abs(g0 - ev.eval_GS(np.hypot(*dx))) <= 1e-13 * abs(g0)
    # parity under dx -> -dx
    for k in [(1, 0), (0, 1), (2, 1), (3, 0), (2, 2), (4, 0), (1, 1)]:
        a = ev.eval_derivs("Gphi", dx, k)
        b = ev.eval_derivs("Gphi", -dx, k)
        sign = (-1) ** (k[0] + k[1])
        assert abs(a - sign * b) <= 1e-12 * max(abs(a), 1e-12)


def test_eval_derivs_first_vs_fd():
    d = greens.build_dispersion(CAP)
    ev = greens.GreensEvaluator(d)
    dx = np.array([0.7, -0.4])
    h = 1e-6
    for axis, k in [(0, (1, 0)), (1, (0, 1))]:
        e = np.zeros(2)
        e[axis] = h
        fd = (ev.eval_GS(np.linalg.norm(dx + e))
              - ev.eval_GS(np.linalg.norm(dx - e))) / (2 * h)
        got = ev.eval_derivs("GS", dx, k)
        assert abs(got - fd) <= 1e-7


def test_bilaplacian_identity_flexural():
    # Lap^2 G_S = (2/alpha)(G_phi - (gamma/2) G_S), via Cartesian 4th derivs
    d = greens.build_dispersion(FLEX)
    ev = greens.GreensEvaluator(d)
    r = 1.5
    dx = np.array([r, 0.0])
    bilap = (ev.eval_derivs("GS", dx, (4, 0))
             + 2 * ev.eval_derivs("GS", dx, (2, 2))
             + ev.eval_derivs("GS", dx, (0, 4)))
    rhs = (2 / 1.5) * (ev.eval_Gphi(r) - (-0.1 / 2) * ev.eval_GS(r))
    assert abs(bilap - rhs) <= 1e-7 * max(abs(rhs), 1.0)
    # and the same value from the moment-weighted radial route
    f5 = ev.radial_table(5, np.array([r]), 0)[0][0]
    assert abs(bilap - f5) <= 1e-7 * max(abs(f5), 1.0)


def test_radiation_residual():
    d = greens.build_dispersion(CAP)
    ev = greens.GreensEvaluator(d)
    res50 = abs(ev.radiation_residual(50.0)) * np.sqrt(50.0)
    res200 = abs(ev.radiation_residual(200.0)) * np.sqrt(200.0)
    assert res200 < res50

    spec = greens.SurfaceOperatorSpec.capillary(beta=0.5, gamma=1 + 0.5j)
    evd = greens.GreensEvaluator(greens.build_dispersion(spec))
    with pytest.raises(NotApplicableError):
        evd.radiation_residual(10.0)


def test_pure_hankel_term_radiation_decay():
    # the outgoing term alone has residual ~ r^{-3/2}
    from wavepatch import specfun
    d = greens.build_dispersion(CAP)
    i1 = d.outgoing_root_index
    rho1, c1 = d.roots[i1], d.residues[i1]

    def pure(r):
        return 0.5j * c1 * rho1 ** 2 * specfun.cyl_bessel("H1", 0, rho1 * r).value

    def dpure(r):
        return 0.5j * c1 * rho1 ** 3 * (-specfun.cyl_bessel("H1", 1, rho1 * r).value)

    scaled = []
    for r in [100.0, 200.0, 400.0]:
        res = dpure(r) - 1j * rho1 * pure(r)
        scaled.append(abs(res) * r ** 1.5)
    assert abs(scaled[1] / scaled[0] - 1) < 0.25
    assert abs(scaled[2] / scaled[0] - 1) < 0.25


def test_domain_errors():
    d = greens.build_dispersion(CAP)
    ev = greens.GreensEvaluator(d)
    with pytest.raises(DomainError):
        ev.eval_GS(0.0)
    with pytest.raises(DomainError):
        ev.eval_GS(-1.0)
    with pytest.raises(DomainError):
        ev.eval_derivs("GS", np.zeros(2), (1, 0))
