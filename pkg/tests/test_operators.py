"""Model coefficients, operators L / L*, and the closed-form constants."""

import math

import numpy as np
import pytest

from hopflyap.interval import Interval
from hopflyap.ivarray import CArr, IArr
from hopflyap.operators import (
    EmbeddingConstants,
    InvalidSplitting,
    ModelParams,
    OperatorData,
    apply_L,
    apply_Lstar,
    apply_tilde_delta,
    base_coefficients,
    constant_CV,
    embedding_constants,
    expansion_rate,
    expansion_sup_abs,
    norm_comparisons,
)
from hopflyap.series import ChebFourierSeries, Domain, LaurentSeries, lift_bc

PARAMS = ModelParams(a=1.0, alpha=1.0, beta=1.0, b=3.5, sigma=1.2, r_min=0.75, r_max=1.25)
DATA = OperatorData.from_params(PARAMS)


def series_from(arr, dom=PARAMS.domain):
    return ChebFourierSeries.from_array(np.asarray(arr, dtype=complex), dom)


def f_exact(r, p=PARAMS):
    return p.alpha * r - p.a * r**3 + p.sigma**2 / (2 * r)


def g_exact(r, psi, p=PARAMS):
    return 2 * r**2 * (p.b + math.hypot(p.a, p.b) * np.cos(psi))


def h_exact(r, psi, p=PARAMS):
    return p.alpha - 3 * p.a * r**2 - p.sigma**2 / (2 * r**2) - 2 * r**2 * math.hypot(p.a, p.b) * np.sin(psi)


# ---------------------------------------------------------------------------
# expansion rate
# ---------------------------------------------------------------------------


def test_expansion_rate_values():
    e = expansion_rate(PARAMS)
    v = e.eval(1.0, math.pi / 2)
    expected = 1.0 - 2.0 + math.sqrt(1 + 3.5**2)
    assert v.re.contains(expected) and v.re.width < 1e-12
    assert abs(v.im.mid) < 1e-13

    v0 = e.eval(1.0, 0.0)
    assert v0.re.contains(-1.0)


def test_expansion_rate_no_shear():
    p = ModelParams(a=1.0, alpha=1.3, beta=1.0, b=0.0, sigma=1.0, r_min=0.75, r_max=1.25)
    e = expansion_rate(p)
    v = e.eval(1.0, math.pi / 2)
    assert v.re.contains(p.alpha - 1.0)  # alpha - 2 + 1


def test_expansion_sign_structure():
    # Theorem-scale parameters: e takes both signs
    p = ModelParams(a=1.0, alpha=1.0, beta=1.0, b=3.6, sigma=1.3, r_min=0.5, r_max=1.5)
    e = expansion_rate(p)
    vmax = e.eval(1.0, math.pi / 2).re
    vmin = e.eval(1.5, -math.pi / 2).re
    assert vmax.lo > 0 and vmin.hi < 0
    sup = expansion_sup_abs(p)
    assert sup.hi >= abs(vmin.lo)


# ---------------------------------------------------------------------------
# operator applications
# ---------------------------------------------------------------------------


def test_tilde_delta_constant():
    u = series_from([[3.0]])
    out, err = apply_tilde_delta(u, DATA)
    assert np.max(out.coeffs.mag()) < 1e-300
    assert err.hi == 0.0


def test_tilde_delta_radial_no_tail():
    u = series_from(np.array([[0.1], [0.2], [0.3]]))
    out, err = apply_tilde_delta(u, DATA)
    assert err.hi == 0.0  # no psi dependence, the 1/r^2 channel never fires


def test_tilde_delta_fourier_tail_bound():
    arr = np.zeros((3, 3), dtype=complex)
    arr[2, 2] = 0.5  # T_2 e^{i psi}
    u = series_from(arr)
    out, err = apply_tilde_delta(u, DATA)
    _, rho2 = DATA.inv_table.get(2)
    t2norm = series_from(np.array([[0], [0], [0.5]])).norm_L2()
    assert 0 < err.hi <= 4.0 * rho2.hi * t2norm.hi * (1 + 1e-9) + 1e-300
    # value check at a sample point: tilde-delta of T2(r) e^{i psi}
    r, psi = 1.1, 0.7
    t = (2 * r - 2.0) / 0.5
    w = out.eval(r, psi)
    ex_rr = 4.0 * (2 / 0.5) ** 2 * np.exp(1j * psi)  # T2'' = 4, (dt/dr)^2 = 16
    ex = ex_rr + (4 / r**2) * (-1) * (2 * t**2 - 1) * np.exp(1j * psi)
    assert w.re.lo - err.hi <= ex.real <= w.re.hi + err.hi
    assert w.im.lo - err.hi <= ex.imag <= w.im.hi + err.hi


def test_apply_L_constant_zero():
    u = series_from([[2.5]])
    out, err = apply_L(u, DATA)
    assert np.max(out.coeffs.mag()) < 1e-300 and err.hi == 0.0


def test_apply_Lstar_constant_is_minus_h():
    c = 2.0
    u = series_from([[c]])
    out, err = apply_Lstar(u, DATA)
    assert err.hi > 0  # h carries a 1/r^2 channel
    for r in (0.8, 1.0, 1.2):
        for psi in (0.0, 1.0, 2.5):
            v = out.eval(r, psi)
            ex = -c * h_exact(r, psi)
            assert v.re.lo - err.hi - 1e-9 <= ex <= v.re.hi + err.hi + 1e-9


def test_adjointness_on_lifted_functions():
    rng = np.random.default_rng(0)
    for _ in range(5):
        ured = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
        vred = rng.normal(size=(5, 3)) + 1j * rng.normal(size=(5, 3))
        u = lift_bc(CArr.thin(ured), PARAMS.domain)
        v = lift_bc(CArr.thin(vred), PARAMS.domain)
        Lu, eu = apply_L(u, DATA)
        Lsv, ev = apply_Lstar(v, DATA)
        lhs = Lu.inner_L2(v).re
        rhs = u.inner_L2(Lsv).re
        slack = (
            eu.hi * v.norm_L2().hi + ev.hi * u.norm_L2().hi + 1e-10
        )
        assert lhs.lo - slack <= rhs.hi and rhs.lo - slack <= lhs.hi


def test_V_bound_against_CV():
    # || V u ||_L2 <= C_V || grad~ u ||_L2 on float samples
    rng = np.random.default_rng(1)
    CV = constant_CV(DATA).hi
    nr, npsi = 60, 48
    x, w = np.polynomial.legendre.leggauss(nr)
    r = 0.25 * x + 1.0
    wr = w * 0.5
    psi = 2 * np.pi * np.arange(npsi) / npsi
    R, P = np.meshgrid(r, psi, indexing="ij")
    for _ in range(6):
        red = rng.normal(size=(6, 5)) + 1j * rng.normal(size=(6, 5))
        u = lift_bc(CArr.thin(red), PARAMS.domain)
        ur = _eval_float(u.d_dr(), R, P)
        up = _eval_float(u.d_dpsi(), R, P)
        Vu = f_exact(R) * ur + g_exact(R, P) * up
        grad = np.abs(ur) ** 2 + np.abs(2 / R * up) ** 2
        nv = np.sqrt(np.sum(np.abs(Vu) ** 2 * wr[:, None]) / npsi)
        ng = np.sqrt(np.sum(grad * wr[:, None]) / npsi)
        assert nv <= CV * ng * 1.0001


def _eval_float(s: ChebFourierSeries, R, P):
    c = s.coeffs.mid()
    t = (2 * R - (s.domain.r_max + s.domain.r_min)) / (s.domain.r_max - s.domain.r_min)
    out = np.zeros_like(R, dtype=complex)
    N = s.N
    for idx in range(2 * N - 1):
        n = idx - (N - 1)
        cc = c[:, idx].copy()
        cc[1:] *= 2.0
        out += np.polynomial.chebyshev.chebval(t, cc) * np.exp(1j * n * P)
    return out


def test_h_consistency_closed_form():
    # structural h (= f' + g_psi) matches the closed form on a grid
    u = series_from([[1.0]])
    out, err = apply_Lstar(u, DATA)  # -h
    for r in np.linspace(0.76, 1.24, 7):
        for psi in np.linspace(0, 2 * np.pi, 9):
            v = out.eval(r, psi)
            assert v.re.lo - err.hi - 1e-9 <= -h_exact(r, psi) <= v.re.hi + err.hi + 1e-9


def test_h_inf_and_sup():
    h0 = DATA.h_inf()
    grid_min = min(
        h_exact(r, psi)
        for r in np.linspace(0.75, 1.25, 200)
        for psi in (math.pi / 2, -math.pi / 2, 0.3)
    )
    assert h0.lo <= grid_min + 1e-12
    assert h0.hi >= grid_min - 1e-3  # enclosure is reasonably sharp
    hs = DATA.h_sup_abs()
    grid_max = max(
        abs(h_exact(r, psi))
        for r in np.linspace(0.75, 1.25, 200)
        for psi in (math.pi / 2, -math.pi / 2)
    )
    assert hs.hi >= grid_max - 1e-12
    assert hs.hi <= grid_max * 1.01 + 1e-6


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def test_constant_CV_example():
    CV = constant_CV(DATA)
    # dense-grid oracle
    rr = np.linspace(0.75, 1.25, 4000)
    fmax = np.max(np.abs(f_exact(rr)))
    gmax = np.max(rr**3 * (3.5 + math.hypot(1, 3.5)))
    oracle = math.sqrt(fmax**2 + gmax**2)
    assert CV.hi >= oracle - 1e-9
    assert CV.hi <= oracle * 1.05
    assert abs(oracle - 14.0) < 0.1


def test_constant_CV_no_drift():
    dom = Domain(0.75, 1.25)
    data = OperatorData.constant_coefficient(dom, sigma=1.2)
    assert constant_CV(data).hi == 0.0


def test_CV_monotone_domain():
    small = OperatorData.from_params(PARAMS)
    big = OperatorData.from_params(
        ModelParams(a=1.0, alpha=1.0, beta=1.0, b=3.5, sigma=1.2, r_min=0.6, r_max=1.4)
    )
    assert constant_CV(big).hi >= constant_CV(small).hi


def test_embedding_constants():
    xi2 = Interval.point(0.09)
    emb = embedding_constants(PARAMS, xi2)
    assert emb.gamma1.contains(1.1548) and emb.gamma2.contains(0.22361)
    assert emb.C0.contains(math.sqrt(math.pi)) and emb.C0.width < 1e-12
    assert emb.m1.contains(1.0)
    m2 = max(1.25**2 / 4, (0.75**2 + 1.25**2) / (2 * 0.75**2))
    assert emb.m2.contains(m2)
    pref = math.sqrt(6 * math.pi * 0.5)
    c0, c1, c2 = emb.C0.mid, emb.C1.mid, emb.C2.mid
    expected = pref * max(c0, c1 * emb.m1.mid, c2 * m2 / math.sqrt(0.09))
    assert abs(emb.upsilon_X_C0.mid - expected) < 1e-9
    l2 = 0.5
    assert abs(emb.upsilon_Xradial_C1.mid - math.sqrt(l2 / math.tanh(l2)) * max(1, 1 / math.sqrt(0.09))) < 1e-9


def test_norm_comparisons():
    nc = norm_comparisons(PARAMS)
    assert nc["nabla_lo"].contains(1.0)  # min(2/1.25, 1) = 1
    assert nc["nabla_hi"].contains(2 / 0.75)
    p2 = ModelParams(a=1.0, alpha=1.0, beta=1.0, b=3.6, sigma=1.3, r_min=0.5, r_max=1.5)
    nc2 = norm_comparisons(p2)
    assert nc2["delta_hi"].contains(16.0)  # max(4/0.25, 2*2.25/2.5) = 16


def test_base_coefficients_example():
    s = base_coefficients(
        DATA,
        "L",
        lambda_bar=-27.0,
        norm_ubar_sq=Interval.point(1.0),
        norm_Astar_ubar=Interval.point(3.0),
        eta_L=0.5,
    )
    assert abs(s.s2 - 0.5 * 1.2**4 / 4) < 1e-12
    assert abs(s.s_lambda - 0.5) < 1e-12
    assert s.s1 > 0


def test_base_coefficients_invalid():
    with pytest.raises(InvalidSplitting):
        base_coefficients(
            DATA, "L", lambda_bar=-27.0, norm_ubar_sq=Interval.point(1.0),
            norm_Astar_ubar=Interval.point(3.0), eta_L=1.0,
        )
    with pytest.raises(InvalidSplitting):
        base_coefficients(
            DATA, "Lstar", lambda_bar=-27.0, norm_ubar_sq=Interval.point(1.0),
            norm_Astar_ubar=Interval.point(3.0), eta_L=0.6, eta_L0=0.5,
        )


def test_base_coefficients_lstar_has_h_penalty():
    sL = base_coefficients(
        DATA, "L", lambda_bar=-27.0, norm_ubar_sq=Interval.point(1.0),
        norm_Astar_ubar=Interval.point(3.0),
    )
    sS = base_coefficients(
        DATA, "Lstar", lambda_bar=-27.0, norm_ubar_sq=Interval.point(1.0),
        norm_Astar_ubar=Interval.point(3.0), eta_L=0.5, eta_L0=0.25,
    )
    assert sS.s0 < sL.s0  # the ||h||^2 term pushes the base down
    assert sS.s2 < sL.s2


def test_z_constraints_weights():
    from hopflyap.operators import base_coefficients as _bc

    cmin, cmax = DATA.z_constraints(s=1.0, s2_base=Interval.point(0.2592), which="L")
    # at s=1 the u'' weight is sigma^2/2 and the drift weight is f(r_end)
    assert cmin.w2.contains(1.2**2 / 2)
    assert cmin.w1.contains(f_exact(0.75))
    assert cmax.w1.contains(f_exact(1.25))
    cminS, _ = DATA.z_constraints(s=1.0, s2_base=Interval.point(0.2592), which="Lstar")
    assert cminS.w1.contains(-f_exact(0.75))
    cmin0, _ = DATA.z_constraints(s=0.0, s2_base=Interval.point(0.2592), which="L")
    assert cmin0.w1.contains(0.0) and cmin0.w2.contains(2 * 0.2592 / 1.2**2)
