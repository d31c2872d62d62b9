"""Positivity, pairing and the rigorous Furstenberg-Khasminskii enclosure."""

import math

import numpy as np
import pytest

from hopflyap.certify import (
    CertifiedLyapunov,
    NormalizationFailed,
    PairingFailed,
    PositivityFailed,
    check_pairing,
    check_positivity,
    lyapunov_enclosure,
)
from hopflyap.interval import Interval
from hopflyap.ivarray import CArr
from hopflyap.newton import ValidatedEigenpair, ValidationConfig, validate_eigenpair
from hopflyap.operators import ModelParams, OperatorData, embedding_constants, expansion_rate
from hopflyap.series import ChebFourierSeries, Domain, lift_bc

DOM = Domain(0.75, 1.25)
PARAMS = ModelParams(a=1.0, alpha=1.0, beta=1.0, b=3.5, sigma=1.2, r_min=0.75, r_max=1.25)


def fake_pair(series: ChebFourierSeries, rho=1e-12, radial=True, lam=-1.0, xi2=0.09):
    from hopflyap.series import gram

    emb = embedding_constants(series.domain, Interval.point(xi2))
    nrm2 = gram(series.coeffs.reshape(1, *series.coeffs.shape), series.coeffs.reshape(1, *series.coeffs.shape))[0, 0].item().re
    return ValidatedEigenpair(
        u_bar=series,
        lambda_bar=lam,
        which="L",
        radial=radial,
        rho=Interval(0.0, rho),
        delta=Interval(0.0, rho),
        kappa0=Interval(0.0, 1.0),
        kappa=Interval(0.0, 1.0),
        gamma=1.0,
        theta=1.0,
        xi2=Interval.point(xi2),
        norm_ubar=Interval(max(nrm2.lo, 0.0), nrm2.hi).sqrt(),
        embedding=emb,
        base_coeffs=None,
        homotopy_delta=None,
        homotopy_S=None,
        seconds=0.0,
    )


def bump_series(sign=1.0):
    red = np.zeros((1, 1), dtype=complex)
    red[0, 0] = -sign  # lift of u2 = -1 gives 4 - 4 t^2 >= 0 (positive bump)
    return lift_bc(CArr.thin(red), DOM)


# ---------------------------------------------------------------------------
# positivity
# ---------------------------------------------------------------------------


def test_positivity_positive_bump():
    pair = fake_pair(bump_series(+1.0), rho=1e-9)
    cert = check_positivity(pair, epsilon=0.05 * 0.5)
    assert cert.interior_margin > 0
    assert cert.strip_margin_left > 0
    assert cert.strip_margin_right < 0


def test_positivity_interior_sign_change():
    pair = fake_pair(bump_series(-1.0), rho=1e-9)  # negative bump
    with pytest.raises(PositivityFailed):
        check_positivity(pair, epsilon=0.025)


def test_positivity_epsilon_zero():
    pair = fake_pair(bump_series(+1.0), rho=1e-9)
    with pytest.raises(PositivityFailed) as err:
        check_positivity(pair, epsilon=0.0)
    assert err.value.region == "strip"


def test_positivity_requires_radial():
    pair = fake_pair(bump_series(+1.0), rho=1e-9, radial=False)
    with pytest.raises(PositivityFailed):
        check_positivity(pair)


def test_positivity_fails_for_large_rho():
    # the C0 error swallows the bump
    pair = fake_pair(bump_series(+1.0), rho=10.0)
    with pytest.raises(PositivityFailed):
        check_positivity(pair, epsilon=0.025)


# ---------------------------------------------------------------------------
# pairing
# ---------------------------------------------------------------------------


def test_pairing_passes():
    one = ChebFourierSeries.from_array(np.array([[1.0]], dtype=complex), DOM)
    a = fake_pair(one, rho=0.1)
    b = fake_pair(one, rho=0.1)
    cert = check_pairing(a, b)
    assert cert.inner_lower > cert.threshold
    assert abs(cert.inner_lower - 1.0) < 1e-9
    assert abs(cert.threshold - 0.21) < 1e-9


def test_pairing_orthogonal_fails():
    one = ChebFourierSeries.from_array(np.array([[1.0]], dtype=complex), DOM)
    arr = np.zeros((1, 3), dtype=complex)
    arr[0, 2] = 1.0  # e^{i psi}: orthogonal to constants
    osc = ChebFourierSeries.from_array(arr, DOM)
    with pytest.raises(PairingFailed):
        check_pairing(fake_pair(one, rho=1e-3), fake_pair(osc, rho=1e-3))


def test_pairing_zero_radius_limit():
    eps = 1e-6
    one = ChebFourierSeries.from_array(np.array([[eps]], dtype=complex), DOM)
    other = ChebFourierSeries.from_array(np.array([[1.0]], dtype=complex), DOM)
    cert = check_pairing(fake_pair(one, rho=0.0), fake_pair(other, rho=0.0))
    assert cert.inner_lower > 0


# ---------------------------------------------------------------------------
# Lyapunov enclosure
# ---------------------------------------------------------------------------


def quad_mean(f, dom, nr=120, npsi=96):
    x, w = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (dom.r_max - dom.r_min) * x + 0.5 * (dom.r_max + dom.r_min)
    wr = w * 0.5
    psi = 2 * np.pi * np.arange(npsi) / npsi
    R, P = np.meshgrid(r, psi, indexing="ij")
    return np.sum(f(R, P) * wr[:, None]) / npsi


def eval_float(s: ChebFourierSeries, R, P):
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


def test_lyapunov_enclosure_against_quadrature():
    rng = np.random.default_rng(5)
    eta_red = np.zeros((2, 1), dtype=complex)
    eta_red[0, 0] = -1.0
    eta_s = lift_bc(CArr.thin(eta_red), DOM)
    phi_red = rng.normal(size=(3, 3)) * 0.2 + 0j
    phi_red[0, 1] -= 1.5  # dominant positive-bump radial part
    phi_s = lift_bc(CArr.thin(phi_red.astype(complex)), DOM)
    eta = fake_pair(eta_s, rho=1e-10)
    phi = fake_pair(phi_s, rho=1e-10, radial=False)
    cert = lyapunov_enclosure(
        eta, phi, PARAMS,
        positivity=check_positivity(eta, epsilon=0.025),
        pairing=check_pairing(eta, phi),
    )
    e = expansion_rate(PARAMS)
    num = quad_mean(lambda R, P: eval_float(e, R, P) * eval_float(eta_s, R, P) * eval_float(phi_s, R, P), DOM)
    den = quad_mean(lambda R, P: eval_float(eta_s, R, P) * eval_float(phi_s, R, P), DOM)
    want = (num / den).real
    assert cert.lambda_c.lo - 1e-9 <= want <= cert.lambda_c.hi + 1e-9
    assert abs(0.5 * (cert.numerator.lo + cert.numerator.hi) - num.real) < 1e-10
    assert cert.sign in ("positive", "negative", "indeterminate")


def test_lyapunov_normalization_invariance():
    eta_red = np.zeros((2, 1), dtype=complex)
    eta_red[0, 0] = -1.0
    eta_s = lift_bc(CArr.thin(eta_red), DOM)
    phi_s = lift_bc(CArr.thin(eta_red.copy()), DOM)
    base = lyapunov_enclosure(
        fake_pair(eta_s, rho=1e-9), fake_pair(phi_s, rho=1e-9, radial=False), PARAMS,
        positivity=check_positivity(fake_pair(eta_s, rho=1e-9), epsilon=0.025),
        pairing=check_pairing(fake_pair(eta_s, rho=1e-9), fake_pair(phi_s, rho=1e-9)),
    )
    c = 3.7
    eta2 = ChebFourierSeries(eta_s.coeffs * CArr._coerce(Interval.point(c)).reshape(()), DOM)
    phi2 = ChebFourierSeries(phi_s.coeffs * CArr._coerce(Interval.point(1 / c)).reshape(()), DOM)
    scaled = lyapunov_enclosure(
        fake_pair(eta2, rho=c * 1e-9), fake_pair(phi2, rho=1e-9 / c, radial=False), PARAMS,
        positivity=check_positivity(fake_pair(eta2, rho=c * 1e-9), epsilon=0.025),
        pairing=check_pairing(fake_pair(eta2, rho=c * 1e-9), fake_pair(phi2, rho=1e-9 / c)),
    )
    mid_a = 0.5 * (base.lambda_c.lo + base.lambda_c.hi)
    mid_b = 0.5 * (scaled.lambda_c.lo + scaled.lambda_c.hi)
    assert abs(mid_a - mid_b) <= base.lambda_c.width + scaled.lambda_c.width + 1e-12


def test_lyapunov_normalization_failure():
    one = ChebFourierSeries.from_array(np.array([[1.0]], dtype=complex), DOM)
    arr = np.zeros((1, 3), dtype=complex)
    arr[0, 2] = 1.0
    osc = ChebFourierSeries.from_array(arr, DOM)
    eta = fake_pair(bump_series(), rho=1e-9)
    phi = fake_pair(osc, rho=1e-9, radial=False)
    with pytest.raises(NormalizationFailed):
        lyapunov_enclosure(
            eta, phi, PARAMS,
            positivity=check_positivity(eta, epsilon=0.025),
            pairing=PairingCertificate_dummy(),
        )


def PairingCertificate_dummy():
    from hopflyap.certify import PairingCertificate

    return PairingCertificate(inner_lower=1.0, threshold=0.0)


# ---------------------------------------------------------------------------
# end-to-end on the manufactured self-adjoint problem
# ---------------------------------------------------------------------------


def test_certified_pipeline_manufactured():
    data = OperatorData.constant_coefficient(DOM, sigma=1.0, cpsi0=25.0)
    cfg = ValidationConfig(K=28, N=4)
    eta = validate_eigenpair(data, "L", cfg)
    phi = validate_eigenpair(data, "Lstar", cfg, target=eta.lambda_bar)
    pos = check_positivity(eta)
    pair = check_pairing(eta, phi)
    cert = lyapunov_enclosure(eta, phi, PARAMS, positivity=pos, pairing=pair)
    assert cert.sign in ("positive", "negative")
    # oracle: float quadrature of the same ratio
    e = expansion_rate(PARAMS)
    num = quad_mean(
        lambda R, P: eval_float(e, R, P) * eval_float(eta.u_bar, R, P) * eval_float(phi.u_bar, R, P), DOM
    )
    den = quad_mean(lambda R, P: eval_float(eta.u_bar, R, P) * eval_float(phi.u_bar, R, P), DOM)
    want = (num / den).real
    assert cert.lambda_c.lo - 1e-8 <= want <= cert.lambda_c.hi + 1e-8
    assert cert.lambda0.contains(eta.lambda_bar)
