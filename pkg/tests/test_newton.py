"""Newton-Kantorovich validation: constants, radii and the manufactured solution."""

import math

import numpy as np
import pytest

from hopflyap.interval import PI, Interval
from hopflyap.ivarray import CArr
from hopflyap.newton import (
    ContractionFailed,
    NonRealApproxEigenvalue,
    ThetaXiViolation,
    ValidationConfig,
    approximate_eigenpair,
    kappa_from_kappa0,
    newton_kantorovich,
    residual_delta,
    validate_eigenpair,
)
from hopflyap.operators import ModelParams, OperatorData
from hopflyap.series import Domain

DOM = Domain(0.75, 1.25)
PARAMS = ModelParams(a=1.0, alpha=1.0, beta=1.0, b=3.5, sigma=1.2, r_min=0.75, r_max=1.25)


# ---------------------------------------------------------------------------
# newton_kantorovich
# ---------------------------------------------------------------------------


def test_nk_closed_form():
    rho = newton_kantorovich(Interval(0.0, 1e-4), Interval(0.0, 10.0), gamma=1.0)
    t = 2 * 100 * 1e-4
    expected = (1 - math.sqrt(1 - t)) / 10.0
    assert rho.hi >= expected and rho.hi <= expected * (1 + 1e-10)


def test_nk_zero_delta():
    assert newton_kantorovich(Interval(0.0, 0.0), Interval(0.0, 10.0)).hi == 0.0


def test_nk_contraction_failure():
    with pytest.raises(ContractionFailed):
        newton_kantorovich(Interval(0.0, 1.0), Interval(0.0, 10.0))


def test_nk_monotone_in_delta():
    k = Interval(0.0, 5.0)
    rhos = [newton_kantorovich(Interval(0.0, d), k).hi for d in (1e-8, 1e-6, 1e-4, 1e-3)]
    assert all(a <= b for a, b in zip(rhos, rhos[1:]))
    with pytest.raises(ContractionFailed):
        newton_kantorovich(Interval(0.0, 1.0 / (2 * 25.0) + 1e-6), k)


# ---------------------------------------------------------------------------
# kappa lift
# ---------------------------------------------------------------------------


def test_kappa_lift_closed_form_example():
    # C_V = 0, sigma = sqrt(2), lambda_bar = 0, ||u|| = 1, theta = 1, xi2 = 0.25
    data = OperatorData.constant_coefficient(DOM, sigma=math.sqrt(2.0))
    kappa, k1, k2 = kappa_from_kappa0(
        Interval(0.0, 1.0), data, "L", lambda_bar=0.0,
        norm_ubar=Interval.point(1.0), theta=1.0, xi2=Interval.point(0.25),
    )
    # kappa1 = (0 + sqrt(0 + 2*2*1*1))/2 = 1; kappa2 = (2/2)(1 + 0 + 0) = 1
    assert abs(k1.hi - 1.0) < 1e-12
    assert abs(k2.hi - 1.0) < 1e-12
    assert abs(kappa.hi - math.sqrt(5.0)) < 1e-10  # sqrt((1+1+0.5)/0.5)


def test_kappa_lift_theta_xi_violation():
    data = OperatorData.constant_coefficient(DOM, sigma=1.0)
    with pytest.raises(ThetaXiViolation):
        kappa_from_kappa0(
            Interval(0.0, 1.0), data, "L", lambda_bar=0.0,
            norm_ubar=Interval.point(1.0), theta=1.0, xi2=Interval.point(1.0),
        )


def test_default_xi2_always_admissible():
    # xi2 = sigma^4/(16||u||^2), theta=1: the condition value is exactly 1/2
    for sigma in (0.7, 1.2, 2.5):
        data = OperatorData.constant_coefficient(DOM, sigma=sigma)
        xi2 = data.sigma2.sqr() / 16.0
        kappa, _, _ = kappa_from_kappa0(
            Interval(0.0, 2.0), data, "L", lambda_bar=-1.0,
            norm_ubar=Interval.point(1.0), theta=1.0, xi2=xi2,
        )
        assert kappa.hi > 0


# ---------------------------------------------------------------------------
# residual delta
# ---------------------------------------------------------------------------


def test_delta_of_zero_pair_is_one():
    data = OperatorData.constant_coefficient(DOM, sigma=1.0)
    z = CArr.zeros((4, 3))
    d = residual_delta(z, 0.0, data, "L")
    assert d.contains(1.0) and d.hi < 1.0 + 1e-12


def test_delta_scaling_in_first_component():
    data = OperatorData.from_params(PARAMS)
    ubar, lam, _, _ = approximate_eigenpair(data, "L", K=16, N=2)
    d1 = residual_delta(ubar, lam, data, "L")
    # scaling u by 2 doubles the operator residual and shifts the normalization
    u2 = ubar * CArr._coerce(Interval.point(2.0)).reshape(())
    d2 = residual_delta(u2, lam, data, "L")
    assert d2.hi >= 2.999  # |<2u,2u> - 1| = 3 dominates the scaled residual


def test_approximate_eigenpair_quality():
    data = OperatorData.from_params(PARAMS)
    ubar, lam, resid, radial = approximate_eigenpair(data, "L", K=24, N=2)
    assert radial
    assert lam < 0
    d = residual_delta(ubar, lam, data, "L")
    assert d.hi < 1e-6  # spectral accuracy at K=24
    # normalized
    from hopflyap.series import gram

    nrm = gram(ubar.reshape(1, *ubar.shape), ubar.reshape(1, *ubar.shape))[0, 0].item().re
    assert abs(nrm.mid - 1.0) < 1e-10


def test_approximate_eigenpair_lstar_matches_L():
    data = OperatorData.from_params(PARAMS)
    _, lamL, _, _ = approximate_eigenpair(data, "L", K=20, N=6)
    ubar, lamS, resid, radial = approximate_eigenpair(data, "Lstar", K=20, N=6)
    assert not radial
    assert abs(lamL - lamS) < 0.05 * abs(lamL)  # same escape rate, both discretized


def test_nonreal_eigenvalue_guard():
    with pytest.raises(NonRealApproxEigenvalue):
        from hopflyap.newton import _realify

        _realify(1.0 + 1e-3j, 1e-8)


# ---------------------------------------------------------------------------
# full validation on the manufactured constant-coefficient problem
# ---------------------------------------------------------------------------


def test_validate_manufactured_solution():
    """The exact radial pair sin(pi (r - r_min)/l2), lambda = -(pi/l2)^2 sigma^2/2.

    The validated ball must contain the exact pair: the certified eigenvalue
    enclosure contains the exact eigenvalue, and the exact (normalized)
    eigenfunction stays within rho of ubar in L2.
    """
    sigma = 1.0
    data = OperatorData.constant_coefficient(DOM, sigma=sigma, cpsi0=25.0)
    cfg = ValidationConfig(K=40, N=2)
    pair = validate_eigenpair(data, "L", cfg)
    assert pair.rho.hi <= 1e-6
    assert pair.radial

    lam_exact = -(PI / DOM.length).sqr() * Interval.point(sigma).sqr() * 0.5
    enc = pair.eigenvalue_enclosure
    assert enc.lo <= lam_exact.lo and lam_exact.hi <= enc.hi

    # eigenfunction containment: the unique zero with <u, ubar> = 1 is
    # u_exact / <u_exact, ubar>; compare on a fine grid in L2
    rs = np.linspace(DOM.r_min, DOM.r_max, 4001)
    exact = np.sin(math.pi * (rs - DOM.r_min) / (DOM.r_max - DOM.r_min))
    t = (2 * rs - (DOM.r_min + DOM.r_max)) / (DOM.r_max - DOM.r_min)
    c = pair.u_bar.coeffs.mid()[:, pair.u_bar.N - 1].real.copy()
    c[1:] *= 2
    ub_vals = np.polynomial.chebyshev.chebval(t, c)
    inner = np.trapezoid(exact * ub_vals, rs) / (DOM.r_max - DOM.r_min)
    assert abs(inner) > 0.1
    target = exact / inner
    l2_dist = math.sqrt(np.trapezoid((target - ub_vals) ** 2, rs) / (DOM.r_max - DOM.r_min))
    assert l2_dist <= 2 * pair.rho.hi + 1e-9

    # certified constants are coherent
    assert pair.delta.hi < 1e-9
    assert pair.kappa.hi >= pair.kappa0.hi > 0
