"""Interval arithmetic: examples, containment, monotonicity, thin exactness."""

import math
import random
from fractions import Fraction

import numpy as np
import pytest

from hopflyap.interval import (
    PI,
    TWO_PI,
    ComplexInterval,
    DomainError,
    EmptyIntersection,
    Interval,
    ZeroInDivisor,
    elem,
)
from hopflyap import ivarray
from hopflyap.ivarray import CArr, IArr, cmatmul, imatmul, interval_cholesky_succeeds, posdef_lower_bound


def I(a, b=None):
    return Interval(float(a), float(a) if b is None else float(b))


# ---------------------------------------------------------------------------
# addition / multiplication / division examples
# ---------------------------------------------------------------------------


def test_add_endpoint_sums():
    r = I(1, 2) + I(3, 4)
    assert (r.lo, r.hi) == (4.0, 6.0)


def test_add_identity():
    r = I(0, 0) + I(-1, 1)
    assert (r.lo, r.hi) == (-1.0, 1.0)


def test_add_tenth_plus_two_tenths():
    # oracle: exact rational sum of the double-precision representations
    x, y = 0.1, 0.2
    exact = Fraction(x) + Fraction(y)
    r = I(x) + I(y)
    assert Fraction(r.lo) <= exact <= Fraction(r.hi)
    assert r.width <= 2 * math.ulp(0.3)


def test_mul_endpoint_products():
    r = I(-1, 2) * I(3, 4)
    assert (r.lo, r.hi) == (-4.0, 8.0)


def test_mul_absorbing_zero():
    r = I(0, 0) * I(-10, 10)
    assert (r.lo, r.hi) == (0.0, 0.0)


def test_mul_positive_case():
    r = I(2, 3) * I(2, 3)
    assert (r.lo, r.hi) == (4.0, 9.0)


def test_div_monotone():
    r = I(1, 2) / I(2, 4)
    assert (r.lo, r.hi) == (0.25, 1.0)


def test_div_zero_in_divisor():
    with pytest.raises(ZeroInDivisor):
        I(1, 2) / I(-1, 1)


def test_div_negative():
    r = I(-6, -3) / I(3, 3)
    assert (r.lo, r.hi) == (-2.0, -1.0)


def test_invalid_construction():
    with pytest.raises(Exception):
        Interval(2.0, 1.0)


# ---------------------------------------------------------------------------
# elementary functions
# ---------------------------------------------------------------------------


def test_sqrt_monotone():
    r = elem(I(4, 9), "sqrt")
    assert (r.lo, r.hi) == (2.0, 3.0)


def test_sqrt_negative_domain():
    with pytest.raises(DomainError):
        I(-2, -1).sqrt()


def test_sin_interior_max():
    r = elem(Interval(0.0, math.pi), "sin")
    assert r.lo >= -1e-15 and r.hi <= 1.0 + 1e-15
    assert r.hi >= 1.0 - 1e-15  # interior max at pi/2 detected
    assert r.lo <= 0.0


def test_sqr_even():
    r = elem(I(-2, 1), "sqr")
    assert (r.lo, r.hi) == (0.0, 4.0)


def test_cos_wraps():
    r = I(0).cos()
    assert r.contains(1.0) and r.width < 1e-14
    wide = Interval(0.0, 100.0).sin()
    assert (wide.lo, wide.hi) == (-1.0, 1.0)


def test_sin_against_mpmath_samples():
    import mpmath

    mpmath.mp.dps = 40
    rng = random.Random(7)
    for _ in range(300):
        a = rng.uniform(-20, 20)
        b = a + rng.uniform(0, 10)
        enc = Interval(a, b).sin()
        for t in (a, b, a + 0.5 * (b - a), a + 0.123 * (b - a)):
            v = float(mpmath.sin(mpmath.mpf(t)))
            assert enc.lo - 1e-15 <= v <= enc.hi + 1e-15


def test_pi_enclosure():
    import mpmath

    mpmath.mp.dps = 50
    assert Fraction(PI.lo) < Fraction(str(mpmath.pi)) < Fraction(PI.hi)
    assert PI.width <= 4 * math.ulp(math.pi)
    assert TWO_PI.contains(2 * math.pi)


# ---------------------------------------------------------------------------
# hull / intersect
# ---------------------------------------------------------------------------


def test_hull():
    r = I(0, 1).hull(I(2, 3))
    assert (r.lo, r.hi) == (0.0, 3.0)


def test_intersect():
    r = I(0, 2).intersect(I(1, 3))
    assert (r.lo, r.hi) == (1.0, 2.0)


def test_intersect_empty():
    with pytest.raises(EmptyIntersection):
        I(0, 1).intersect(I(2, 3))


# ---------------------------------------------------------------------------
# properties: containment, inclusion monotonicity, thin exactness
# ---------------------------------------------------------------------------


def _rand_interval(rng):
    c = rng.uniform(-100, 100)
    w = abs(rng.gauss(0, 1)) * 10 ** rng.randint(-12, 1)
    return Interval(c - w, c + w)


def test_containment_randomized():
    rng = random.Random(42)
    ops = {
        "add": (lambda x, y: x + y, lambda a, b: a + b),
        "sub": (lambda x, y: x - y, lambda a, b: a - b),
        "mul": (lambda x, y: x * y, lambda a, b: a * b),
        "div": (lambda x, y: x / y, lambda a, b: a / b),
    }
    n_checked = 0
    for _ in range(4000):
        x = _rand_interval(rng)
        y = _rand_interval(rng)
        name = rng.choice(list(ops))
        ivop, exop = ops[name]
        if name == "div" and y.lo <= 0 <= y.hi:
            continue
        r = ivop(x, y)
        for _ in range(3):
            a = Fraction(x.lo) + Fraction(rng.random()) * (Fraction(x.hi) - Fraction(x.lo))
            b = Fraction(y.lo) + Fraction(rng.random()) * (Fraction(y.hi) - Fraction(y.lo))
            exact = exop(a, b)
            assert Fraction(r.lo) <= exact <= Fraction(r.hi)
            n_checked += 1
    assert n_checked > 5000


def test_inclusion_monotonicity():
    rng = random.Random(3)
    for _ in range(2000):
        x = _rand_interval(rng)
        y = _rand_interval(rng)
        xp = Interval(x.lo - abs(rng.gauss(0, 1)), x.hi + abs(rng.gauss(0, 1)))
        yp = Interval(y.lo - abs(rng.gauss(0, 1)), y.hi + abs(rng.gauss(0, 1)))
        for op in (lambda u, v: u + v, lambda u, v: u - v, lambda u, v: u * v):
            r, rp = op(x, y), op(xp, yp)
            assert rp.lo <= r.lo and r.hi <= rp.hi
        if not (yp.lo <= 0 <= yp.hi):
            r, rp = x / y, xp / yp
            assert rp.lo <= r.lo and r.hi <= rp.hi


def test_thin_exactness():
    rng = random.Random(11)
    for _ in range(500):
        a = float(rng.randint(-1000, 1000))
        b = float(rng.randint(-1000, 1000))
        assert (I(a) + I(b)).width == 0.0
        assert (I(a) - I(b)).width == 0.0
        assert (I(a) * I(b)).width == 0.0
        if b != 0 and a % b == 0:
            assert (I(a) / I(b)).width == 0.0
    assert (I(2.0).sqr()).width == 0.0
    assert (I(4.0).sqrt()).width == 0.0
    assert I(0.5, 0.5).sqrt().width > 0  # sqrt(1/2) not representable


# ---------------------------------------------------------------------------
# complex intervals
# ---------------------------------------------------------------------------


def test_complex_mul():
    z = ComplexInterval.point(1 + 2j) * ComplexInterval.point(3 - 1j)
    assert z.contains((1 + 2j) * (3 - 1j))
    assert z.re.width < 1e-14 and z.im.width < 1e-14


def test_complex_conj_mag():
    z = ComplexInterval.point(3 + 4j)
    assert z.conj().contains(3 - 4j)
    assert abs(z.mag - 5.0) < 1e-12


# ---------------------------------------------------------------------------
# decimal serialization
# ---------------------------------------------------------------------------


def test_decimal_serialization_outward():
    lo, hi = Interval(0.0097001, 0.0097199).to_decimal_strings(digits=3)
    assert float(lo) <= 0.0097001 and float(hi) >= 0.0097199
    lo, hi = Interval(-1.0 / 3.0, 1.0 / 3.0).to_decimal_strings(digits=4)
    assert float(lo) <= -1.0 / 3.0 <= 1.0 / 3.0 <= float(hi)


# ---------------------------------------------------------------------------
# vectorized kernels
# ---------------------------------------------------------------------------


def test_iarr_matches_scalar_ops():
    rng = np.random.default_rng(0)
    lo = rng.normal(size=200)
    hi = lo + rng.exponential(0.1, size=200)
    lo2 = rng.normal(size=200)
    hi2 = lo2 + rng.exponential(0.1, size=200)
    A, B = IArr(lo, hi), IArr(lo2, hi2)
    for op, sop in [
        (lambda a, b: a + b, lambda a, b: a + b),
        (lambda a, b: a - b, lambda a, b: a - b),
        (lambda a, b: a * b, lambda a, b: a * b),
    ]:
        R = op(A, B)
        for i in range(0, 200, 17):
            r = sop(Interval(lo[i], hi[i]), Interval(lo2[i], hi2[i]))
            assert R.lo[i] <= r.lo + 1e-300 and r.hi <= R.hi[i] + 1e-300


def test_iarr_sum_contains_exact():
    rng = np.random.default_rng(1)
    x = rng.normal(size=1000) * 10.0 ** rng.integers(-8, 8, size=1000)
    s = IArr.thin(x).sum()
    exact = sum(Fraction(v) for v in x)
    assert Fraction(float(s.lo)) <= exact <= Fraction(float(s.hi))


def test_imatmul_contains_exact_product():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(7, 5))
    B = rng.normal(size=(5, 6))
    C = imatmul(IArr.thin(A), IArr.thin(B))
    exact = [[sum(Fraction(A[i, k]) * Fraction(B[k, j]) for k in range(5)) for j in range(6)] for i in range(7)]
    for i in range(7):
        for j in range(6):
            assert Fraction(C.lo[i, j]) <= exact[i][j] <= Fraction(C.hi[i, j])


def test_imatmul_wide_contains_samples():
    rng = np.random.default_rng(3)
    Am = rng.normal(size=(4, 4))
    Bm = rng.normal(size=(4, 4))
    Ar = rng.exponential(0.01, size=(4, 4))
    Br = rng.exponential(0.01, size=(4, 4))
    A = IArr(Am - Ar, Am + Ar)
    B = IArr(Bm - Br, Bm + Br)
    C = imatmul(A, B)
    for _ in range(50):
        As = Am + Ar * rng.uniform(-1, 1, size=(4, 4))
        Bs = Bm + Br * rng.uniform(-1, 1, size=(4, 4))
        P = As @ Bs
        assert np.all(C.lo - 1e-12 <= P) and np.all(P <= C.hi + 1e-12)


def test_cmatmul_contains():
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    C = cmatmul(CArr.thin(A), CArr.thin(B))
    P = A @ B
    assert np.all(C.re.lo <= P.real + 1e-13) and np.all(P.real <= C.re.hi + 1e-13)
    assert np.all(C.im.lo <= P.imag + 1e-13) and np.all(P.imag <= C.im.hi + 1e-13)


def test_interval_cholesky_and_posdef_bound():
    rng = np.random.default_rng(5)
    Q = rng.normal(size=(8, 8))
    M = Q @ Q.T + 8 * np.eye(8)
    assert interval_cholesky_succeeds(IArr.thin(M))
    lam_min = float(np.linalg.eigvalsh(M)[0])
    c = posdef_lower_bound(CArr.thin(M.astype(complex)))
    assert 0 < c.lo <= lam_min
    # indefinite matrix must fail
    N = M - 3 * lam_min * np.eye(8)
    if np.linalg.eigvalsh(N)[0] < -1e-10:
        with pytest.raises(ValueError):
            posdef_lower_bound(CArr.thin(N.astype(complex)))


def test_iarr_recip_and_sqrt():
    A = IArr(np.array([1.0, 4.0]), np.array([2.0, 9.0]))
    R = A.recip()
    assert R.lo[0] <= 0.5 and R.hi[0] >= 1.0
    S = A.sqrt()
    assert S.lo[1] <= 2.0 <= 3.0 <= S.hi[1]
