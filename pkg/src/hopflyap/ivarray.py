"""Vectorized interval arrays and rigorous linear-algebra kernels.

Real interval ndarrays are stored as (lo, hi) float64 pairs.  Elementwise
add/mul use error-free transformations so exactly representable results stay
thin; reductions (sums, matrix products) use floating-point accumulation with
a rigorous a-priori rounding bound (Higham-style), which trades a few ulps of
width for BLAS speed.

Complex interval arrays are rectangular: a pair of real interval arrays.
"""

from __future__ import annotations

import math

import numpy as np

from .interval import Interval, ComplexInterval

_EPS = np.finfo(np.float64).eps  # 2**-52
_U = 0.5 * _EPS  # unit roundoff 2**-53
_TINY = np.finfo(np.float64).tiny
_INF = np.inf


def _dn(x):
    return np.nextafter(x, -_INF)


def _upn(x):
    return np.nextafter(x, _INF)


def _two_sum(a, b):
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


_SPLIT = 134217729.0


def _two_prod(a, b):
    p = a * b
    aa = a * _SPLIT
    ahi = aa - (aa - a)
    alo = a - ahi
    bb = b * _SPLIT
    bhi = bb - (bb - b)
    blo = b - bhi
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    # Dekker's error term is exact only away from overflow/underflow.
    bad = ~np.isfinite(e) | ((p != 0.0) & (np.abs(p) < 1e-290)) | (np.abs(a) > 1e150) | (np.abs(b) > 1e150)
    if np.any(bad):
        e = np.where(bad, np.nan, e)
    return p, e


def _sum_rigorous(x, axis):
    """(lower, upper) bounds of the exact sum of float entries along axis."""
    s = np.sum(x, axis=axis)
    t = np.sum(np.abs(x), axis=axis)
    n = x.shape[axis] if x.ndim else 1
    g = (n * _U) / (1.0 - n * _U) if n * _U < 0.5 else 1.0
    err = _upn(g * _upn(t * (1.0 + 4.0 * _EPS)) + n * 4.0 * _TINY)
    err = np.where(t == 0.0, 0.0, err)  # all-zero summands sum exactly
    return np.where(err == 0.0, s, _dn(s - err)), np.where(err == 0.0, s, _upn(s + err))


class IArr:
    """Real interval ndarray."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        if self.lo.shape != self.hi.shape:
            raise ValueError("shape mismatch")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def thin(x) -> "IArr":
        a = np.asarray(x, dtype=np.float64)
        return IArr(a.copy(), a.copy())

    @staticmethod
    def zeros(shape) -> "IArr":
        z = np.zeros(shape)
        return IArr(z, z.copy())

    @staticmethod
    def from_scalar(s: Interval, shape=()) -> "IArr":
        return IArr(np.full(shape, s.lo), np.full(shape, s.hi))

    def copy(self) -> "IArr":
        return IArr(self.lo.copy(), self.hi.copy())

    # -- queries -----------------------------------------------------------

    @property
    def shape(self):
        return self.lo.shape

    @property
    def ndim(self):
        return self.lo.ndim

    def mid(self):
        return 0.5 * (self.lo + self.hi)

    def rad_ub(self):
        m = self.mid()
        raw = np.maximum(self.hi - m, m - self.lo)
        return np.where(raw == 0.0, 0.0, _upn(raw))

    def mag(self):
        """Elementwise sup |x|."""
        return np.maximum(np.abs(self.lo), np.abs(self.hi))

    def width(self):
        return self.hi - self.lo

    def item(self) -> Interval:
        return Interval(float(self.lo.reshape(-1)[0]), float(self.hi.reshape(-1)[0]))

    def __getitem__(self, idx) -> "IArr":
        return IArr(self.lo[idx], self.hi[idx])

    def __setitem__(self, idx, val: "IArr"):
        self.lo[idx] = val.lo
        self.hi[idx] = val.hi

    def reshape(self, *shape) -> "IArr":
        return IArr(self.lo.reshape(*shape), self.hi.reshape(*shape))

    def transpose(self, *axes) -> "IArr":
        return IArr(self.lo.transpose(*axes), self.hi.transpose(*axes))

    @property
    def T(self) -> "IArr":
        return IArr(self.lo.T, self.hi.T)

    def contains(self, x) -> np.ndarray:
        a = np.asarray(x, dtype=np.float64)
        return (self.lo <= a) & (a <= self.hi)

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x) -> "IArr":
        if isinstance(x, IArr):
            return x
        if isinstance(x, Interval):
            return IArr(np.asarray(x.lo), np.asarray(x.hi))
        return IArr.thin(x)

    def __add__(self, other) -> "IArr":
        o = IArr._coerce(other)
        slo, elo = _two_sum(self.lo, o.lo)
        shi, ehi = _two_sum(self.hi, o.hi)
        lo = np.where((elo < 0) | np.isnan(elo), _dn(slo), slo)
        hi = np.where((ehi > 0) | np.isnan(ehi), _upn(shi), shi)
        return IArr(lo, hi)

    __radd__ = __add__

    def __neg__(self) -> "IArr":
        return IArr(-self.hi, -self.lo)

    def __sub__(self, other) -> "IArr":
        return self + (-IArr._coerce(other))

    def __rsub__(self, other) -> "IArr":
        return IArr._coerce(other) + (-self)

    def __mul__(self, other) -> "IArr":
        o = IArr._coerce(other)
        a, b, c, d = self.lo, self.hi, o.lo, o.hi
        lo = None
        hi = None
        for x, y in ((a, c), (a, d), (b, c), (b, d)):
            p, e = _two_prod(x, y)
            plo = np.where((e < 0) | np.isnan(e), _dn(p), p)
            phi = np.where((e > 0) | np.isnan(e), _upn(p), p)
            lo = plo if lo is None else np.minimum(lo, plo)
            hi = phi if hi is None else np.maximum(hi, phi)
        # exact-zero operands give exact zero products
        zs = (a == 0) & (b == 0)
        zo = (c == 0) & (d == 0)
        z = zs | zo
        if np.any(z):
            lo = np.where(z, 0.0, lo)
            hi = np.where(z, 0.0, hi)
        return IArr(lo, hi)

    __rmul__ = __mul__

    def recip(self) -> "IArr":
        """Elementwise 1/x; every entry must have a sign."""
        if np.any((self.lo <= 0) & (self.hi >= 0)):
            raise ZeroDivisionError("interval entry contains zero")
        lo = _dn(1.0 / self.hi)
        hi = _upn(1.0 / self.lo)
        return IArr(lo, hi)

    def sqrt(self) -> "IArr":
        if np.any(self.hi < 0):
            raise ValueError("sqrt of negative entry")
        lo = _dn(np.sqrt(np.maximum(self.lo, 0.0)))
        hi = _upn(np.sqrt(self.hi))
        return IArr(np.maximum(lo, 0.0), hi)

    def __abs__(self) -> "IArr":
        lo = np.where(self.lo >= 0, self.lo, np.where(self.hi <= 0, -self.hi, 0.0))
        hi = np.maximum(np.abs(self.lo), np.abs(self.hi))
        return IArr(lo, hi)

    def sum(self, axis=None) -> "IArr":
        if axis is None:
            flat = self.reshape(-1)
            return flat.sum(axis=0)
        lo, _ = _sum_rigorous(self.lo, axis)
        _, hi = _sum_rigorous(self.hi, axis)
        return IArr(lo, hi)

    def csum(self, axis: int) -> "IArr":
        """Compensated sum along axis: widths stay at the ulp of the result.

        Costs one vectorized pass per slice of the axis; use for short axes
        where enclosure sharpness matters (the plain `sum` uses a one-shot
        Higham bound proportional to sum |x|).
        """

        def one_side(a):
            a = np.moveaxis(a, axis, 0)
            n = a.shape[0]
            if n == 0:
                return np.zeros(a.shape[1:]), np.zeros(a.shape[1:])
            s = a[0].copy()
            c = np.zeros_like(s)
            eabs = np.zeros_like(s)
            for i in range(1, n):
                s, e = _two_sum(s, a[i])
                c = c + e
                eabs = eabs + np.abs(e)
            t, e2 = _two_sum(s, c)
            slack = np.abs(e2) + 4.0 * n * _EPS * eabs + n * _TINY * (eabs != 0.0)
            return t, slack

        t_lo, sl_lo = one_side(self.lo)
        t_hi, sl_hi = one_side(self.hi)
        lo = np.where(sl_lo == 0.0, t_lo, _dn(t_lo - sl_lo))
        hi = np.where(sl_hi == 0.0, t_hi, _upn(t_hi + sl_hi))
        return IArr(lo, hi)

    def hull(self, other: "IArr") -> "IArr":
        o = IArr._coerce(other)
        return IArr(np.minimum(self.lo, o.lo), np.maximum(self.hi, o.hi))

    def widen(self, eps_abs) -> "IArr":
        e = np.asarray(eps_abs, dtype=np.float64)
        lo = np.where(e == 0.0, self.lo, _dn(self.lo - e))
        hi = np.where(e == 0.0, self.hi, _upn(self.hi + e))
        return IArr(lo, hi)


def _upn_k(x, k):
    for _ in range(k):
        x = _upn(x)
    return x


def _dn_k(x, k):
    for _ in range(k):
        x = _dn(x)
    return x


_PI_LO = np.nextafter(np.pi, -np.inf)
_PI_HI = np.nextafter(np.pi, np.inf)


def iacos(x: IArr) -> IArr:
    """Elementwise enclosure of arccos on [-1, 1] (clipped); monotone decreasing."""
    lo_in = np.clip(x.lo, -1.0, 1.0)
    hi_in = np.clip(x.hi, -1.0, 1.0)
    lo = _dn_k(np.arccos(hi_in), 4)
    hi = _upn_k(np.arccos(lo_in), 4)
    return IArr(np.maximum(lo, 0.0), np.minimum(hi, _PI_HI * 1.0000000000001))


def icos(x: IArr) -> IArr:
    """Elementwise enclosure of cos over interval entries (libm + 4 ulp margin)."""
    # shift by a multiple of 2 pi so the working window is near the origin
    k = np.floor(x.lo / (2.0 * np.pi))
    # y = x - k*2pi, outward (k may be negative: use both products)
    s1 = k * (2.0 * _PI_LO)
    s2 = k * (2.0 * _PI_HI)
    smin = _dn(np.minimum(s1, s2))
    smax = _upn(np.maximum(s1, s2))
    ylo = _dn(x.lo - smax)
    yhi = _upn(x.hi - smin)
    wide = (x.hi - x.lo) >= 2.0 * _PI_LO
    clo = _dn_k(np.minimum(np.cos(ylo), np.cos(yhi)), 4)
    chi = _upn_k(np.maximum(np.cos(ylo), np.cos(yhi)), 4)
    # extrema of cos at multiples of pi inside [ylo, yhi] (conservative inclusion)
    pad = 4.0 * _EPS * np.maximum(np.abs(ylo), np.abs(yhi)) + 1e-300
    m_lo = np.ceil((ylo - pad) / _PI_HI - 1e-12)
    m_hi = np.floor((yhi + pad) / _PI_LO + 1e-12)
    for offs in range(0, 8):
        m = m_lo + offs
        active = m <= m_hi
        cand_lo = _dn(m * _PI_LO)
        cand_hi = _upn(m * _PI_HI)
        cl = np.minimum(cand_lo, cand_hi)
        ch = np.maximum(cand_lo, cand_hi)
        inside = active & (ch >= ylo - pad) & (cl <= yhi + pad)
        is_max = np.abs(np.mod(m, 2.0)) < 0.5
        chi = np.where(inside & is_max, 1.0, chi)
        clo = np.where(inside & ~is_max, -1.0, clo)
    clo = np.where(wide, -1.0, np.maximum(clo, -1.0))
    chi = np.where(wide, 1.0, np.minimum(chi, 1.0))
    return IArr(clo, chi)


def isin(x: IArr) -> IArr:
    half_pi = IArr(np.full(x.shape, 0.5 * _PI_LO), np.full(x.shape, 0.5 * _PI_HI))
    return icos(half_pi - x)


def imatmul(A: IArr, B: IArr) -> IArr:
    """Rigorous interval matrix product via midpoint-radius (Rump's method).

    All heavy products run as float BLAS; floating-point accumulation error
    is absorbed with a Higham-style gamma factor.
    """
    Am, Bm = A.mid(), B.mid()
    Ar, Br = A.rad_ub(), B.rad_ub()
    n = A.shape[-1]
    g = ((n + 2) * _U) / (1.0 - (n + 2) * _U)
    Cm = Am @ Bm
    absA = np.abs(Am)
    absB = np.abs(Bm)
    # radius: interval radii + rounding of the midpoint product
    R0 = Ar @ (absB + Br) + absA @ Br + g * (absA @ absB)
    R = _upn(R0 * (1.0 + 8.0 * _EPS) + (n + 4) * 8.0 * _TINY)
    R = np.where(R0 == 0.0, 0.0, R)  # exact-zero rows/columns stay exact
    return IArr(np.where(R == 0.0, Cm, _dn(Cm - R)), np.where(R == 0.0, Cm, _upn(Cm + R)))


class CArr:
    """Complex interval ndarray (rectangular: re + i*im)."""

    __slots__ = ("re", "im")

    def __init__(self, re: IArr, im: IArr):
        if re.shape != im.shape:
            raise ValueError("shape mismatch")
        self.re = re
        self.im = im

    # -- constructors ---------------------------------------------------------

    @staticmethod
    def thin(z) -> "CArr":
        a = np.asarray(z)
        return CArr(IArr.thin(a.real.astype(np.float64)), IArr.thin(a.imag.astype(np.float64) if np.iscomplexobj(a) else np.zeros(a.shape)))

    @staticmethod
    def zeros(shape) -> "CArr":
        return CArr(IArr.zeros(shape), IArr.zeros(shape))

    @staticmethod
    def from_real(re: IArr) -> "CArr":
        return CArr(re, IArr.zeros(re.shape))

    def copy(self) -> "CArr":
        return CArr(self.re.copy(), self.im.copy())

    # -- queries ---------------------------------------------------------------

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    def mid(self):
        return self.re.mid() + 1j * self.im.mid()

    def mag(self):
        """Elementwise upper bound of |z| (hypot of component magnitudes)."""
        h = np.hypot(self.re.mag(), self.im.mag())
        return np.where(h == 0.0, 0.0, _upn(h * (1.0 + 4.0 * _EPS)))

    def mig_lb(self):
        """Elementwise lower bound of |z|: max of the component min-magnitudes."""

        def mig(a: IArr):
            inside = (a.lo <= 0.0) & (a.hi >= 0.0)
            return np.where(inside, 0.0, np.minimum(np.abs(a.lo), np.abs(a.hi)))

        return np.maximum(mig(self.re), mig(self.im))

    def item(self) -> ComplexInterval:
        return ComplexInterval(self.re.item(), self.im.item())

    def __getitem__(self, idx) -> "CArr":
        return CArr(self.re[idx], self.im[idx])

    def __setitem__(self, idx, val):
        v = CArr._coerce(val)
        self.re[idx] = v.re
        self.im[idx] = v.im

    def reshape(self, *shape) -> "CArr":
        return CArr(self.re.reshape(*shape), self.im.reshape(*shape))

    @property
    def T(self) -> "CArr":
        return CArr(self.re.T, self.im.T)

    def conj(self) -> "CArr":
        return CArr(self.re, -self.im)

    def contains(self, z) -> np.ndarray:
        a = np.asarray(z, dtype=complex)
        return self.re.contains(a.real) & self.im.contains(a.imag)

    # -- arithmetic ----------------------------------------------------------

    @staticmethod
    def _coerce(x) -> "CArr":
        if isinstance(x, CArr):
            return x
        if isinstance(x, IArr):
            return CArr.from_real(x)
        if isinstance(x, ComplexInterval):
            return CArr(IArr(np.asarray(x.re.lo), np.asarray(x.re.hi)), IArr(np.asarray(x.im.lo), np.asarray(x.im.hi)))
        if isinstance(x, Interval):
            return CArr(IArr(np.asarray(x.lo), np.asarray(x.hi)), IArr.zeros(()))
        return CArr.thin(x)

    def __add__(self, other) -> "CArr":
        o = CArr._coerce(other)
        return CArr(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self) -> "CArr":
        return CArr(-self.re, -self.im)

    def __sub__(self, other) -> "CArr":
        o = CArr._coerce(other)
        return CArr(self.re - o.re, self.im - o.im)

    def __rsub__(self, other) -> "CArr":
        return CArr._coerce(other) + (-self)

    def __mul__(self, other) -> "CArr":
        o = CArr._coerce(other)
        return CArr(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )

    __rmul__ = __mul__

    def sum(self, axis=None) -> "CArr":
        return CArr(self.re.sum(axis), self.im.sum(axis))

    def csum(self, axis: int) -> "CArr":
        return CArr(self.re.csum(axis), self.im.csum(axis))

    def widen(self, eps_abs) -> "CArr":
        return CArr(self.re.widen(eps_abs), self.im.widen(eps_abs))


def cmatmul(A: CArr, B: CArr) -> CArr:
    re = imatmul(A.re, B.re) - imatmul(A.im, B.im)
    im = imatmul(A.re, B.im) + imatmul(A.im, B.re)
    return CArr(re, im)


def cmatmul_ri(A: IArr, B: CArr) -> CArr:
    """Real interval matrix times complex interval matrix."""
    return CArr(imatmul(A, B.re), imatmul(A, B.im))


def hermitian_intersect(A: CArr) -> CArr:
    """Sharpen an enclosure of a Hermitian matrix using A = A^H.

    Entrywise intersection with the conjugate transpose; if some entries do
    not overlap (e.g. thin float input with rounding asymmetry), falls back to
    the entrywise hull, which contains every Hermitian symmetrization of the
    members of A.
    """
    re_lo = np.maximum(A.re.lo, A.re.lo.T)
    re_hi = np.minimum(A.re.hi, A.re.hi.T)
    im_lo = np.maximum(A.im.lo, -A.im.hi.T)
    im_hi = np.minimum(A.im.hi, -A.im.lo.T)
    if np.any(re_lo > re_hi) or np.any(im_lo > im_hi):
        re_lo = np.minimum(A.re.lo, A.re.lo.T)
        re_hi = np.maximum(A.re.hi, A.re.hi.T)
        im_lo = np.minimum(A.im.lo, -A.im.hi.T)
        im_hi = np.maximum(A.im.hi, -A.im.lo.T)
    return CArr(IArr(re_lo, re_hi), IArr(im_lo, im_hi))


def real_embedding(A: CArr) -> IArr:
    """[[Re, -Im], [Im, Re]] real embedding; Hermitian PD iff A is."""
    n = A.shape[0]
    lo = np.zeros((2 * n, 2 * n))
    hi = np.zeros((2 * n, 2 * n))
    lo[:n, :n] = A.re.lo
    hi[:n, :n] = A.re.hi
    lo[n:, n:] = A.re.lo
    hi[n:, n:] = A.re.hi
    lo[:n, n:] = (-A.im).lo
    hi[:n, n:] = (-A.im).hi
    lo[n:, :n] = A.im.lo
    hi[n:, :n] = A.im.hi
    return IArr(lo, hi)


def interval_cholesky_succeeds(A: IArr) -> bool:
    """Attempt an interval Cholesky factorization of a symmetric interval matrix.

    Success proves every symmetric matrix inside A is positive definite.
    """
    n = A.shape[0]
    L = IArr.zeros((n, n))
    for j in range(n):
        s = A[j, j]
        if j > 0:
            row = L[j, :j]
            s = s - (row * row).sum(axis=0)
        if not (s.lo > 0).all():
            return False
        d = s.sqrt()
        L[j, j] = d
        if j + 1 < n:
            t = A[j + 1 :, j]
            if j > 0:
                t = t - (L[j + 1 :, :j] * L[j, :j].reshape(1, -1)).sum(axis=1)
            inv = d.recip()
            L[j + 1 :, j] = t * inv
    return True


def posdef_lower_bound(A: CArr, tries: int = 45) -> Interval:
    """Certified lower bound c >= 0 with lambda_min(A) >= c, via shifted interval Cholesky.

    Returns an Interval [c, c]; raises ValueError if definiteness cannot be
    certified at any shift.
    """
    H = hermitian_intersect(A)
    E = real_embedding(H)
    n = E.shape[0]
    mid = 0.5 * (E.lo + E.hi)
    mid = 0.5 * (mid + mid.T)
    try:
        lam = float(np.linalg.eigvalsh(mid)[0])
    except np.linalg.LinAlgError:
        lam = 0.0
    c = max(lam, 0.0) * 0.9
    eye = np.eye(n)
    for _ in range(tries):
        if c <= 0.0:
            break
        shifted = IArr(E.lo - c * eye, E.hi - c * eye)
        if interval_cholesky_succeeds(shifted):
            return Interval(c, c)
        c = c * 0.5 if c > 1e-300 else 0.0
    # last resort: certify plain definiteness (strict, via Cholesky at shift 0)
    if interval_cholesky_succeeds(E):
        return Interval(0.0, 0.0)
    raise ValueError("positive definiteness certificate failed")
