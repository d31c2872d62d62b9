"""Chebyshev-Fourier series algebra on the annulus strip (r_min,r_max) x (0,2pi).

A series is stored through its coefficients u_{k,n} in the doubled-Chebyshev
convention

    u(r,psi) = sum_n ( u_{0,n} + 2 sum_{k>=1} u_{k,n} T_k(t(r)) ) e^{i n psi},

with T_k rescaled from [-1,1] to [r_min,r_max].  Products, derivatives and
L2 inner products are exact coefficient operations (up to outward rounding);
the only non-polynomial data, the radial factors 1/r^j, enter through
validated Chebyshev approximations with certified sup-norm error bounds,
carried separately as Laurent parts until they are "collapsed" into a
polynomial plus an L2 error radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .interval import ComplexInterval, DomainError, Interval, IntervalError
from .ivarray import CArr, IArr, cmatmul, imatmul

__all__ = [
    "Domain",
    "ChebFourierSeries",
    "ChebSeries1D",
    "LaurentSeries",
    "ValidationFailed",
    "SingularConstraintSystem",
    "ZEndpointConstraint",
    "nu_max",
    "validated_inverse_power",
    "inv_r2_approx",
    "ell1nu_norm",
]


class ValidationFailed(IntervalError):
    """A residual-based validation could not certify its target bound."""


class SingularConstraintSystem(IntervalError):
    """Boundary-condition constraint system is not verifiably invertible."""


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """Radial interval (r_min, r_max); the angular direction is always (0, 2pi)."""

    r_min: float
    r_max: float

    def __post_init__(self):
        if not (0.0 < self.r_min < self.r_max):
            raise ValueError(f"need 0 < r_min < r_max, got ({self.r_min}, {self.r_max})")

    @property
    def half(self) -> Interval:
        return (Interval.point(self.r_max) - Interval.point(self.r_min)) * 0.5

    @property
    def center(self) -> Interval:
        return (Interval.point(self.r_max) + Interval.point(self.r_min)) * 0.5

    @property
    def length(self) -> Interval:
        return Interval.point(self.r_max) - Interval.point(self.r_min)

    @property
    def dt_dr(self) -> Interval:
        return Interval(2.0, 2.0) / self.length

    def t_of_r(self, r: Interval) -> Interval:
        if r.lo < self.r_min - 1e-14 or r.hi > self.r_max + 1e-14:
            raise DomainError(f"r={r} leaves [{self.r_min}, {self.r_max}]")
        t = (r - self.center) / self.half
        return t.intersect(Interval(-1.0, 1.0))


# ---------------------------------------------------------------------------
# batched coefficient kernels (axes ..., k, n)
# ---------------------------------------------------------------------------


def _extend_k(c: CArr) -> CArr:
    """Two-sided symmetric extension along the k axis (axis -2)."""
    K = c.shape[-2]
    idx = np.abs(np.arange(-(K - 1), K))
    return CArr(IArr(c.re.lo[..., idx, :], c.re.hi[..., idx, :]), IArr(c.im.lo[..., idx, :], c.im.hi[..., idx, :]))


def _toeplitz_centered(a_ext: IArr, L_in: int, L_out: int) -> IArr:
    """Toeplitz matrix of a centered two-sided kernel: T[i,j] = a_ext[di - dj + m]."""
    La = a_ext.shape[0]
    i = np.arange(L_out)[:, None]
    j = np.arange(L_in)[None, :]
    d = (i - (L_out - 1) // 2) - (j - (L_in - 1) // 2) + (La - 1) // 2
    mask = (d >= 0) & (d < La)
    dd = np.clip(d, 0, La - 1)
    return IArr(np.where(mask, a_ext.lo[dd], 0.0), np.where(mask, a_ext.hi[dd], 0.0))


def _contract_k(T: IArr, x: CArr) -> CArr:
    """Apply matrix T along the k axis (axis -2) of x."""
    shp = x.shape
    K = shp[-2]
    moved_re_lo = np.moveaxis(x.re.lo, -2, 0).reshape(K, -1)
    moved_re_hi = np.moveaxis(x.re.hi, -2, 0).reshape(K, -1)
    moved_im_lo = np.moveaxis(x.im.lo, -2, 0).reshape(K, -1)
    moved_im_hi = np.moveaxis(x.im.hi, -2, 0).reshape(K, -1)
    out_re = imatmul(T, IArr(moved_re_lo, moved_re_hi))
    out_im = imatmul(T, IArr(moved_im_lo, moved_im_hi))
    Kout = T.shape[0]
    new_shape = (Kout,) + tuple(shp[:-2]) + (shp[-1],)
    re = IArr(out_re.lo.reshape(new_shape), out_re.hi.reshape(new_shape))
    im = IArr(out_im.lo.reshape(new_shape), out_im.hi.reshape(new_shape))
    out = CArr(re, im)
    lo_r = np.moveaxis(out.re.lo, 0, -2)
    hi_r = np.moveaxis(out.re.hi, 0, -2)
    lo_i = np.moveaxis(out.im.lo, 0, -2)
    hi_i = np.moveaxis(out.im.hi, 0, -2)
    return CArr(IArr(lo_r, hi_r), IArr(lo_i, hi_i))


def radial_conv(a: IArr, c: CArr) -> CArr:
    """Multiply a series (axes ..., k, n) by a radial Chebyshev factor a (stored convention).

    Exact Chebyshev convolution: output has K_out = K + K_a - 1 modes.
    """
    Ka = a.shape[0]
    K = c.shape[-2]
    Kout = K + Ka - 1
    idx = np.abs(np.arange(-(Ka - 1), Ka))
    a_ext = IArr(a.lo[idx], a.hi[idx])
    cx = _extend_k(c)
    T = _toeplitz_centered(a_ext, 2 * K - 1, 2 * Kout - 1)
    full = _contract_k(T, cx)
    sl = slice(Kout - 1, 2 * Kout - 1)
    return CArr(
        IArr(full.re.lo[..., sl, :], full.re.hi[..., sl, :]),
        IArr(full.im.lo[..., sl, :], full.im.hi[..., sl, :]),
    )


def cheb_deriv(c: CArr, dt_dr: Interval) -> CArr:
    """d/dr in coefficient space (stored convention), including the affine rescale."""
    K = c.shape[-2]
    if K == 1:
        return CArr.zeros(c.shape)
    # one-sided coefficients a_k: a_0 = c_0, a_k = 2 c_k
    scale = np.ones(K)
    scale[1:] = 2.0
    a = c * IArr.thin(scale.reshape(-1, 1))
    # derivative recurrence: b_{k-1} = b_{k+1} + 2k a_k (descending), then b_0 /= 2
    out = CArr.zeros(c.shape[:-2] + (K - 1, c.shape[-1]))
    b = [CArr.zeros(c.shape[:-2] + (c.shape[-1],)) for _ in range(K + 2)]
    for k in range(K - 1, 0, -1):
        b[k - 1] = b[k + 1] + a[..., k, :] * (2.0 * k)
    for k in range(K - 1):
        out[..., k, :] = b[k]
    out[..., 0, :] = out[..., 0, :] * 0.5
    # back to stored convention: halve the k >= 1 rows
    scale_back = np.ones(K - 1)
    scale_back[1:] = 0.5
    out = out * IArr.thin(scale_back.reshape(-1, 1))
    return out * dt_dr


def fourier_deriv(c: CArr) -> CArr:
    """d/dpsi: multiply Fourier mode n by i*n."""
    Nn = c.shape[-1]
    N = (Nn + 1) // 2
    nvec = np.arange(-(N - 1), N, dtype=float)
    n = IArr.thin(nvec)
    re = c.im * (-1.0) * n
    im = c.re * n
    return CArr(re, im)


def fourier_shift(c: CArr, dn: int, n_pad: int) -> CArr:
    """Shift Fourier index by dn inside an output padded by n_pad on each side."""
    Nn = c.shape[-1]
    out = CArr.zeros(c.shape[:-1] + (Nn + 2 * n_pad,))
    start = n_pad + dn
    out[..., start : start + Nn] = c
    return out


def pad_k(c: CArr, K_new: int) -> CArr:
    K = c.shape[-2]
    if K_new < K:
        raise ValueError("pad_k cannot shrink")
    if K_new == K:
        return c
    out = CArr.zeros(c.shape[:-2] + (K_new, c.shape[-1]))
    out[..., :K, :] = c
    return out


def pad_n(c: CArr, N_new: int) -> CArr:
    Nn = c.shape[-1]
    N = (Nn + 1) // 2
    if N_new < N:
        raise ValueError("pad_n cannot shrink")
    if N_new == N:
        return c
    return fourier_shift(c, 0, N_new - N)


def match_shapes(a: CArr, b: CArr) -> tuple[CArr, CArr]:
    K = max(a.shape[-2], b.shape[-2])
    Na = (a.shape[-1] + 1) // 2
    Nb = (b.shape[-1] + 1) // 2
    N = max(Na, Nb)
    return pad_n(pad_k(a, K), N), pad_n(pad_k(b, K), N)


# ---------------------------------------------------------------------------
# L2 inner products (normalized measure dr dpsi / (2 pi (r_max - r_min)))
# ---------------------------------------------------------------------------

_W_CACHE: dict[int, IArr] = {}
_MOM_CACHE: dict[int, IArr] = {}


def cheb_moments(P: int) -> IArr:
    """m_p = int_{-1}^{1} T_p(t) dt for p = 0..P-1 (0 for odd p, 2/(1-p^2) even)."""
    if P in _MOM_CACHE:
        return _MOM_CACHE[P]
    p = np.arange(P, dtype=float)
    den = IArr.thin(1.0 - p * p)
    lo = np.zeros(P)
    hi = np.zeros(P)
    even = (np.arange(P) % 2) == 0
    den_even = IArr(den.lo[even], den.hi[even])
    vals = IArr.thin(np.full(int(even.sum()), 2.0)) * den_even.recip()
    lo[even] = vals.lo
    hi[even] = vals.hi
    lo[1::2] = 0.0
    hi[1::2] = 0.0
    m = IArr(lo, hi)
    _MOM_CACHE[P] = m
    return m


def w_matrix(K: int) -> IArr:
    """W[j,l] with <u,v>_radial = sum_{j,l} u_j W[j,l] conj(v_l) (stored convention)."""
    if K in _W_CACHE:
        return _W_CACHE[K]
    m = cheb_moments(2 * K)
    j = np.arange(K)[:, None]
    l = np.arange(K)[None, :]
    mp = IArr(m.lo[j + l], m.hi[j + l])
    mm = IArr(m.lo[np.abs(j - l)], m.hi[np.abs(j - l)])
    s = np.where(np.arange(K) == 0, 1.0, 2.0)
    sf = s[:, None] * s[None, :] * 0.25  # exact powers of two
    W = (mp + mm) * IArr.thin(sf)
    _W_CACHE[K] = W
    return W


def gram(U: CArr, V: CArr) -> CArr:
    """G[i,j] = <u_i, v_j>_{L2} for batched series U (m,K,Nn), V (m',K,Nn)."""
    if U.ndim == 2:
        U = U.reshape(1, *U.shape)
    if V.ndim == 2:
        V = V.reshape(1, *V.shape)
    U, V = match_shapes(U, V)
    m, K, Nn = U.shape
    mp = V.shape[0]
    W = w_matrix(K)
    # VW[j,:,n] = sum_l W[k,l] conj(V[j,l,n])
    Vc = V.conj()
    V2_re = np.moveaxis(Vc.re.lo, 1, 2).reshape(mp * Nn, K), np.moveaxis(Vc.re.hi, 1, 2).reshape(mp * Nn, K)
    V2_im = np.moveaxis(Vc.im.lo, 1, 2).reshape(mp * Nn, K), np.moveaxis(Vc.im.hi, 1, 2).reshape(mp * Nn, K)
    VW_re = imatmul(IArr(*V2_re), W)
    VW_im = imatmul(IArr(*V2_im), W)
    # back to (mp, K, Nn) then flatten to (mp, K*Nn)
    def back(x):
        return np.moveaxis(x.reshape(mp, Nn, K), 1, 2).reshape(mp, K * Nn)

    VWf = CArr(IArr(back(VW_re.lo), back(VW_re.hi)), IArr(back(VW_im.lo), back(VW_im.hi)))
    Uf = U.reshape(m, K * Nn)
    return cmatmul(Uf, CArr(VWf.re.T, VWf.im.T))


def inner_l2(u: CArr, v: CArr) -> ComplexInterval:
    G = gram(u, v)
    return G[0, 0].item()


def norms_batched(U: CArr) -> np.ndarray:
    """Upper bounds of the L2 norms of each series in a batch (m, K, Nn)."""
    if U.ndim == 2:
        U = U.reshape(1, *U.shape)
    m, K, Nn = U.shape
    W = w_matrix(K)
    Uc = U.conj()

    def flat(x):
        return np.moveaxis(x, 1, 2).reshape(m * Nn, K)

    UW = imatmul(IArr(flat(Uc.re.lo), flat(Uc.re.hi)), W)
    UWi = imatmul(IArr(flat(Uc.im.lo), flat(Uc.im.hi)), W)

    def back(x):
        return np.moveaxis(x.reshape(m, Nn, K), 1, 2)

    VW = CArr(IArr(back(UW.lo), back(UW.hi)), IArr(back(UWi.lo), back(UWi.hi)))
    prod = U * VW
    s = prod.re.reshape(m, K * Nn).sum(axis=1)
    out = np.sqrt(np.maximum(s.hi, 0.0))
    return np.where(out == 0.0, 0.0, np.nextafter(out * (1.0 + 4e-16), np.inf))


def norm_l2(u: CArr) -> Interval:
    s = inner_l2(u, u).re
    lo = max(s.lo, 0.0)
    return Interval(lo, max(s.hi, lo)).sqrt()


def mean_value(u: CArr) -> ComplexInterval:
    """<u, 1> (the (0,0) moment of the normalized measure)."""
    Nn = u.shape[-1]
    N = (Nn + 1) // 2
    K = u.shape[-2]
    m = cheb_moments(K)
    s = np.where(np.arange(K) == 0, 1.0, 2.0)
    w = m * IArr.thin(0.5 * s)
    col = u[..., N - 1]
    return (col * CArr.from_real(w)).csum(-1).item()


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def chebyshev_values(K: int, t: IArr) -> IArr:
    """Enclosures of T_k(t) for k = 0..K-1 over a batch of t boxes; shape (K, B).

    Uses the cosine form T_k(cos theta) = cos(k theta), which keeps widths
    polynomially small in K even at t = +-1 (interval Clenshaw is exponentially
    pessimistic there).  Exact at thin endpoint boxes t = +-1.
    """
    from .ivarray import iacos, icos

    B = t.shape[0]
    theta = iacos(t)
    kv = np.arange(K, dtype=float)[:, None]
    ang = IArr(np.broadcast_to(theta.lo[None, :], (K, B)).copy(), np.broadcast_to(theta.hi[None, :], (K, B)).copy())
    ang = ang * IArr.thin(np.broadcast_to(kv, (K, B)).copy())
    vals = icos(ang)
    # exact values at thin endpoint boxes
    at_one = (t.lo == 1.0) & (t.hi == 1.0)
    at_mone = (t.lo == -1.0) & (t.hi == -1.0)
    if np.any(at_one) or np.any(at_mone):
        sgn = np.where(np.arange(K)[:, None] % 2 == 0, 1.0, -1.0)
        lo = vals.lo
        hi = vals.hi
        lo = np.where(at_one[None, :], 1.0, lo)
        hi = np.where(at_one[None, :], 1.0, hi)
        lo = np.where(at_mone[None, :], sgn, lo)
        hi = np.where(at_mone[None, :], sgn, hi)
        vals = IArr(lo, hi)
    return vals


def clenshaw_radial(coeffs: CArr, t: IArr) -> CArr:
    """Evaluate radial Chebyshev profiles at interval points t (batched).

    coeffs has axes (..., K); t has shape (B,).  Result axes (..., B).
    """
    K = coeffs.shape[-1]
    B = t.shape[0]
    scale = np.ones(K)
    scale[1:] = 2.0
    a = coeffs * IArr.thin(scale)
    T = chebyshev_values(K, t)  # (K, B)
    lead = coeffs.shape[:-1]
    aT_shape = lead + (K, B)

    def bc(x):
        return np.broadcast_to(x[..., None], aT_shape).copy()

    a_b = CArr(IArr(bc(a.re.lo), bc(a.re.hi)), IArr(bc(a.im.lo), bc(a.im.hi)))
    prod = a_b * CArr.from_real(IArr(np.broadcast_to(T.lo, aT_shape).copy(), np.broadcast_to(T.hi, aT_shape).copy()))
    return prod.csum(-2)


# ---------------------------------------------------------------------------
# the series classes
# ---------------------------------------------------------------------------


@dataclass
class ChebFourierSeries:
    """Truncated Chebyshev-Fourier series with interval coefficients."""

    coeffs: CArr  # (K, 2N-1)
    domain: Domain

    # -- construction ------------------------------------------------------

    @staticmethod
    def zeros(domain: Domain, K: int, N: int) -> "ChebFourierSeries":
        return ChebFourierSeries(CArr.zeros((K, 2 * N - 1)), domain)

    @staticmethod
    def from_array(arr, domain: Domain) -> "ChebFourierSeries":
        a = np.asarray(arr)
        if a.ndim == 1:
            a = a.reshape(-1, 1)
        return ChebFourierSeries(CArr.thin(a.astype(complex)), domain)

    @staticmethod
    def constant(value, domain: Domain) -> "ChebFourierSeries":
        s = ChebFourierSeries.zeros(domain, 1, 1)
        s.coeffs[0, 0] = CArr._coerce(ComplexInterval.from_any(value)).reshape(())
        return s

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    @property
    def N(self) -> int:
        return (self.coeffs.shape[1] + 1) // 2

    def copy(self) -> "ChebFourierSeries":
        return ChebFourierSeries(self.coeffs.copy(), self.domain)

    def conj(self) -> "ChebFourierSeries":
        # conj of sum c_{k,n} T_k e^{in psi} = sum conj(c_{k,-n}) T_k e^{in psi}
        flipped = CArr(
            IArr(self.coeffs.re.lo[:, ::-1].copy(), self.coeffs.re.hi[:, ::-1].copy()),
            IArr(-self.coeffs.im.hi[:, ::-1].copy(), -self.coeffs.im.lo[:, ::-1].copy()),
        )
        return ChebFourierSeries(flipped, self.domain)

    def is_radial(self, tol: float = 0.0) -> bool:
        N = self.N
        mask = np.ones(2 * N - 1, dtype=bool)
        mask[N - 1] = False
        return bool(
            np.all(self.coeffs.mag()[:, mask] <= tol)
        )

    # -- algebra -------------------------------------------------------------

    def _binary(self, other: "ChebFourierSeries", op) -> "ChebFourierSeries":
        if self.domain != other.domain:
            raise ValueError("domain mismatch")
        a, b = match_shapes(self.coeffs, other.coeffs)
        return ChebFourierSeries(op(a, b), self.domain)

    def __add__(self, other: "ChebFourierSeries") -> "ChebFourierSeries":
        return self._binary(other, lambda a, b: a + b)

    def __sub__(self, other: "ChebFourierSeries") -> "ChebFourierSeries":
        return self._binary(other, lambda a, b: a - b)

    def __neg__(self) -> "ChebFourierSeries":
        return ChebFourierSeries(-self.coeffs, self.domain)

    def scale(self, c) -> "ChebFourierSeries":
        return ChebFourierSeries(self.coeffs * CArr._coerce(ComplexInterval.from_any(c)).reshape(()), self.domain)

    def multiply(self, other: "ChebFourierSeries") -> "ChebFourierSeries":
        """Exact product via Chebyshev x Fourier convolution (no truncation)."""
        if self.domain != other.domain:
            raise ValueError("domain mismatch")
        small, big = (self, other) if self.K * self.N <= other.K * other.N else (other, self)
        Ks, Ns = small.K, small.N
        Kb, Nb = big.K, big.N
        Kout = Ks + Kb - 1
        Nout = Ns + Nb - 1
        out = CArr.zeros((Kout, 2 * Nout - 1))
        big_pad = pad_n(big.coeffs, Nout)
        mag = small.coeffs.mag()
        for ks in range(Ks):
            for ns_idx in range(2 * Ns - 1):
                if mag[ks, ns_idx] == 0.0:
                    continue
                coeff = small.coeffs[ks, ns_idx].reshape(())
                dn = ns_idx - (Ns - 1)
                # radial factor T_{ks} with stored coefficient `coeff`
                rad = CArr.zeros((ks + 1,))
                rad[ks] = coeff
                prod = radial_conv_complex(rad, big_pad)
                prod = pad_k(prod, Kout)
                shifted = CArr.zeros((Kout, 2 * Nout - 1))
                lo_n = max(0, dn)
                hi_n = min(2 * Nout - 1, 2 * Nout - 1 + dn)
                src_lo = max(0, -dn)
                shifted[:, lo_n:hi_n] = prod[:, src_lo : src_lo + (hi_n - lo_n)]
                out = out + shifted
        return ChebFourierSeries(out, self.domain)

    def d_dr(self) -> "ChebFourierSeries":
        return ChebFourierSeries(cheb_deriv(self.coeffs, self.domain.dt_dr), self.domain)

    def d_dpsi(self) -> "ChebFourierSeries":
        return ChebFourierSeries(fourier_deriv(self.coeffs), self.domain)

    # -- functionals -----------------------------------------------------------

    def inner_L2(self, other: "ChebFourierSeries") -> ComplexInterval:
        if self.domain != other.domain:
            raise ValueError("domain mismatch")
        return inner_l2(self.coeffs, other.coeffs)

    def norm_L2(self) -> Interval:
        return norm_l2(self.coeffs)

    def mean(self) -> ComplexInterval:
        return mean_value(self.coeffs)

    def eval(self, r, psi) -> ComplexInterval:
        r = Interval.from_any(r)
        psi = Interval.from_any(psi)
        t = self.domain.t_of_r(r)
        tb = IArr(np.array([t.lo]), np.array([t.hi]))
        radial = clenshaw_radial(
            CArr(
                IArr(self.coeffs.re.lo.T.copy(), self.coeffs.re.hi.T.copy()),
                IArr(self.coeffs.im.lo.T.copy(), self.coeffs.im.hi.T.copy()),
            ),
            tb,
        )  # (Nn, 1)
        N = self.N
        total = ComplexInterval.point(0.0)
        for idx in range(2 * N - 1):
            n = idx - (N - 1)
            val = radial[idx, 0].item()
            ang = psi * float(n)
            phase = ComplexInterval(ang.cos(), ang.sin())
            total = total + val * phase
        return total

    def eval_radial_batch(self, t: IArr) -> CArr:
        """Clenshaw on the n=0 radial profile over a batch of t boxes."""
        N = self.N
        prof = self.coeffs[:, N - 1]
        return clenshaw_radial(prof, t)

    def sup_bound(self) -> Interval:
        """Upper bound of sup |u| via the per-mode l1 coefficient bound."""
        mag = self.coeffs.mag()
        s = np.where(np.arange(self.K) == 0, 1.0, 2.0)[:, None]
        total = IArr.thin(mag * s).sum().hi
        return Interval(0.0, total)

    def truncate(self, K_new: int, N_new: int) -> tuple["ChebFourierSeries", Interval]:
        """Truncate, returning the series and an l1 (hence sup and L2) tail bound."""
        K_new = min(K_new, self.K)
        N_new = min(N_new, self.N)
        mask = np.zeros((self.K, 2 * self.N - 1), dtype=bool)
        nidx = np.arange(2 * self.N - 1) - (self.N - 1)
        mask[K_new:, :] = True
        mask[:, np.abs(nidx) >= N_new] = True
        s = np.where(np.arange(self.K) == 0, 1.0, 2.0)[:, None]
        tail = IArr.thin(self.coeffs.mag() * s * mask).sum().hi
        sl_n = slice(self.N - N_new, self.N - N_new + 2 * N_new - 1)
        out = self.coeffs[:K_new, sl_n]
        return ChebFourierSeries(out.copy(), self.domain), Interval(0.0, tail)

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        c = self.coeffs.mid()
        return {
            "K": self.K,
            "N": self.N,
            "r_min": self.domain.r_min,
            "r_max": self.domain.r_max,
            "coeffs": [[(float(z.real), float(z.imag)) for z in row] for row in c],
        }

    @staticmethod
    def from_dict(d: dict) -> "ChebFourierSeries":
        arr = np.array([[complex(re, im) for (re, im) in row] for row in d["coeffs"]])
        return ChebFourierSeries.from_array(arr, Domain(d["r_min"], d["r_max"]))


def radial_conv_complex(a: CArr, c: CArr) -> CArr:
    """radial_conv with a complex radial factor (used by generic multiply)."""
    re = radial_conv(a.re, c)
    im = radial_conv(a.im, c)
    # (a_re + i a_im) * c = a_re*c + i*(a_im*c)
    return CArr(re.re - im.im, re.im + im.re)


# ---------------------------------------------------------------------------
# 1-D radial series (real coefficients)
# ---------------------------------------------------------------------------


@dataclass
class ChebSeries1D:
    """Radial Chebyshev series with real interval coefficients (stored convention)."""

    coeffs: IArr  # (K,)
    domain: Domain

    @staticmethod
    def from_array(arr, domain: Domain) -> "ChebSeries1D":
        return ChebSeries1D(IArr.thin(np.asarray(arr, dtype=float)), domain)

    @property
    def K(self) -> int:
        return self.coeffs.shape[0]

    def eval(self, r) -> Interval:
        t = self.domain.t_of_r(Interval.from_any(r))
        tb = IArr(np.array([t.lo]), np.array([t.hi]))
        v = clenshaw_radial(CArr.from_real(self.coeffs), tb)
        return v[0].item().re

    def eval_batch(self, t: IArr) -> IArr:
        return clenshaw_radial(CArr.from_real(self.coeffs), t).re

    def convolve(self, other: "ChebSeries1D") -> "ChebSeries1D":
        c = radial_conv(self.coeffs, CArr.from_real(other.coeffs.reshape(-1, 1)))
        return ChebSeries1D(c.re[:, 0], self.domain)

    def d_dr(self) -> "ChebSeries1D":
        c = cheb_deriv(CArr.from_real(self.coeffs.reshape(-1, 1)), self.domain.dt_dr)
        return ChebSeries1D(c.re[:, 0], self.domain)

    def to_2d(self) -> ChebFourierSeries:
        return ChebFourierSeries(CArr.from_real(self.coeffs.reshape(-1, 1)), self.domain)


def ell1nu_norm(coeffs, nu: float) -> Interval:
    """Weighted norm |c_0| + 2 sum_k |c_k| nu^k (interval enclosure)."""
    if nu <= 1.0:
        raise ValueError("nu must exceed 1")
    if isinstance(coeffs, ChebSeries1D):
        c = coeffs.coeffs
    elif isinstance(coeffs, IArr):
        c = coeffs
    else:
        c = IArr.thin(np.asarray(coeffs, dtype=float))
    K = c.shape[0]
    w = [Interval.point(1.0)]
    nui = Interval.point(nu)
    for _ in range(K - 1):
        w.append(w[-1] * nui)
    wlo = np.array([2.0 * x.lo for x in w])
    whi = np.array([2.0 * x.hi for x in w])
    wlo[0] = 1.0
    whi[0] = 1.0
    total = (abs(c) * IArr(wlo, whi)).sum()
    return Interval(max(total.item().lo, 0.0), total.item().hi)


# ---------------------------------------------------------------------------
# boundary-condition lifts
# ---------------------------------------------------------------------------


def lift_bc_coeffs(reduced: CArr) -> CArr:
    """Fill modes k=0,1 so the series vanishes at r_min and r_max for all psi.

    `reduced` holds the coefficients for k = 2..K-1 (axes ..., K-2, Nn).
    """
    Kr, Nn = reduced.shape[-2], reduced.shape[-1]
    out = CArr.zeros(reduced.shape[:-2] + (Kr + 2, Nn))
    out[..., 2:, :] = reduced
    evens = reduced[..., 0::2, :]  # k = 2, 4, ...
    odds = reduced[..., 1::2, :]  # k = 3, 5, ...
    out[..., 0, :] = evens.csum(-2) * (-2.0)
    if Kr > 1:
        out[..., 1, :] = odds.csum(-2) * (-1.0)
    return out


def lift_bc(reduced: CArr, domain: Domain) -> ChebFourierSeries:
    return ChebFourierSeries(lift_bc_coeffs(reduced), domain)


@dataclass(frozen=True)
class ZEndpointConstraint:
    """Endpoint condition  w1 * u'(r_e) + w2 * u''(r_e) = 0 (physical-r derivatives)."""

    w1: Interval
    w2: Interval


def _z_rows(domain: Domain, K: int, cmin: ZEndpointConstraint, cmax: ZEndpointConstraint) -> IArr:
    """4 x K real constraint matrix: rows (value@-1, value@+1, op@-1, op@+1)."""
    dt = domain.dt_dr
    k = np.arange(K, dtype=float)
    s = np.where(k == 0, 1.0, 2.0)
    tkp = k**2  # T_k'(1), exact
    tkpp_num = IArr.thin(k**2 * (k**2 - 1.0))  # numerator exact for k < ~2**13
    third = IArr.thin(np.full(K, 3.0)).recip()
    tkpp = tkpp_num * third  # T_k''(1) = k^2 (k^2 - 1) / 3
    sgn = np.where(np.arange(K) % 2 == 0, 1.0, -1.0)
    rows = IArr.zeros((4, K))
    rows[0, :] = IArr.thin(s * sgn)  # value at t=-1
    rows[1, :] = IArr.thin(s)  # value at t=+1
    dtp = IArr.from_scalar(dt, (K,))
    dtp2 = IArr.from_scalar(dt * dt, (K,))
    # T_k'(-1) = (-1)^{k+1} k^2 ; T_k''(-1) = (-1)^k T_k''(1)
    rows[2, :] = (
        IArr.from_scalar(cmin.w1, (K,)) * IArr.thin(s * (-sgn) * tkp) * dtp
        + IArr.from_scalar(cmin.w2, (K,)) * (tkpp * IArr.thin(s * sgn)) * dtp2
    )
    rows[3, :] = (
        IArr.from_scalar(cmax.w1, (K,)) * IArr.thin(s * tkp) * dtp
        + IArr.from_scalar(cmax.w2, (K,)) * (tkpp * IArr.thin(s)) * dtp2
    )
    return rows


def lift_bc_Z_coeffs(
    reduced: CArr, domain: Domain, cmin: ZEndpointConstraint, cmax: ZEndpointConstraint
) -> CArr:
    """Fill modes k=0..3 so that u and the endpoint operator both vanish at r_min, r_max.

    `reduced` holds coefficients for k = 4..K-1.  The 4x4 head system is solved
    with a verified linear solve; raises SingularConstraintSystem if it cannot
    be certified invertible.
    """
    Kr, Nn = reduced.shape[-2], reduced.shape[-1]
    K = Kr + 4
    rows = _z_rows(domain, K, cmin, cmax)
    M = rows[:, :4]
    R = rows[:, 4:]
    lead = reduced.shape[:-2]

    def flat(x):
        return np.moveaxis(x, -2, 0).reshape(Kr, -1)

    b_re = imatmul(-R, IArr(flat(reduced.re.lo), flat(reduced.re.hi)))  # 4 x (batch*Nn)
    b_im = imatmul(-R, IArr(flat(reduced.im.lo), flat(reduced.im.hi)))

    Gmid = 0.5 * (M.lo + M.hi)
    try:
        Ginv = np.linalg.inv(Gmid)
    except np.linalg.LinAlgError as exc:
        raise SingularConstraintSystem("constraint matrix mid inverse failed") from exc
    GinvI = IArr.thin(Ginv)
    E = IArr.thin(np.eye(4)) - imatmul(GinvI, M)
    beta = float(np.max(np.sum(E.mag(), axis=1)))
    if beta >= 1.0:
        raise SingularConstraintSystem(f"constraint system not verifiably invertible (beta={beta:.3g})")

    def solve(b: IArr) -> IArr:
        xh = Ginv @ b.mid()
        resid = b - imatmul(M, IArr.thin(xh))
        d = imatmul(GinvI, resid)
        slack = np.max(d.mag(), axis=0, keepdims=True) * (beta / (1.0 - beta))
        return IArr.thin(xh) + d.widen(np.broadcast_to(slack, d.shape))

    x_re = solve(b_re)  # 4 x (batch*Nn)
    x_im = solve(b_im)

    def unflat(x):
        return np.moveaxis(x.reshape((4,) + lead + (Nn,)), 0, -2)

    out = CArr.zeros(lead + (K, Nn))
    out[..., :4, :] = CArr(
        IArr(unflat(x_re.lo), unflat(x_re.hi)), IArr(unflat(x_im.lo), unflat(x_im.hi))
    )
    out[..., 4:, :] = reduced
    return out


def lift_bc_Z(
    reduced: CArr, domain: Domain, cmin: ZEndpointConstraint, cmax: ZEndpointConstraint
) -> ChebFourierSeries:
    return ChebFourierSeries(lift_bc_Z_coeffs(reduced, domain, cmin, cmax), domain)


# ---------------------------------------------------------------------------
# Laurent series: sum_j r^{-j} P_j(r, psi)
# ---------------------------------------------------------------------------


class LaurentSeries:
    """Finite sum of negative r powers times polynomial Chebyshev-Fourier parts.

    All operator algebra (derivatives, coefficient multiplication) is exact on
    this representation; the negative powers are only replaced by validated
    approximations at `collapse` time.
    """

    def __init__(self, parts: dict[int, CArr], domain: Domain):
        self.parts = {j: p for j, p in parts.items()}
        self.domain = domain

    @staticmethod
    def from_poly(c: CArr, domain: Domain) -> "LaurentSeries":
        return LaurentSeries({0: c}, domain)

    def copy(self) -> "LaurentSeries":
        return LaurentSeries({j: p.copy() for j, p in self.parts.items()}, self.domain)

    def __add__(self, other: "LaurentSeries") -> "LaurentSeries":
        out = {j: p for j, p in self.parts.items()}
        for j, p in other.parts.items():
            if j in out:
                a, b = match_shapes(out[j], p)
                out[j] = a + b
            else:
                out[j] = p
        return LaurentSeries(out, self.domain)

    def __neg__(self) -> "LaurentSeries":
        return LaurentSeries({j: -p for j, p in self.parts.items()}, self.domain)

    def __sub__(self, other: "LaurentSeries") -> "LaurentSeries":
        return self + (-other)

    def scale(self, c) -> "LaurentSeries":
        cc = CArr._coerce(ComplexInterval.from_any(c)).reshape(())
        return LaurentSeries({j: p * cc for j, p in self.parts.items()}, self.domain)

    def shift_power(self, dj: int) -> "LaurentSeries":
        return LaurentSeries({j + dj: p for j, p in self.parts.items()}, self.domain)

    def mul_radial(self, a: IArr) -> "LaurentSeries":
        return LaurentSeries({j: radial_conv(a, p) for j, p in self.parts.items()}, self.domain)

    def mul_laurent_radial(self, coeff: dict[int, IArr]) -> "LaurentSeries":
        out = LaurentSeries({}, self.domain)
        for i, q in coeff.items():
            out = out + self.mul_radial(q).shift_power(i)
        return out

    def mul_fourier_radial(self, terms: list[tuple[int, ComplexInterval, IArr]], dj: int = 0) -> "LaurentSeries":
        """Multiply by sum over (dn, scalar, radial): scalar * radial(r) * e^{i dn psi} * r^{-dj}."""
        out = LaurentSeries({}, self.domain)
        for j, p in self.parts.items():
            Nn = p.shape[-1]
            N = (Nn + 1) // 2
            dn_max = max(abs(dn) for dn, _, _ in terms)
            acc = None
            for dn, scalar, rad in terms:
                prod = radial_conv(rad, p) * CArr._coerce(scalar).reshape(())
                shifted = fourier_shift(prod, dn, dn_max)
                acc = shifted if acc is None else acc + shifted
            out = out + LaurentSeries({j + dj: acc}, self.domain)
        return out

    def d_dpsi(self) -> "LaurentSeries":
        return LaurentSeries({j: fourier_deriv(p) for j, p in self.parts.items()}, self.domain)

    def d_dr(self) -> "LaurentSeries":
        out = LaurentSeries({}, self.domain)
        dt = self.domain.dt_dr
        for j, p in self.parts.items():
            out = out + LaurentSeries({j: cheb_deriv(p, dt)}, self.domain)
            if j != 0:
                out = out + LaurentSeries({j + 1: p * float(-j)}, self.domain)
        return out

    def max_power(self) -> int:
        return max(self.parts.keys(), default=0)

    def collapse(self, inv_table: "InverseRadialTable") -> tuple[CArr, Interval]:
        """Replace the r^{-j} factors by validated approximations.

        Returns (polynomial coefficients, L2 error radius): the true function
        equals the polynomial plus a remainder of L2 norm at most the radius.
        """
        poly, errs = self.collapse_batched(inv_table)
        return poly, Interval(0.0, float(np.max(errs)) if errs.size else 0.0)

    def collapse_batched(self, inv_table: "InverseRadialTable") -> tuple[CArr, np.ndarray]:
        """Like collapse, with one L2 error radius per leading batch index."""
        poly = None
        errs = None
        for j, p in sorted(self.parts.items()):
            if j == 0:
                term = p
            else:
                inv, rho = inv_table.get(j)
                term = radial_conv(inv.coeffs, p)
                pn = norms_batched(p) if p.ndim >= 3 else np.array([norm_l2(p).hi])
                raw = rho.hi * pn * (1 + 4e-16)
                contrib = np.where(raw == 0.0, 0.0, np.nextafter(raw, np.inf))
                errs = contrib if errs is None else np.where(
                    contrib == 0.0, errs, np.nextafter(errs + contrib, np.inf)
                )
            if poly is None:
                poly = term
            else:
                a, b = match_shapes(poly, term)
                poly = a + b
        if poly is None:
            poly = CArr.zeros((1, 1))
        if errs is None:
            lead = poly.shape[:-2]
            errs = np.zeros(lead if lead else (1,))
        return poly, errs


# ---------------------------------------------------------------------------
# validated approximation of r^{-p}  (Appendix-style Newton-Kantorovich, linear)
# ---------------------------------------------------------------------------


def nu_max(domain: Domain) -> Interval:
    """Largest admissible Bernstein weight for 1/r^p on the domain."""
    num = Interval.point(domain.r_max) + Interval.point(domain.r_min)
    den = Interval.point(domain.r_max) - Interval.point(domain.r_min)
    rho = num / den
    inside = Interval(1.0, 1.0) - (den / num).sqr()
    return rho * (Interval(1.0, 1.0) + inside.sqrt())


def r_power_coeffs(domain: Domain, power: int) -> IArr:
    """Exact Chebyshev coefficients (stored convention) of r^power on the domain.

    Computed with scalar interval convolutions, so dyadic domain endpoints give
    exactly thin coefficients.
    """
    if power < 0:
        raise ValueError("power must be >= 0")
    lin = [domain.center, domain.half * 0.5]
    out = [Interval.point(1.0)]
    for _ in range(power):
        Ka, Kb = len(out), len(lin)
        res = []
        for k in range(Ka + Kb - 1):
            acc = Interval.point(0.0)
            for l in range(-(Ka - 1), Ka):
                j = abs(k - l)
                if j < Kb:
                    acc = acc + out[abs(l)] * lin[j]
            res.append(acc)
        out = res
    return IArr(np.array([x.lo for x in out]), np.array([x.hi for x in out]))


def _residual_conv_exact(R: IArr, phi: np.ndarray, power: int) -> IArr:
    """Enclosure of R*phi - e0 with exact accumulation (Dekker product + fsum).

    The residual rows cancel to ~1e-16 against O(1) summands, so the generic
    matmul rounding bound would dominate; error-free accumulation keeps the
    enclosure at the true size.
    """
    from .interval import _two_prod as _tp, _down as _d, _up as _u

    Kp = len(phi)
    Rm = R.mid()
    Rrad = R.rad_ub()
    los = np.zeros(Kp + power)
    his = np.zeros(Kp + power)
    for k in range(Kp + power):
        terms = [-1.0] if k == 0 else []
        rad = 0.0
        for l in range(-power, power + 1):
            j = abs(k - l)
            if j < Kp:
                a = float(Rm[abs(l)])
                b = float(phi[j])
                p, e = _tp(a, b)
                if math.isnan(e):
                    p = a * b
                    e = 0.0
                    rad += 4.0 * abs(p) * 2.3e-16
                terms.append(p)
                terms.append(e)
                rad += float(Rrad[abs(l)]) * abs(b)
        s = math.fsum(terms)
        rad = rad * (1.0 + 1e-14) + 1e-300
        los[k] = _d(_d(s) - rad)
        his[k] = _u(_u(s) + rad)
    return IArr(los, his)


def validated_inverse_power(
    domain: Domain, power: int, n_modes: int = 64, nu: float | None = None
) -> tuple[ChebSeries1D, Interval]:
    """Validated Chebyshev approximation of r^{-power} with a sup-norm error bound.

    Solves the convolution system R * phi = 1 (R the exact coefficients of
    r^power) in floats, then certifies ||phi_exact - phi_bar||_sup <=
    delta/(1-delta) * ||phi_bar||_{l1,nu} with delta = ||R*phi_bar - 1||_{l1,nu}.
    """
    nmax = nu_max(domain)
    if nu is None:
        # small weight: the nu^k tail weight in the residual norm dominates the
        # achievable bound, so stay well below the Bernstein limit
        nu = min(1.0 + 0.2 * (nmax.lo - 1.0), 2.5)
    if not (1.0 < nu < nmax.lo):
        raise ValueError(f"nu={nu} outside (1, nu_max={nmax.lo})")
    R = r_power_coeffs(domain, power)
    Rm = R.mid()
    P = power
    # float convolution matrix M[k, j] of phi -> R*phi
    M = np.zeros((n_modes, n_modes))
    for k in range(n_modes):
        for j in range(n_modes):
            v = 0.0
            if abs(k - j) <= P:
                v += Rm[abs(k - j)]
            if j >= 1 and k + j <= P:
                v += Rm[k + j]
            M[k, j] = v
    rhs = np.zeros(n_modes)
    rhs[0] = 1.0
    # Solve in a geometrically scaled basis: the exact coefficients decay like
    # nu_max^{-k}, and without the scaling the float solve leaves noise in the
    # far tail that the nu^k weight of the residual norm amplifies.
    scale_base = 1.0 + 0.95 * (nmax.lo - 1.0)
    D = scale_base ** (-np.arange(n_modes, dtype=float))
    psi_coef = np.linalg.solve(M * D[None, :], rhs)
    phi = D * psi_coef
    phi_bar = ChebSeries1D.from_array(phi, domain)
    resid = _residual_conv_exact(R, phi, power)
    delta = ell1nu_norm(resid, nu)
    if delta.hi >= 1.0:
        raise ValidationFailed(f"residual delta={delta.hi} >= 1 for 1/r^{power}")
    norm_phi = ell1nu_norm(phi_bar.coeffs, nu)
    rho = Interval(0.0, (Interval(0.0, delta.hi) / (Interval(1.0, 1.0) - Interval(0.0, delta.hi)) * norm_phi).hi)
    return phi_bar, rho


def inv_r2_approx(domain: Domain, K: int = 64, nu: float | None = None) -> tuple[ChebSeries1D, Interval]:
    """Validated approximation of 1/r^2 (spec surface for the power-2 case)."""
    return validated_inverse_power(domain, 2, n_modes=K, nu=nu)


class InverseRadialTable:
    """Cache of validated approximations of r^{-j} on a fixed domain."""

    def __init__(self, domain: Domain, n_modes: int = 80, nu: float | None = None):
        self.domain = domain
        self.n_modes = n_modes
        self.nu = nu
        self._cache: dict[int, tuple[ChebSeries1D, Interval]] = {}

    def get(self, power: int) -> tuple[ChebSeries1D, Interval]:
        if power not in self._cache:
            self._cache[power] = validated_inverse_power(self.domain, power, self.n_modes, self.nu)
        return self._cache[power]
