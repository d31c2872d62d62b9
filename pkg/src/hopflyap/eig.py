"""Eigenvalue kernels: float Galerkin discretization and verified enclosures.

The float side builds dense Galerkin matrices of the Kolmogorov operators in
the boundary-condition-reduced Chebyshev-Fourier basis, exploiting that the
operators couple Fourier modes only within |dn| <= 1, and solves the resulting
Hermitian or general pencils with LAPACK.  Nothing on this side is rigorous;
it only supplies approximate eigenpairs.

The rigorous side encloses all eigenvalues of a Hermitian interval pencil
(A1, A0): a float eigenbasis V congruence-transforms the pencil to
(V^H A1 V, V^H A0 V) ~ (D, I), computed in interval arithmetic, and a
min-max perturbation argument turns the residual norms into ordered
per-index eigenvalue bounds.  ||V^H A0 V - I|| < 1 certifies definiteness
and the invertibility of V at the same time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .interval import ComplexInterval, Interval, IntervalError
from .ivarray import CArr, IArr, cmatmul, hermitian_intersect
from .operators import CoeffTerm, OperatorData
from .series import Domain, ZEndpointConstraint, _z_rows

__all__ = [
    "FactorizationFailed",
    "VerificationFailed",
    "EigEnclosure",
    "approx_eigenpairs",
    "verified_generalized_eig",
    "verified_eigenvalue_bounds",
    "FloatDiscretization",
    "discretize",
]


class FactorizationFailed(IntervalError):
    """A float factorization (Cholesky/LU) broke down."""


class VerificationFailed(IntervalError):
    """Rigorous eigenvalue enclosures could not be certified."""


@dataclass
class EigEnclosure:
    value: Interval
    multiplicity: int
    verified: bool
    vector: np.ndarray | None = None


# ---------------------------------------------------------------------------
# float radial primitives
# ---------------------------------------------------------------------------


def cheb_deriv_matrix(K: int, dt_dr: float) -> np.ndarray:
    """Matrix of d/dr on stored-convention radial coefficients ((K-1) x K)."""
    if K == 1:
        return np.zeros((1, 1))
    D = np.zeros((K - 1, K))
    for k in range(K):
        a = np.zeros(K)
        a[k] = 2.0 if k else 1.0
        der = np.polynomial.chebyshev.chebder(a)
        der = np.concatenate([der, np.zeros(K - 1 - len(der))])
        der[1:] *= 0.5
        D[:, k] = der
    return D * dt_dr


def conv_matrix(a: np.ndarray, K_in: int) -> np.ndarray:
    """Matrix of multiplication by a radial factor (stored convention).

    Maps K_in stored coefficients to K_in + len(a) - 1 stored coefficients.
    """
    Ka = len(a)
    K_out = K_in + Ka - 1
    a_ext = a[np.abs(np.arange(-(Ka - 1), Ka))]
    M = np.zeros((K_out, K_in), dtype=a.dtype)
    # columns: image of the stored unit coefficient at k (i.e. the function
    # T_k doubled for k >= 1); use the two-sided convolution then fold
    for k in range(K_in):
        e_ext = np.zeros(2 * K_in - 1, dtype=a.dtype)
        e_ext[K_in - 1 + k] = 1.0
        e_ext[K_in - 1 - k] = 1.0 if k else e_ext[K_in - 1 - k]
        if k == 0:
            e_ext[K_in - 1] = 1.0
        full = np.convolve(a_ext, e_ext)
        mid = len(full) // 2
        M[:, k] = full[mid : mid + K_out]
    return M


def cheb_moment_row(K: int) -> np.ndarray:
    p = np.arange(K)
    m = np.zeros(K)
    even = p % 2 == 0
    m[even] = 2.0 / (1.0 - p[even] ** 2)
    return m


def w_matrix_float(Krow: int, Kcol: int) -> np.ndarray:
    """Float L2 Gram <T_j, T_l> in the stored convention (rectangular)."""
    K = max(Krow, Kcol)
    m = np.zeros(2 * K)
    p = np.arange(2 * K)
    even = p % 2 == 0
    m[even] = 2.0 / (1.0 - p[even] ** 2)
    j = np.arange(Krow)[:, None]
    l = np.arange(Kcol)[None, :]
    s = lambda x: np.where(x == 0, 1.0, 2.0)
    return s(j) * s(l) * (m[j + l] + m[np.abs(j - l)]) / 4.0


# ---------------------------------------------------------------------------
# float Galerkin discretization (blockwise over Fourier modes)
# ---------------------------------------------------------------------------


class FloatDiscretization:
    """Dense float Galerkin machinery for one model at truncation (K, N)."""

    def __init__(self, data: OperatorData, K: int, N: int, inv_modes: int = 60):
        self.data = data
        self.K = K
        self.N = N
        self.dom = data.domain
        self.dt = 2.0 / (self.dom.r_max - self.dom.r_min)
        self.inv_modes = inv_modes
        self._inv_float: dict[int, np.ndarray] = {}
        self._conv_cache: dict = {}

    # -- primitives -----------------------------------------------------------

    def inv_float(self, j: int) -> np.ndarray:
        if j not in self._inv_float:
            phi, _ = self.data.inv_table.get(j)
            self._inv_float[j] = phi.coeffs.mid()
        return self._inv_float[j]

    def _term_profile(self, term: CoeffTerm) -> np.ndarray:
        """Float stored-convention coefficients of radial * r^{-j}."""
        base = term.radial.mid()
        if term.j > 0:
            inv = self.inv_float(term.j)
            M = conv_matrix(inv, len(base))
            base = M @ base
        return base

    def terms_conv(self, terms: list[CoeffTerm], K_in: int, dn: int) -> np.ndarray | None:
        """Summed multiplication matrix of all terms with Fourier offset dn."""
        key = (id(terms), K_in, dn)
        if key in self._conv_cache:
            return self._conv_cache[key]
        out = None
        for t in terms:
            if t.dn != dn:
                continue
            prof = self._term_profile(t) * complex(t.scalar.re.mid, t.scalar.im.mid)
            M = conv_matrix(prof, K_in)
            if out is None:
                out = M
            else:
                if M.shape[0] > out.shape[0]:
                    M[: out.shape[0], :] += out
                    out = M
                else:
                    out[: M.shape[0], :] += M
        self._conv_cache[key] = out
        return out

    def deriv(self, K_in: int) -> np.ndarray:
        return cheb_deriv_matrix(K_in, self.dt)

    # -- operator blocks ----------------------------------------------------------

    def op_block(self, which: str, n: int, dn: int, s: float = 1.0, K_in: int | None = None) -> np.ndarray | None:
        """Radial matrix of the (n -> n+dn) component of the operator.

        which in {L, Lstar, delta}: delta uses the interpolated coefficient
        s*c(r) + (1-s)*c0 on the angular part.
        """
        data = self.data
        K_in = K_in or self.K
        D1 = self.deriv(K_in)
        D2 = self.deriv(K_in - 1) @ D1
        if which == "delta":
            if dn != 0:
                return None
            Cc = self.terms_conv(data.cpsi_terms, K_in, 0)
            out = _pad_rows(D2.astype(complex), max(D2.shape[0], Cc.shape[0]))
            if n != 0:
                # angular coefficient blended with the constant comparison value
                Cfull = s * Cc.astype(complex)
                Cfull[:K_in, :] += (1.0 - s) * data.cpsi0.mid * np.eye(K_in)
                out = _pad_rows(out, Cfull.shape[0]) + (-(n**2)) * Cfull
            return out
        sign = 1.0 if which == "L" else -1.0
        d = data.d.mid
        blocks = []
        if dn == 0:
            Cc = self.terms_conv(data.cpsi_terms, K_in, 0)
            lap = _pad_rows(D2, Cc.shape[0] if Cc is not None else D2.shape[0])
            if n != 0 and Cc is not None:
                lap = _pad_rows(lap, Cc.shape[0]) + (-(n**2)) * Cc
            blocks.append(d * lap)
            F = self.terms_conv(data.f_terms, K_in - 1, 0)
            if F is not None:
                blocks.append(sign * (F @ D1))
        G = self.terms_conv(data.g_terms, K_in, dn)
        if G is not None:
            blocks.append(sign * (1j * n) * G)
        if which == "Lstar":
            H = self.terms_conv(data.h_terms, K_in, dn)
            if H is not None:
                blocks.append(-1.0 * H)
        if not blocks:
            return None
        K_out = max(b.shape[0] for b in blocks)
        out = np.zeros((K_out, K_in), dtype=complex)
        for b in blocks:
            out[: b.shape[0], :] += b
        return out

    # -- reduced-basis lifts ---------------------------------------------------

    def lift_X(self) -> np.ndarray:
        K = self.K
        L = np.zeros((K, K - 2))
        for k in range(2, K):
            L[k, k - 2] = 1.0
            if k % 2 == 0:
                L[0, k - 2] = -2.0
            else:
                L[1, k - 2] = -1.0
        return L

    def lift_Z(self, cmin: ZEndpointConstraint, cmax: ZEndpointConstraint) -> np.ndarray:
        K = self.K
        rows = _z_rows(self.dom, K, cmin, cmax)
        mid = rows.mid()
        M, R = mid[:, :4], mid[:, 4:]
        head = -np.linalg.solve(M, R)
        L = np.zeros((K, K - 4))
        L[:4, :] = head
        L[4:, :] = np.eye(K - 4)
        return L

    # -- assembled pencils -------------------------------------------------------

    def mass_matrix(self, lift: np.ndarray) -> np.ndarray:
        W = w_matrix_float(self.K, self.K)
        return lift.conj().T @ W @ lift

    def operator_pencil(self, which: str, s: float = 1.0, lam_shift: float = 0.0):
        """(A, B) over the X-reduced basis for L, Lstar or the delta family."""
        K, N = self.K, self.N
        Nn = 2 * N - 1
        lift = self.lift_X()
        Kred = K - 2
        Bn = self.mass_matrix(lift)
        R = Kred * Nn
        A = np.zeros((R, R), dtype=complex)
        B = np.zeros((R, R), dtype=complex)
        sgn = -1.0 if which == "delta" else 1.0  # homotopy uses -tilde_delta
        for ni in range(Nn):
            n = ni - (N - 1)
            B[ni * Kred : (ni + 1) * Kred, ni * Kred : (ni + 1) * Kred] = Bn
            for dn in (-1, 0, 1):
                nj = ni + dn
                if not (0 <= nj < Nn):
                    continue
                Ob = self.op_block(which, n, dn, s=s)
                if Ob is None:
                    continue
                OL = Ob @ lift
                W = w_matrix_float(self.K, OL.shape[0])
                # A[i,j] = <Op e_j, e_i>; rows live on the output mode
                blk = lift.conj().T @ W @ OL
                A[nj * Kred : (nj + 1) * Kred, ni * Kred : (ni + 1) * Kred] += sgn * blk
        if lam_shift:
            A -= lam_shift * B
        return A, B

    def radial_operator_matrix(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        """1-D pencil of the operator restricted to radial functions (n = 0)."""
        lift = self.lift_X()
        Ob = self.op_block(which, 0, 0)
        OL = Ob @ lift
        W = w_matrix_float(self.K, OL.shape[0])
        A = lift.conj().T @ W @ OL
        B = self.mass_matrix(lift)
        return A, B


def _pad_rows(M: np.ndarray, rows: int) -> np.ndarray:
    if M.shape[0] >= rows:
        return M
    out = np.zeros((rows, M.shape[1]), dtype=complex if np.iscomplexobj(M) else float)
    out[: M.shape[0], :] = M
    return out


# ---------------------------------------------------------------------------
# approximate eigenpairs (spec surface)
# ---------------------------------------------------------------------------


def approx_eigenpairs(A, B, count: int, target: complex = 0.0, hermitian: bool | None = None):
    """Float eigenpairs of A v = lambda B v nearest `target`, with residuals.

    Returns a list of (lambda, vector, residual) sorted by |lambda - target|.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    n = A.shape[0]
    if hermitian is None:
        hermitian = np.allclose(A, A.conj().T, atol=1e-10) and np.allclose(B, B.conj().T, atol=1e-10)
    try:
        if hermitian:
            scipy.linalg.cholesky(B)
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationFailed("mass matrix is not positive definite") from exc
    if hermitian:
        vals, vecs = scipy.linalg.eigh(A, B)
    else:
        vals, vecs = scipy.linalg.eig(A, B)
    order = np.argsort(np.abs(vals - target))[:count]
    out = []
    for idx in order:
        v = vecs[:, idx]
        lam = vals[idx]
        resid = float(np.linalg.norm(A @ v - lam * (B @ v)) / np.linalg.norm(v))
        out.append((complex(lam), v, resid))
    return out


def eig_shift_invert(A: np.ndarray, B: np.ndarray, target: complex, k: int = 1):
    """Eigenpairs of the general pencil A v = lambda B v nearest `target`.

    Dense LU of (A - target B) plus Arnoldi on its inverse action; falls back
    to the full dense solve for small problems or breakdown.
    """
    import scipy.sparse.linalg as spla

    n = A.shape[0]
    if n <= 600:
        return approx_eigenpairs(A, B, k, target=target, hermitian=False)
    try:
        lu, piv = scipy.linalg.lu_factor(A - target * B)
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationFailed(str(exc)) from exc

    def op(x):
        return scipy.linalg.lu_solve((lu, piv), B @ x)

    OP = spla.LinearOperator((n, n), matvec=op, dtype=complex)
    try:
        mus, vecs = spla.eigs(OP, k=k, which="LM", maxiter=3000, tol=1e-14)
    except Exception as exc:  # Arnoldi breakdown: fall back to the dense path
        return approx_eigenpairs(A, B, k, target=target, hermitian=False)
    lams = target + 1.0 / mus
    out = []
    for i in np.argsort(np.abs(lams - target)):
        v = vecs[:, i]
        lam = complex(lams[i])
        resid = float(np.linalg.norm(A @ v - lam * (B @ v)) / np.linalg.norm(v))
        out.append((lam, v, resid))
    return out


def eigh_smallest(A: np.ndarray, B: np.ndarray, count: int):
    """Lowest `count` eigenpairs of the Hermitian definite pencil (A, B)."""
    A = 0.5 * (A + A.conj().T)
    B = 0.5 * (B + B.conj().T)
    count = min(count, A.shape[0])
    try:
        vals, vecs = scipy.linalg.eigh(A, B, subset_by_index=[0, count - 1])
    except scipy.linalg.LinAlgError as exc:
        raise FactorizationFailed(str(exc)) from exc
    return vals, vecs


# ---------------------------------------------------------------------------
# verified enclosures of Hermitian pencils
# ---------------------------------------------------------------------------


def _norm2_upper(F: CArr) -> float:
    """Upper bound of the spectral norm of any matrix inside F (Frobenius)."""
    m = IArr.thin(F.mag())
    s = (m * m).sum()
    return Interval(max(s.item().lo, 0.0), s.item().hi).sqrt().hi


def verified_eigenvalue_bounds(A1: CArr, A0: CArr) -> list[Interval]:
    """Ordered rigorous enclosures of all eigenvalues of the pencil (A1, A0).

    A0 must be positive definite; this is certified en passant by the
    requirement ||V^H A0 V - I|| < 1.
    """
    H1 = hermitian_intersect(A1)
    H0 = hermitian_intersect(A0)
    M = H1.shape[0]
    Am = 0.5 * (H1.mid() + H1.mid().conj().T)
    Bm = 0.5 * (H0.mid() + H0.mid().conj().T)
    try:
        lam, V = scipy.linalg.eigh(Am, Bm)
    except scipy.linalg.LinAlgError as exc:
        raise VerificationFailed(f"float eigendecomposition failed: {exc}") from exc
    Vc = CArr.thin(V)
    Vh = CArr.thin(V.conj().T)
    S = cmatmul(Vh, cmatmul(H0, Vc))
    T = cmatmul(Vh, cmatmul(H1, Vc))
    E = S - CArr.thin(np.eye(M))
    eps = _norm2_upper(E)
    if not eps < 1.0:
        raise VerificationFailed(f"basis conditioning too poor: ||V^H A0 V - I|| bound = {eps:.3g}")
    F = T - CArr.thin(np.diag(lam))
    fnorm = _norm2_upper(F)
    one = Interval.point(1.0)
    out = []
    for k in range(M):
        lo_num = Interval.point(lam[k]) - Interval(fnorm, fnorm)
        hi_num = Interval.point(lam[k]) + Interval(fnorm, fnorm)
        lo = (lo_num / (one + eps)).lo if lo_num.lo >= 0 else (lo_num / (one - eps)).lo
        hi = (hi_num / (one - eps)).hi if hi_num.hi >= 0 else (hi_num / (one + eps)).hi
        out.append(Interval(min(lo, hi), max(lo, hi)))
    return out


def verified_generalized_eig(A1: CArr, A0: CArr) -> list[EigEnclosure]:
    """Cluster-merged enclosures with multiplicities (spec surface)."""
    bounds = verified_eigenvalue_bounds(A1, A0)
    out: list[EigEnclosure] = []
    for b in bounds:
        if out and b.lo <= out[-1].value.hi:
            merged = Interval(min(out[-1].value.lo, b.lo), max(out[-1].value.hi, b.hi))
            out[-1] = EigEnclosure(merged, out[-1].multiplicity + 1, True)
        else:
            out.append(EigEnclosure(b, 1, True))
    return out


# ---------------------------------------------------------------------------
# spec-surface discretize
# ---------------------------------------------------------------------------


def discretize(data: OperatorData, operator: str, K: int, N: int, s: float = 1.0, interval_mode: bool = False):
    """Galerkin pencil (A, B) of the operator over the X-reduced lifted basis.

    operator in {"L", "Lstar", "tilde_delta", "identity"}.  Float mode returns
    complex matrices; interval mode returns CArr matrices with the 1/r^j
    collapse errors folded into entrywise enclosures (practical for small K).
    """
    fd = FloatDiscretization(data, K, N)
    if not interval_mode:
        if operator == "identity":
            lift = fd.lift_X()
            Bn = fd.mass_matrix(lift)
            Nn = 2 * N - 1
            B = np.kron(np.eye(Nn), Bn)
            return B.copy(), B
        which = {"L": "L", "Lstar": "Lstar", "tilde_delta": "delta"}[operator]
        A, B = fd.operator_pencil(which, s=s)
        if operator == "tilde_delta":
            A = -A  # pencil was assembled for -tilde_delta
        return A, B
    # interval mode: apply the exact Laurent operator to each lifted basis vector
    from .series import LaurentSeries, lift_bc_coeffs
    from .series import gram as igram

    Nn = 2 * N - 1
    Kred = K - 2
    m = Kred * Nn
    red = np.zeros((m, Kred, Nn), dtype=complex)
    for j in range(m):
        red[j, j % Kred, j // Kred] = 1.0
    U = lift_bc_coeffs(CArr.thin(red))
    lau = LaurentSeries.from_poly(U, data.domain)
    if operator == "identity":
        op = lau
    elif operator == "L":
        op = data.L(lau)
    elif operator == "Lstar":
        op = data.Lstar(lau)
    elif operator == "tilde_delta":
        op = data.laplace_like(lau)
    else:
        raise ValueError(operator)
    from .series import norms_batched

    P, errs = op.collapse_batched(data.inv_table)
    # A[i,j] = <Op e_j, e_i> = conj(gram(U, P)[i, j])
    A = igram(U, P).conj()
    B = igram(U, U)
    if np.any(errs > 0):
        # entrywise slack |<E_j, u_i>| <= err_j * ||u_i||
        norms = norms_batched(U)
        A = A.widen(norms[:, None] * errs[None, :])
    return A, B
