"""Certified eigenvalue lower bounds by homotopy continuation.

Two operator families are walked from a base problem with known spectrum to
the target operator, with Rayleigh-Ritz upper bounds and Lehmann-Maehly lower
bounds certified at every step:

  * -tilde_delta(s):  -(u_rr + [s c(r) + (1-s) c0] u_psipsi)  from the
    constant-coefficient comparison operator to the full weighted Laplacian;
  * S(s) = s S*S + (1-s) S0 acting on (function, scalar) pairs, whose s=1
    bottom eigenvalue yields the resolvent bound kappa_0.

The per-step index bookkeeping generalizes the classical one-index-drop
schedule: a step may retain fewer indices when the certified upper bounds
force it, which is unavoidable because angular Fourier pairs are exactly
doubly degenerate and can never be separated by a single index drop.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .interval import ComplexInterval, Interval, IntervalError, PI
from .ivarray import CArr, IArr, hermitian_intersect
from .eig import (
    FloatDiscretization,
    VerificationFailed,
    eigh_smallest,
    verified_eigenvalue_bounds,
    w_matrix_float,
)
from .operators import BaseCoefficients, CoeffTerm, OperatorData, _mul_terms
from .series import (
    Domain,
    LaurentSeries,
    cheb_deriv,
    gram,
    lift_bc_coeffs,
    lift_bc_Z_coeffs,
    norms_batched,
)

__all__ = [
    "CoverageGap",
    "NeedLargerM",
    "MuSignViolation",
    "HomotopyOpts",
    "HomotopyStep",
    "HomotopyResult",
    "TildeDeltaFamily",
    "SOperatorFamily",
    "base_spectrum_tilde_delta0",
    "base_spectrum_S0",
    "rayleigh_ritz",
    "lehmann_maehly",
    "run_homotopy",
]


class CoverageGap(IntervalError):
    """The certified eigenvalue list does not cover the required window."""


class NeedLargerM(IntervalError):
    """The homotopy ran out of retained indices before reaching s = 1."""

    def __init__(self, msg, log=None):
        super().__init__(msg)
        self.log = log


class MuSignViolation(IntervalError):
    """The Lehmann-Maehly auxiliary eigenvalue is not verifiably negative."""


@dataclass
class HomotopyOpts:
    gamma_factor: float = 1.5  # Gamma = factor * float guess of the target bottom eigenvalue
    step_shrink: float = 0.9  # fraction of the predicted step actually taken
    backoff: float = 0.5  # step multiplier after a failed certification
    max_retries: int = 8
    m_margin: float = 0.35  # relative margin of extra base indices
    m_extra: int = 12  # additive margin of extra base indices
    guess_margin: float = 1.2  # safety factor on float guesses
    float_gap: float = 1e-4  # strictness margin for float index counting
    snap_tol: float = 0.01  # snap to s=1 when the predicted step lands this close
    max_drop: int = 4  # largest per-step index drop away from s=1


@dataclass
class HomotopyStep:
    s: float
    m: int
    nu: float | None
    upper: list[float]
    lower: list[float]
    retries: int
    seconds: float


@dataclass
class HomotopyResult:
    kind: str
    M_initial: int
    steps: list[HomotopyStep]
    lower: list[float]  # certified lower bounds at s=1, ascending indices
    upper: list[float]
    next_lower_bound: float  # certified lower bound for the next index at s=1
    base: list[float]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "M_initial": self.M_initial,
            "n_steps": len(self.steps),
            "steps": [
                {
                    "s": st.s,
                    "m": st.m,
                    "nu": st.nu,
                    "lambda_min_lower": st.lower[0] if st.lower else None,
                    "lambda_top_upper": st.upper[-1] if st.upper else None,
                    "retries": st.retries,
                    "seconds": round(st.seconds, 3),
                }
                for st in self.steps
            ],
            "lower": self.lower,
            "upper": self.upper,
            "next_lower_bound": self.next_lower_bound,
        }


# ---------------------------------------------------------------------------
# base spectra
# ---------------------------------------------------------------------------


def base_spectrum_tilde_delta0(data: OperatorData, threshold: float) -> list[tuple[Interval, int]]:
    """Closed-form spectrum of the comparison operator -(u_rr + c0 u_psipsi).

    Eigenvalues (k pi / (r_max - r_min))^2 + c0 n^2 with Dirichlet sine modes
    in r and Fourier modes in psi; multiplicity 1 for n = 0 and 2 otherwise.
    """
    dom = data.domain
    l2 = dom.length
    c0 = data.cpsi0
    lam10 = ((PI * 1.0) / l2).sqr()
    if not threshold > lam10.hi:
        raise ValueError("threshold must exceed the smallest base eigenvalue")
    out = []
    k = 1
    while True:
        base_k = ((PI * float(k)) / l2).sqr()
        if base_k.lo > threshold:
            break
        n = 0
        while True:
            val = base_k + c0 * float(n * n)
            if val.lo > threshold:
                break
            out.append((val, 1 if n == 0 else 2))
            n += 1
        k += 1
    out.sort(key=lambda t: t[0].lo)
    return out


def _flatten_with_multiplicity(pairs: list[tuple[Interval, int]]) -> list[float]:
    vals = []
    for enc, mult in pairs:
        vals.extend([enc.lo] * mult)
    return sorted(vals)


def base_spectrum_S0(
    sc: BaseCoefficients,
    delta_lower: list[float],
    delta_upper: list[float],
    delta_next_lb: float,
    Gamma: float,
) -> list[float]:
    """Sorted rigorous lower bounds of the S0 spectrum below Gamma, plus sentinel.

    The spectrum is { q(lam~) : lam~ eigenvalue of -tilde_delta } union
    {s_lambda} with q(x) = s2 x^2 - s1 x + s0.  `delta_lower/upper` are the
    certified per-index enclosures from the first homotopy and `delta_next_lb`
    bounds every eigenvalue beyond them; a CoverageGap is raised if the
    required window is not fully enclosed.
    """
    s2, s1, s0 = Interval.point(sc.s2), Interval.point(sc.s1), Interval.point(sc.s0)
    g = Interval.point(Gamma)
    disc = s1.sqr() - s2 * (s0 - g) * 4.0
    if disc.hi >= 0:
        tplus = ((s1 + Interval(max(disc.lo, 0.0), disc.hi).sqrt()) / (s2 * 2.0)).hi
    else:
        tplus = -math.inf  # the quadratic never dips below Gamma
    if tplus > delta_next_lb:
        raise CoverageGap(
            f"need -tilde_delta eigenvalues up to {tplus:.6g}, certified only beyond {delta_next_lb:.6g}"
        )

    def q(x: Interval) -> Interval:
        return s2 * x.sqr() - s1 * x + s0

    def qrange(lo: float, hi: float) -> Interval:
        vals = [q(Interval.point(lo)), q(Interval.point(hi))]
        vertex = (s1 / (s2 * 2.0)).mid
        if lo <= vertex <= hi:
            vals.append(q(Interval.point(vertex)))
        return Interval(min(v.lo for v in vals), max(v.hi for v in vals))

    mapped = [qrange(lo, hi).lo for lo, hi in zip(delta_lower, delta_upper)]
    mapped.append(sc.s_lambda)
    below = sorted(v for v in mapped if v <= Gamma)
    if not below:
        raise CoverageGap("no base eigenvalues at or below Gamma")
    below.append(Gamma)  # sentinel: every remaining S0 eigenvalue exceeds Gamma
    return below


def window_threshold(sc: BaseCoefficients, Gamma: float) -> float:
    """Largest -tilde_delta eigenvalue that can map at or below Gamma."""
    s2, s1, s0 = Interval.point(sc.s2), Interval.point(sc.s1), Interval.point(sc.s0)
    disc = s1.sqr() - s2 * (s0 - Interval.point(Gamma)) * 4.0
    if disc.hi < 0:
        return 0.0
    return ((s1 + Interval(max(disc.lo, 0.0), disc.hi).sqrt()) / (s2 * 2.0)).hi


# ---------------------------------------------------------------------------
# matrix-level Rayleigh-Ritz / Lehmann-Maehly (spec surfaces)
# ---------------------------------------------------------------------------


def rayleigh_ritz(A1: CArr, A0: CArr) -> list[Interval]:
    """Per-index enclosures of the trial pencil; the sups are upper bounds."""
    return verified_eigenvalue_bounds(A1, A0)


def lehmann_maehly(A1: CArr, A0: CArr, B2: CArr, nu: float, mode: str = "all") -> list[Interval]:
    """Certified lower bounds from the shifted pencil B1 v = mu B2 v.

    Requires the Rayleigh-Ritz check sup lam_M < nu <= lam_{M+1} upstream and
    mu_M verifiably negative.
    """
    M = A1.shape[0]
    nuI = Interval.point(nu)
    B1 = A1 - A0 * CArr._coerce(nuI).reshape(())
    mus = verified_eigenvalue_bounds(B1, B2)
    if not mus[-1].hi < 0:
        raise MuSignViolation(f"mu_M enclosure {mus[-1]} not verifiably negative")
    out = []
    rng = range(M - 1, M) if mode == "last_only" else range(M)
    for m0 in rng:
        mu = mus[M - 1 - m0]  # mu_{M+1-m} with m = m0 + 1
        out.append(nuI + Interval(1.0, 1.0) / mu)
    return out


# ---------------------------------------------------------------------------
# family: -tilde_delta(s)
# ---------------------------------------------------------------------------


class TildeDeltaFamily:
    kind = "tilde_delta"
    uses_lambda = False

    def __init__(self, data: OperatorData, K: int, N: int, threshold: float, min_final: int = 1):
        self.data = data
        self.K = K
        self.N = N
        self.threshold = threshold
        self.min_final = min_final
        self.fd = FloatDiscretization(data, K, N)
        self.base_lower = _flatten_with_multiplicity(base_spectrum_tilde_delta0(data, threshold))
        self._pencils: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    # -- float -----------------------------------------------------------------

    def _pencil(self, s: float):
        if s not in self._pencils:
            if len(self._pencils) > 8:
                self._pencils.clear()
            self._pencils[s] = self.fd.operator_pencil("delta", s=s)
        return self._pencils[s]

    def float_lowest(self, s: float, count: int):
        A, B = self._pencil(s)
        return eigh_smallest(A, B, count)

    def float_guess_target(self) -> float:
        vals, _ = self.float_lowest(1.0, 1)
        return float(vals[0])

    # -- rigorous ---------------------------------------------------------------

    def _cpsi_terms_s(self, s: float) -> list[CoeffTerm]:
        sI = Interval.point(s)
        terms = [
            CoeffTerm(t.dn, t.j, t.radial, t.scalar * ComplexInterval(sI, Interval.point(0.0)))
            for t in self.data.cpsi_terms
        ]
        c0 = self.data.cpsi0 * (Interval.point(1.0) - sI)
        terms.append(CoeffTerm(0, 0, IArr(np.array([c0.lo]), np.array([c0.hi])), ComplexInterval.point(1.0)))
        return terms

    def make_basis(self, s: float, vecs: np.ndarray):
        Kred = self.K - 2
        Nn = 2 * self.N - 1
        m = vecs.shape[1]
        red = vecs.T.reshape(m, Nn, Kred).transpose(0, 2, 1)
        return lift_bc_coeffs(CArr.thin(red))

    def _op_laurent(self, s: float, U: CArr) -> LaurentSeries:
        lau = LaurentSeries.from_poly(U, self.data.domain)
        urr = lau.d_dr().d_dr()
        upp = lau.d_dpsi().d_dpsi()
        return -(urr + _mul_terms(upp, self._cpsi_terms_s(s)))

    def grams_rr(self, s: float, U: CArr):
        A0 = hermitian_intersect(gram(U, U))
        P, errs = self._op_laurent(s, U).collapse_batched(self.data.inv_table)
        A1 = gram(P, U)
        if np.any(errs > 0):
            nrm = norms_batched(U)
            A1 = A1.widen(errs[:, None] * nrm[None, :])
        return A0, hermitian_intersect(A1)

    def gram_b2(self, s: float, U: CArr, nu: float):
        shifted = self._op_laurent(s, U) + LaurentSeries.from_poly(
            U * CArr._coerce(Interval.point(-nu)).reshape(()), self.data.domain
        )
        Q, q = shifted.collapse_batched(self.data.inv_table)
        B2 = gram(Q, Q)
        nq = norms_batched(Q)
        slack = q[:, None] * nq[None, :] + nq[:, None] * q[None, :] + q[:, None] * q[None, :]
        if np.any(slack > 0):
            B2 = B2.widen(slack)
        return hermitian_intersect(B2)


# ---------------------------------------------------------------------------
# family: S(s) = s S*S + (1-s) S0 on pairs (u, lambda)
# ---------------------------------------------------------------------------


class SOperatorFamily:
    kind = "S_of_operator"
    uses_lambda = True

    def __init__(
        self,
        data: OperatorData,
        which: str,
        ubar: CArr,
        lambda_bar: float,
        sc: BaseCoefficients,
        K: int,
        N: int,
        base_lower: list[float],
        min_final: int = 1,
    ):
        self.data = data
        self.which = which
        self.ubar = ubar
        self.lambda_bar = lambda_bar
        self.sc = sc
        self.K = K
        self.N = N
        self.base_lower = base_lower
        self.min_final = min_final
        self.fd = FloatDiscretization(data, K, N)
        self.dom = data.domain
        self._float_cache: dict[float, tuple] = {}
        self._ubar_norm = float(norms_batched(ubar.reshape(1, *ubar.shape))[0])

    # -- float assembly ---------------------------------------------------------

    def _lift_Z_float(self, s: float) -> np.ndarray:
        cmin, cmax = self.data.z_constraints(s, Interval.point(self.sc.s2), self.which)
        return self.fd.lift_Z(cmin, cmax)

    def _float_pencil(self, s: float):
        """Assemble (form(s=1) matrix, base-form matrix, mass) over the Z(s) basis.

        Convention: M[i, j] = form(x_j, x_i), i.e. the plain C^H W C Galerkin
        matrices, whose eigenvectors are correct coefficient vectors.
        """
        if s in self._float_cache:
            return self._float_cache[s]
        fd = self.fd
        K, N = self.K, self.N
        Nn = 2 * N - 1
        Kred = K - 4
        lift = self._lift_Z_float(s)
        R = Kred * Nn + 1
        lam = self.lambda_bar
        ub = self.ubar.mid()  # (K, Nn)
        which = self.which

        # blocks of A = (L or L*) - lam applied to the lifted radial basis
        blocks: dict[tuple[int, int], np.ndarray] = {}
        for ni in range(Nn):
            n = ni - (N - 1)
            for dn in (-1, 0, 1):
                nj = ni + dn
                if not (0 <= nj < Nn):
                    continue
                Ob = fd.op_block(which, n, dn, K_in=K)
                if Ob is None:
                    continue
                OL = Ob.astype(complex) @ lift
                if dn == 0:
                    shifted = np.zeros_like(OL)
                    shifted[:K, :] = lam * lift
                    OL = OL - shifted
                blocks[(nj, ni)] = OL
        Kext = max(b.shape[0] for b in blocks.values())
        W = w_matrix_float(Kext, Kext)
        Wm = w_matrix_float(K, K)

        Bu = np.zeros((R, R), dtype=complex)
        for nj in range(Nn):
            cols = [(ni, blocks[(nj, ni)]) for ni in range(max(0, nj - 1), min(Nn, nj + 2)) if (nj, ni) in blocks]
            ubj = ub[:, nj]
            for ni1, b1 in cols:
                sl1 = slice(ni1 * Kred, (ni1 + 1) * Kred)
                for ni2, b2 in cols:
                    sl2 = slice(ni2 * Kred, (ni2 + 1) * Kred)
                    Bu[sl1, sl2] += b1.conj().T @ W[: b1.shape[0], : b2.shape[0]] @ b2
                # lambda column: the first component of S e_lambda is -ubar
                v = -(b1.conj().T @ W[: b1.shape[0], :K] @ ubj)
                Bu[sl1, R - 1] += v
                Bu[R - 1, sl1] += np.conj(v)
        Bu[R - 1, R - 1] += np.real(np.vdot(ub, Wm @ ub))
        # normalization component n(x) = <u, ubar>: adds conj(n_i) n_j at [i, j]
        nvec = np.zeros(R, dtype=complex)
        for ni in range(Nn):
            nvec[ni * Kred : (ni + 1) * Kred] = ub[:, ni].conj() @ Wm @ lift
        Bu += np.outer(nvec.conj(), nvec)

        # base form and mass
        B0 = np.zeros((R, R), dtype=complex)
        A0 = np.zeros((R, R), dtype=complex)
        D1 = fd.deriv(K)
        mass = lift.conj().T @ Wm @ lift
        for ni in range(Nn):
            n = ni - (N - 1)
            Dt = fd.op_block("delta", n, 0, s=1.0, K_in=K)
            DtL = Dt.astype(complex) @ lift
            Wd = w_matrix_float(DtL.shape[0], DtL.shape[0])
            dd = DtL.conj().T @ Wd @ DtL
            D1L = D1 @ lift
            W1 = w_matrix_float(D1L.shape[0], D1L.shape[0])
            gr = D1L.conj().T @ W1 @ D1L
            if n != 0:
                Cc = fd.terms_conv(self.data.cpsi_terms, K, 0)
                CcL = Cc.astype(complex) @ lift
                Wc = w_matrix_float(CcL.shape[0], K)
                gr = gr + (n * n) * (CcL.conj().T @ Wc @ lift)
            gr = 0.5 * (gr + gr.conj().T)
            sl = slice(ni * Kred, (ni + 1) * Kred)
            B0[sl, sl] = self.sc.s2 * dd - self.sc.s1 * gr + self.sc.s0 * mass
            A0[sl, sl] = mass
        B0[R - 1, R - 1] = self.sc.s_lambda
        A0[R - 1, R - 1] = 1.0
        out = (0.5 * (Bu + Bu.conj().T), 0.5 * (B0 + B0.conj().T), 0.5 * (A0 + A0.conj().T))
        if len(self._float_cache) > 6:
            self._float_cache.clear()
        self._float_cache[s] = out
        return out

    def float_lowest(self, s: float, count: int):
        Bu, B0, A0 = self._float_pencil(s)
        A = s * Bu + (1.0 - s) * B0
        return eigh_smallest(A, A0, count)

    def float_guess_target(self) -> float:
        vals, _ = self.float_lowest(1.0, 1)
        return float(vals[0])

    # -- rigorous ---------------------------------------------------------------

    def make_basis(self, s: float, vecs: np.ndarray):
        Kred = self.K - 4
        Nn = 2 * self.N - 1
        m = vecs.shape[1]
        red = vecs[:-1, :].T.reshape(m, Nn, Kred).transpose(0, 2, 1)
        lam = vecs[-1, :].copy()
        cmin, cmax = self.data.z_constraints(s, Interval.point(self.sc.s2), self.which)
        U = lift_bc_Z_coeffs(CArr.thin(red), self.dom, cmin, cmax)
        return (U, lam)

    def _apply_A(self, lau: LaurentSeries) -> LaurentSeries:
        op = self.data.apply_operator(lau, self.which)
        return op + lau.scale(Interval.point(-self.lambda_bar))

    def _apply_Astar(self, lau: LaurentSeries) -> LaurentSeries:
        other = "Lstar" if self.which == "L" else "L"
        op = self.data.apply_operator(lau, other)
        return op + lau.scale(Interval.point(-self.lambda_bar))

    def _broadcast_ubar(self, m: int) -> CArr:
        ub = self.ubar
        shape = (m,) + ub.shape
        return CArr(
            IArr(np.broadcast_to(ub.re.lo, shape).copy(), np.broadcast_to(ub.re.hi, shape).copy()),
            IArr(np.broadcast_to(ub.im.lo, shape).copy(), np.broadcast_to(ub.im.hi, shape).copy()),
        )

    def _sx_laurent(self, U: CArr, lam: np.ndarray) -> LaurentSeries:
        """First component of S x_i = A u_i - lam_i ubar, exact Laurent form."""
        m = U.shape[0]
        Au = self._apply_A(LaurentSeries.from_poly(U, self.dom))
        lamc = CArr.thin(lam.reshape(m, 1, 1))
        lam_ub = lamc * self._broadcast_ubar(m)
        return Au + LaurentSeries.from_poly(-lam_ub, self.dom)

    @staticmethod
    def _col(x: CArr, m: int) -> CArr:
        return CArr(
            IArr(x.re.lo.reshape(m, 1), x.re.hi.reshape(m, 1)),
            IArr(x.im.lo.reshape(m, 1), x.im.hi.reshape(m, 1)),
        )

    @staticmethod
    def _row_conj(x: CArr, m: int) -> CArr:
        return CArr(
            IArr(x.re.lo.reshape(1, m), x.re.hi.reshape(1, m)),
            IArr(-x.im.hi.reshape(1, m), -x.im.lo.reshape(1, m)),
        )

    def grams_rr(self, s: float, basis):
        U, lam = basis
        m = U.shape[0]
        ubb = self.ubar.reshape(1, *self.ubar.shape)
        lamC = CArr.thin(lam)
        lam_outer = self._col(lamC, m) * self._row_conj(lamC, m)
        A0 = hermitian_intersect(gram(U, U) + lam_outer)

        # target form: <S x_i, S x_j> + n_i conj(n_j)
        SX = self._sx_laurent(U, lam)
        P, errs = SX.collapse_batched(self.data.inv_table)
        nP = norms_batched(P)
        Bt = gram(P, P)
        slack = errs[:, None] * nP[None, :] + nP[:, None] * errs[None, :] + errs[:, None] * errs[None, :]
        if np.any(slack > 0):
            Bt = Bt.widen(slack)
        nvec = gram(U, ubb).reshape(m)  # <u_i, ubar>
        Bt = Bt + self._col(nvec, m) * self._row_conj(nvec, m)
        Bt = hermitian_intersect(Bt)

        # base form
        lauU = LaurentSeries.from_poly(U, self.dom)
        Pd, ed = self.data.laplace_like(lauU).collapse_batched(self.data.inv_table)
        nd = norms_batched(Pd)
        Gd = gram(Pd, Pd)
        sl = ed[:, None] * nd[None, :] + nd[:, None] * ed[None, :] + ed[:, None] * ed[None, :]
        if np.any(sl > 0):
            Gd = Gd.widen(sl)
        Ur = cheb_deriv(U, self.dom.dt_dr)
        G1 = gram(Ur, Ur)
        upsi = lauU.d_dpsi()
        Pp, _ = upsi.collapse_batched(self.data.inv_table)  # exact (no negative powers)
        Pc, ec = _mul_terms(upsi, self.data.cpsi_terms).collapse_batched(self.data.inv_table)
        Gc = gram(Pc, Pp)
        if np.any(ec > 0):
            npp = norms_batched(Pp)
            Gc = Gc.widen(ec[:, None] * npp[None, :])
        Ggrad = hermitian_intersect(G1 + Gc)
        A0u = gram(U, U)
        B0 = (
            Gd * CArr._coerce(Interval.point(self.sc.s2)).reshape(())
            + Ggrad * CArr._coerce(Interval.point(-self.sc.s1)).reshape(())
            + A0u * CArr._coerce(Interval.point(self.sc.s0)).reshape(())
            + lam_outer * CArr._coerce(Interval.point(self.sc.s_lambda)).reshape(())
        )
        B0 = hermitian_intersect(B0)
        sI = CArr._coerce(Interval.point(s)).reshape(())
        omsI = CArr._coerce(Interval.point(1.0) - Interval.point(s)).reshape(())
        A1 = hermitian_intersect(Bt * sI + B0 * omsI)
        return A0, A1

    def gram_b2(self, s: float, basis, nu: float):
        U, lam = basis
        m = U.shape[0]
        dom = self.dom
        inv = self.data.inv_table
        SX = self._sx_laurent(U, lam)
        AstarSX = self._apply_Astar(SX)
        nvec = gram(U, self.ubar.reshape(1, *self.ubar.shape)).reshape(m)  # <u_i, ubar>
        nmul = CArr(
            IArr(nvec.re.lo.reshape(m, 1, 1), nvec.re.hi.reshape(m, 1, 1)),
            IArr(nvec.im.lo.reshape(m, 1, 1), nvec.im.hi.reshape(m, 1, 1)),
        )
        n_ub = nmul * self._broadcast_ubar(m)
        lauU = LaurentSeries.from_poly(U, dom)
        dd = self.data.laplace_like(lauU)
        d2 = self.data.laplace_like(dd)
        sI = Interval.point(s)
        om = Interval.point(1.0) - sI
        func = (
            (AstarSX + LaurentSeries.from_poly(n_ub, dom)).scale(sI)
            + (
                d2.scale(Interval.point(self.sc.s2))
                + dd.scale(Interval.point(self.sc.s1))
                + lauU.scale(Interval.point(self.sc.s0))
            ).scale(om)
            + lauU.scale(Interval.point(-nu))
        )
        Q, q = func.collapse_batched(inv)
        nQ = norms_batched(Q)
        B2 = gram(Q, Q)
        slack = q[:, None] * nQ[None, :] + nQ[:, None] * q[None, :] + q[:, None] * q[None, :]
        if np.any(slack > 0):
            B2 = B2.widen(slack)
        # scalar component: s * (-<Sx_i, ubar>) + ((1-s) s_lambda - nu) lam_i
        PS, eS = SX.collapse_batched(inv)
        sx_ub = gram(PS, self.ubar.reshape(1, *self.ubar.shape)).reshape(m)
        sx_ub = sx_ub.widen((eS * self._ubar_norm).reshape(m))
        lamc = CArr.thin(lam)
        sc_part = sx_ub * CArr._coerce(ComplexInterval(-sI, Interval.point(0.0))).reshape(()) + lamc * CArr._coerce(
            om * Interval.point(self.sc.s_lambda) - Interval.point(nu)
        ).reshape(())
        B2 = B2 + self._col(sc_part, m) * self._row_conj(sc_part, m)
        return hermitian_intersect(B2)


# ---------------------------------------------------------------------------
# the homotopy driver
# ---------------------------------------------------------------------------


def run_homotopy(family, M: int | None = None, opts: HomotopyOpts | None = None, log_fn=None) -> HomotopyResult:
    """Walk the family from s=0 to s=1, certifying eigenvalue bounds each step.

    Returns certified lower and upper bounds for the retained indices at s=1
    plus a lower bound valid for the next index; raises NeedLargerM when the
    index budget runs out before s reaches 1.
    """
    opts = opts or HomotopyOpts()
    base = list(family.base_lower)
    M = min(M, len(base)) if M else len(base)
    lb = base[:M]
    steps: list[HomotopyStep] = []
    ub = [math.inf] * len(lb)
    s = 0.0
    say = log_fn or (lambda msg: None)
    min_final = getattr(family, "min_final", 1)

    while s < 1.0:
        t0 = time.time()
        m_prev = len(lb)
        if m_prev < 2:
            raise NeedLargerM(f"only {m_prev} certified indices left at s={s:.6g}", log=steps)
        if len(steps) > 15 * M + 100:
            raise NeedLargerM(f"step budget exhausted at s={s:.6g}", log=steps)
        want_max = m_prev - 1
        vals_cache: dict[float, np.ndarray] = {}

        def vals_at(sc: float) -> np.ndarray:
            if sc not in vals_cache:
                vals_cache[sc] = family.float_lowest(sc, want_max)[0]
            return vals_cache[sc]

        def survives(sc: float, w: int) -> bool:
            # retaining w indices at sc needs the w-th value below its own ceiling
            v = vals_at(sc)
            if len(v) < w:
                return False
            ceil = lb[w]
            return v[w - 1] < ceil - opts.float_gap * max(1.0, abs(ceil))

        def max_surviving(sc: float) -> int:
            return max((w for w in range(1, want_max + 1) if survives(sc, w)), default=0)

        # predict the next parameter: keep as many indices as survive just
        # ahead of s; clusters hugging their ceiling are shed (never below 2
        # away from the endgame), and when nothing advances we optimistically
        # try s = 1 and let the certification pick the retainable count
        if survives(1.0, want_max):
            s_next, want = 1.0, want_max
        else:
            eps_s = max(1e-4 * (1.0 - s), 1e-9)
            s_probe = min(1.0, s + eps_s)
            want_probe = max_surviving(s_probe)
            w1 = max_surviving(1.0)
            best = None
            for w in range(min(want_probe, want_max), 1, -1):
                if w < want_probe - opts.max_drop:
                    break
                if survives(1.0, w):
                    best = (1.0, w)
                    break
                lo_s, hi_s = s_probe, 1.0
                if not survives(lo_s, w):
                    continue
                for _ in range(30):
                    mid = 0.5 * (lo_s + hi_s)
                    if survives(mid, w):
                        lo_s = mid
                    else:
                        hi_s = mid
                    if hi_s - lo_s < 1e-3 * max(1e-4, 1.0 - s):
                        break
                # take the highest surviving count with any positive advance:
                # microsteps refresh the next-index bounds while a steep state
                # transits its window, which keeps the certified chain sharp
                if lo_s - s >= 1e-6 * (1.0 - s):
                    best = (s + opts.step_shrink * (lo_s - s), w)
                    break
            if best is not None and best[0] > s:
                s_next, want = best
                if 1.0 - s_next < opts.snap_tol and w1 >= min_final:
                    s_next = 1.0
            elif w1 >= min_final:
                s_next, want = 1.0, max(w1, 1)
            else:
                # last resort: attempt the endgame and let RR/LM decide
                s_next, want = 1.0, max(want_probe, 1)
            say(
                f"  [{family.kind}] predict: s->{s_next:.6f} want={want} "
                f"(probe_max={want_probe}, at_1={w1})"
            )

        retries = 0
        success = False
        m_ok = 0
        rr = None
        lows = None
        nu = None
        while retries <= opts.max_retries and not success:
            # away from the endgame, refuse catastrophic index drops (and any
            # descent to a single index): a drop against a stale next-index
            # bound is how the walk dead-ends
            m_floor = 1 if s_next == 1.0 else max(2, want - opts.max_drop)
            vals, vecs = family.float_lowest(s_next, want_max)
            m_new = 0
            for w in range(min(len(vals), want_max), 0, -1):
                ceil = lb[w]
                if vals[w - 1] < ceil - opts.float_gap * max(1.0, abs(ceil)):
                    m_new = w
                    break
            if m_new >= m_floor:
                basis = family.make_basis(s_next, vecs[:, :m_new])
                try:
                    A0, A1 = family.grams_rr(s_next, basis)
                    rr_full = verified_eigenvalue_bounds(A1, A0)
                except VerificationFailed:
                    rr_full = None
                if rr_full is not None:
                    m_ok = 0
                    for mm in range(m_new, m_floor - 1, -1):
                        if rr_full[mm - 1].hi < lb[mm]:
                            m_ok = mm
                            break
                    if m_ok >= 1:
                        if m_ok < m_new:
                            basis = _slice_basis(basis, m_ok)
                            A0 = A0[:m_ok, :m_ok]
                            A1 = A1[:m_ok, :m_ok]
                            rr = verified_eigenvalue_bounds(A1, A0)
                            if not rr[m_ok - 1].hi < lb[m_ok]:
                                rr = None
                        else:
                            rr = rr_full
                        if rr is not None:
                            nu = 0.5 * (rr[m_ok - 1].hi + lb[m_ok])
                            try:
                                B2 = family.gram_b2(s_next, basis, nu)
                                lows = lehmann_maehly(A1, A0, B2, nu, mode="all")
                                success = True
                            except (MuSignViolation, VerificationFailed):
                                success = False
            if not success:
                retries += 1
                s_next = s + opts.backoff * (s_next - s)
                if s_next - s < 1e-12:
                    break
        if not success:
            raise NeedLargerM(f"step certification failed at s={s:.6g}", log=steps)

        next_sentinel = lb[m_ok]  # certified lb for index m_ok + 1, monotone in s
        lb = [max(low.lo, old) for low, old in zip(lows, lb[:m_ok])] + [next_sentinel]
        ub = [r.hi for r in rr] + [math.inf]
        s = s_next
        steps.append(
            HomotopyStep(
                s=s,
                m=m_ok,
                nu=nu,
                upper=[r.hi for r in rr],
                lower=[low.lo for low in lows],
                retries=retries,
                seconds=time.time() - t0,
            )
        )
        say(
            f"  [{family.kind}] s={s:.6f} m={m_ok} lam1>=[{lb[0]:.6g}] "
            f"top<=[{ub[m_ok-1]:.6g}] retries={retries} ({steps[-1].seconds:.1f}s)"
        )

    return HomotopyResult(
        kind=family.kind,
        M_initial=M,
        steps=steps,
        lower=lb[:-1],
        upper=ub[:-1],
        next_lower_bound=lb[-1],
        base=base[:M],
    )


def _slice_basis(basis, m):
    if isinstance(basis, tuple):
        U, lam = basis
        return (U[:m], lam[:m])
    return basis[:m]
