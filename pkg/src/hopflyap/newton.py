"""A-posteriori eigenpair validation via the Newton-Kantorovich argument.

Given a float approximate eigenpair (ubar, lambda_bar) of the backward or
forward Kolmogorov operator, this module certifies an exact eigenpair within
an explicit radius rho of it (in the weighted H^2-type product norm), through

    delta  -- a rigorous residual bound,
    kappa0 -- a resolvent bound on pairs, from the two homotopies,
    kappa  -- its lift to the graph norm via the a-priori estimates,
    rho    -- the contraction radius, provided 2 kappa^2 gamma delta < 1
              (the second derivative constant gamma equals 1 here).
"""

from __future__ import annotations

import bisect
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .interval import ComplexInterval, Interval, IntervalError
from .ivarray import CArr, IArr
from .eig import FloatDiscretization, eig_shift_invert, eigh_smallest, approx_eigenpairs
from .homotopy import (
    CoverageGap,
    HomotopyOpts,
    HomotopyResult,
    NeedLargerM,
    SOperatorFamily,
    TildeDeltaFamily,
    _flatten_with_multiplicity,
    base_spectrum_S0,
    base_spectrum_tilde_delta0,
    run_homotopy,
    window_threshold,
)
from .operators import (
    BaseCoefficients,
    EmbeddingConstants,
    OperatorData,
    base_coefficients,
    embedding_constants,
)
from .series import ChebFourierSeries, LaurentSeries, gram, lift_bc_coeffs, norm_l2, norms_batched

__all__ = [
    "ThetaXiViolation",
    "ContractionFailed",
    "NonRealApproxEigenvalue",
    "ValidationError",
    "ValidationConfig",
    "ValidatedEigenpair",
    "residual_delta",
    "kappa_from_kappa0",
    "newton_kantorovich",
    "approximate_eigenpair",
    "validate_eigenpair",
]


class ThetaXiViolation(IntervalError):
    """The (theta, xi2) pair violates its admissibility condition."""


class ContractionFailed(IntervalError):
    """2 kappa^2 gamma delta >= 1: the approximate pair is not accurate enough."""


class NonRealApproxEigenvalue(IntervalError):
    """The float eigenvalue has a non-negligible imaginary part."""


class ValidationError(IntervalError):
    """Pipeline failure, annotated with the stage."""

    def __init__(self, stage: str, msg: str):
        super().__init__(f"[{stage}] {msg}")
        self.stage = stage


@dataclass
class ValidationConfig:
    K: int = 30
    N: int = 30
    eta_L: float = 0.5
    eta_L0: float = 0.25
    eta_S_frac: float = 0.5  # eta_S = frac * ||ubar||^2
    theta: float = 1.0
    xi2: float | None = None  # None: sigma^4 / (16 ||ubar||^2)
    gamma_factor: float = 1.5
    window_margin: float = 1.12  # first-homotopy threshold over the coverage window
    window_extra: float = 30.0
    max_attempts: int = 3
    inv_modes: int = 80
    homotopy: HomotopyOpts = field(default_factory=HomotopyOpts)
    imag_tol: float = 1e-8


@dataclass
class ValidatedEigenpair:
    u_bar: ChebFourierSeries
    lambda_bar: float
    which: str
    radial: bool
    rho: Interval
    delta: Interval
    kappa0: Interval
    kappa: Interval
    gamma: float
    theta: float
    xi2: Interval
    norm_ubar: Interval
    embedding: EmbeddingConstants
    base_coeffs: BaseCoefficients
    homotopy_delta: HomotopyResult | None
    homotopy_S: HomotopyResult | None
    seconds: float

    @property
    def eigenvalue_enclosure(self) -> Interval:
        """lambda_bar +- rho encloses the certified exact eigenvalue."""
        r = self.rho.hi
        return Interval(self.lambda_bar - r, self.lambda_bar + r)

    def to_dict(self) -> dict:
        lo, hi = self.eigenvalue_enclosure.to_decimal_strings(10)
        return {
            "which": self.which,
            "lambda_bar": self.lambda_bar,
            "eigenvalue_enclosure": [lo, hi],
            "rho": self.rho.hi,
            "delta": self.delta.hi,
            "kappa0": self.kappa0.hi,
            "kappa": self.kappa.hi,
            "gamma": self.gamma,
            "theta": self.theta,
            "xi2": self.xi2.mid,
            "norm_ubar": [self.norm_ubar.lo, self.norm_ubar.hi],
            "radial": self.radial,
            "seconds": round(self.seconds, 1),
            "homotopy_delta": self.homotopy_delta.to_dict() if self.homotopy_delta else None,
            "homotopy_S": self.homotopy_S.to_dict() if self.homotopy_S else None,
            "series": self.u_bar.to_dict(),
        }


# ---------------------------------------------------------------------------
# the three constants
# ---------------------------------------------------------------------------


def residual_delta(ubar: CArr, lambda_bar: float, data: OperatorData, which: str) -> Interval:
    """Upper bound on sqrt(||Op u - lam u||^2 + |<u,u> - 1|^2) for the pair."""
    dom = data.domain
    lau = data.apply_operator(LaurentSeries.from_poly(ubar, dom), which)
    lau = lau + LaurentSeries.from_poly(
        ubar * CArr._coerce(Interval.point(-lambda_bar)).reshape(()), dom
    )
    P, err = lau.collapse(data.inv_table)
    r1 = norm_l2(P) + Interval(0.0, err.hi)
    nrm = gram(ubar.reshape(1, *ubar.shape), ubar.reshape(1, *ubar.shape))[0, 0].item()
    r2sq = (nrm.re - Interval.point(1.0)).sqr() + nrm.im.sqr()
    total = (r1.sqr() + r2sq).sqrt()
    return Interval(0.0, total.hi)


def kappa_from_kappa0(
    kappa0: Interval,
    data: OperatorData,
    which: str,
    lambda_bar: float,
    norm_ubar: Interval,
    theta: float,
    xi2: Interval,
) -> tuple[Interval, Interval, Interval]:
    """Lift the L2-pair resolvent bound to the weighted-H2 pair norm.

    Returns (kappa, kappa1, kappa2); raises ThetaXiViolation if the xi2/theta
    admissibility condition fails.
    """
    sig2 = data.sigma2
    CV = data.constant_CV()
    lam = Interval.point(lambda_bar)
    k0 = Interval(max(kappa0.lo, 0.0), kappa0.hi)
    if which == "L":
        neg_part = Interval(max(-lambda_bar, 0.0), max(-lambda_bar, 0.0))
        k1 = (
            CV * k0
            + ((CV * k0).sqr() + sig2 * k0 * (Interval.point(1.0) + k0 * neg_part) * 2.0).sqrt()
        ) / sig2
        k2 = (Interval.point(1.0) + CV * k1 + abs(lam) * k0) * (Interval(2.0, 2.0) / sig2)
    elif which == "Lstar":
        h0 = data.h_inf()
        gap = h0 - lam
        pos_part = Interval(max(gap.lo, 0.0), max(gap.hi, 0.0))
        k1 = (
            CV * k0
            + ((CV * k0).sqr() + sig2 * k0 * (Interval.point(1.0) + k0 * pos_part) * 2.0).sqrt()
        ) / sig2
        h_shift = data.h_sup_abs(shift=lambda_bar)
        k2 = (Interval.point(1.0) + CV * k1 + h_shift * k0) * (Interval(2.0, 2.0) / sig2)
    else:
        raise ValueError(f"unknown operator {which!r}")
    thI = Interval.point(theta)
    cond = xi2 * (Interval.point(1.0) + Interval.point(1.0) / thI) * ((norm_ubar * 2.0) / sig2).sqr()
    if not cond.hi < 1.0:
        raise ThetaXiViolation(f"xi2 (1 + 1/theta)(2||u||/sigma^2)^2 = {cond} not < 1")
    num = k0.sqr() + k1.sqr() + xi2 * (Interval.point(1.0) + thI) * k2.sqr()
    kappa = (num / (Interval.point(1.0) - cond)).sqrt()
    return Interval(0.0, kappa.hi), k1, k2


def newton_kantorovich(delta: Interval, kappa: Interval, gamma: float = 1.0) -> Interval:
    """Minimal admissible contraction radius; ContractionFailed if uncertifiable.

    Evaluated at the upper endpoints of delta and kappa: the theorem holds for
    any valid pair of constants, and the radius is increasing in both.
    """
    if delta.hi == 0.0:
        return Interval(0.0, 0.0)
    g = Interval.point(gamma)
    k = Interval.point(kappa.hi)
    d = Interval.point(delta.hi)
    t = k.sqr() * g * d * 2.0
    if not t.hi < 1.0:
        raise ContractionFailed(f"2 kappa^2 gamma delta = {t} not < 1")
    rho = (Interval.point(1.0) - (Interval.point(1.0) - t).sqrt()) / (k * g)
    return Interval(0.0, rho.hi)


# ---------------------------------------------------------------------------
# approximate eigenpairs
# ---------------------------------------------------------------------------


def _symmetrize_fourier(arr: np.ndarray) -> np.ndarray:
    """Project onto conjugate-symmetric coefficients (a real-valued function)."""
    out = 0.5 * (arr + np.conj(arr[:, ::-1]))
    return out


def approximate_eigenpair(
    data: OperatorData, which: str, K: int, N: int, target: float | None = None, imag_tol: float = 1e-8
):
    """Float eigenpair of L or L* nearest the top of the spectrum.

    For L the pair is computed in the radial block (the eigenfunction of the
    top eigenvalue does not depend on the angle); for L* the full 2-D pencil
    is solved near `target`.  Returns (ubar: CArr interval (K, 2N-1), lambda_bar,
    residual, radial_flag); the coefficients are conjugate-symmetrized,
    boundary-lifted and normalized.
    """
    fd = FloatDiscretization(data, K, N)
    Kred = K - 2
    Nn = 2 * N - 1
    if which == "L":
        A, B = fd.radial_operator_matrix("L")
        if data.is_self_adjoint():
            vals, vecs = eigh_smallest(-A, B, 1)
            lam, vec = -float(vals[0]), vecs[:, 0]
            resid = 0.0
        else:
            out = approx_eigenpairs(A, B, A.shape[0], target=0.0, hermitian=False)
            lam_c, vec, resid = max(out, key=lambda t: t[0].real)
            lam = _realify(lam_c, imag_tol)
        red = np.zeros((Kred, Nn), dtype=complex)
        red[:, N - 1] = vec
        radial = True
    else:
        A, B = fd.operator_pencil(which)
        if target is None:
            eta = approximate_eigenpair(data, "L", K, N, imag_tol=imag_tol)
            target = eta[1]
        out = eig_shift_invert(A, B, target=target + 1e-7 * (1 + abs(target)), k=3)
        lam_c, vec, resid = min(out, key=lambda t: abs(t[0] - target))
        lam = _realify(lam_c, imag_tol)
        red = vec.reshape(Nn, Kred).T.copy()
        red = _symmetrize_fourier(red)
        radial = False
    # phase-fix: rotate the largest coefficient to the positive real axis
    idx = np.unravel_index(np.argmax(np.abs(red)), red.shape)
    piv = red[idx]
    if abs(piv) > 0:
        red *= np.conj(piv) / abs(piv)
    if radial:
        red = red.real.astype(complex)
    U = lift_bc_coeffs(CArr.thin(red.reshape(1, Kred, Nn)))
    nrm = norms_batched(U)[0]
    red /= nrm
    # sign convention: positive at the domain midpoint (the target
    # eigenfunctions are positive, and the positivity certificate needs it);
    # T_k(0) alternates 1, 0, -1, 0 with doubling on k >= 1
    full = lift_bc_coeffs(CArr.thin(red.reshape(1, Kred, Nn)))[0].mid()
    scale = np.where(np.arange(full.shape[0]) == 0, 1.0, 2.0)
    tk0 = np.zeros(full.shape[0])
    tk0[0::4] = 1.0
    tk0[2::4] = -1.0
    midval = float(np.real(np.sum(full * (scale * tk0)[:, None])))
    if midval < 0:
        red = -red
    U = lift_bc_coeffs(CArr.thin(red.reshape(1, Kred, Nn)))
    return U[0], lam, resid, radial


def _realify(lam: complex, tol: float) -> float:
    if abs(lam.imag) > tol * max(1.0, abs(lam)):
        raise NonRealApproxEigenvalue(f"eigenvalue {lam} has imaginary part beyond {tol}")
    return float(lam.real)


# ---------------------------------------------------------------------------
# the full pipeline
# ---------------------------------------------------------------------------


def _representable_cap(data: OperatorData, N: int) -> float:
    """Largest base eigenvalue whose eigenfunction the trial space can carry."""
    lam_k1 = (math.pi / (data.domain.r_max - data.domain.r_min)) ** 2
    return lam_k1 + data.cpsi0.lo * (N - 1) ** 2


def _fit_base_coefficients(data, which, lam_bar, norm_ubar, norm_Astar, cfg, cap, say):
    """Pick splitting parameters whose coverage window fits the trial space.

    The defaults can push the first-homotopy window past the largest Fourier
    mode the discretization represents; in that case walk through sharper
    splittings and keep the first admissible one (or the smallest window).
    """
    if which == "L":
        candidates = [(cfg.eta_L, cfg.eta_L0)] + [(e, cfg.eta_L0) for e in (0.55, 0.65, 0.75, 0.85)]
    else:
        candidates = [(cfg.eta_L, cfg.eta_L0)] + [
            (0.5, 0.1), (0.5, 0.05), (0.55, 0.03), (0.6, 0.02), (0.65, 0.012)
        ]
    eta_S = cfg.eta_S_frac * norm_ubar.sqr().lo
    best = None
    best_window = math.inf
    for eta_L, eta_L0 in candidates:
        try:
            sc = base_coefficients(
                data, which, lambda_bar=lam_bar, norm_ubar_sq=norm_ubar.sqr(),
                norm_Astar_ubar=norm_Astar, eta_L=eta_L, eta_L0=eta_L0, eta_S=eta_S,
            )
        except Exception:
            continue
        # window at a unit Gamma scale: the Gamma contribution is tiny next to s0/s1
        w = window_threshold(sc, 1.0)
        if w < best_window:
            best, best_window = sc, w
        if w <= 0.92 * cap:
            say(f"[{which}] splitting eta_L={eta_L}, eta_L0={eta_L0}: window {w:.5g} fits cap {cap:.5g}")
            return sc
    if best is None:
        raise ValidationError("base_coefficients", "no admissible splitting parameters")
    say(
        f"[{which}] warning: best window {best_window:.5g} exceeds representable cap {cap:.5g}; "
        "the homotopy may fail"
    )
    return best


def validate_eigenpair(
    data: OperatorData,
    which: str,
    config: ValidationConfig | None = None,
    target: float | None = None,
    log_fn=None,
) -> ValidatedEigenpair:
    """Run the complete a-posteriori validation for one eigenpair.

    Pipeline: float pair, residual delta, base-problem coefficients, the
    tilde-delta and S homotopies (yielding kappa0), the kappa lift and the
    Newton-Kantorovich radius.
    """
    cfg = config or ValidationConfig()
    say = log_fn or (lambda msg: None)
    t_start = time.time()
    K, N = cfg.K, cfg.N

    say(f"[{which}] approximating eigenpair at K={K}, N={N}")
    ubar, lam_bar, float_resid, radial = approximate_eigenpair(
        data, which, K, N, target=target, imag_tol=cfg.imag_tol
    )
    say(f"[{which}] lambda_bar = {lam_bar:.8g} (float residual {float_resid:.2e})")

    nrm2_enc = gram(ubar.reshape(1, *ubar.shape), ubar.reshape(1, *ubar.shape))[0, 0].item().re
    norm_ubar = Interval(max(nrm2_enc.lo, 0.0), nrm2_enc.hi).sqrt()
    delta = residual_delta(ubar, lam_bar, data, which)
    say(f"[{which}] delta <= {delta.hi:.3e}")

    # || A* ubar || (L case) or || A ubar || (L* case) for the base coefficients
    other = "Lstar" if which == "L" else "L"
    lau = data.apply_operator(LaurentSeries.from_poly(ubar, data.domain), other)
    lau = lau + LaurentSeries.from_poly(
        ubar * CArr._coerce(Interval.point(-lam_bar)).reshape(()), data.domain
    )
    Pa, ea = lau.collapse(data.inv_table)
    norm_Astar = Interval(0.0, (norm_l2(Pa) + Interval(0.0, ea.hi)).hi)

    # the coverage window must stay inside the Fourier range the trial space
    # can represent: tune the splitting parameters if the defaults overshoot
    cap = _representable_cap(data, N)
    sc = _fit_base_coefficients(data, which, lam_bar, norm_ubar, norm_Astar, cfg, cap, say)
    say(f"[{which}] base coefficients s2={sc.s2:.4g} s1={sc.s1:.4g} s0={sc.s0:.4g} s_l={sc.s_lambda:.4g}")

    probe = SOperatorFamily(data, which, ubar, lam_bar, sc, K, N, base_lower=[0.0, 1.0])
    guess = probe.float_guess_target()
    if guess <= 0:
        raise ValidationError("homotopy_S", f"float guess of lambda_1(S) is {guess:.3g} <= 0")
    say(f"[{which}] float lambda_1(S) ~ {guess:.6g}")

    res_d = res_s = None
    last_exc: Exception | None = None
    Gamma = cfg.gamma_factor * guess
    for attempt in range(cfg.max_attempts):
        try:
            tplus = window_threshold(sc, Gamma)
            thr = cfg.window_margin * tplus + cfg.window_extra
            say(f"[{which}] attempt {attempt+1}: Gamma={Gamma:.6g}, window={tplus:.6g}, threshold={thr:.6g}")
            flat = _flatten_with_multiplicity(base_spectrum_tilde_delta0(data, thr))
            min_final = bisect.bisect_right(sorted(flat), tplus)
            fam_d = TildeDeltaFamily(data, K, N, threshold=thr, min_final=max(min_final, 1))
            res_d = run_homotopy(fam_d, opts=cfg.homotopy, log_fn=say)
            base_s = base_spectrum_S0(sc, res_d.lower, res_d.upper, res_d.next_lower_bound, Gamma)
            say(f"[{which}] S0 base spectrum: {len(base_s)-1} values below Gamma")
            fam_s = SOperatorFamily(
                data, which, ubar, lam_bar, sc, K, N, base_lower=base_s, min_final=1
            )
            res_s = run_homotopy(fam_s, opts=cfg.homotopy, log_fn=say)
            break
        except (NeedLargerM, CoverageGap) as exc:
            last_exc = exc
            say(f"[{which}] attempt {attempt+1} failed: {exc}; enlarging Gamma window")
            Gamma *= 1.6
            res_d = res_s = None
    if res_s is None:
        raise ValidationError("homotopy", f"homotopies failed after {cfg.max_attempts} attempts: {last_exc}")

    lam1_S = res_s.lower[0]
    if lam1_S <= 0:
        raise ValidationError("homotopy_S", f"certified lambda_1(S) lower bound {lam1_S:.3e} <= 0")
    kappa0 = Interval(0.0, (Interval(1.0, 1.0) / Interval.point(lam1_S).sqrt()).hi)
    say(f"[{which}] lambda_1(S) >= {lam1_S:.6g}  => kappa0 <= {kappa0.hi:.6g}")

    sig2 = data.sigma2
    if cfg.xi2 is None:
        xi2 = sig2.sqr() / (norm_ubar.sqr() * 16.0)
    else:
        xi2 = Interval.point(cfg.xi2)
    kappa, k1, k2 = kappa_from_kappa0(kappa0, data, which, lam_bar, norm_ubar, cfg.theta, xi2)
    say(f"[{which}] kappa <= {kappa.hi:.6g}")
    rho = newton_kantorovich(delta, kappa, gamma=1.0)
    say(f"[{which}] rho <= {rho.hi:.3e}")

    emb = embedding_constants(data.domain, xi2)
    return ValidatedEigenpair(
        u_bar=ChebFourierSeries(ubar, data.domain),
        lambda_bar=lam_bar,
        which=which,
        radial=radial and which == "L",
        rho=rho,
        delta=delta,
        kappa0=kappa0,
        kappa=kappa,
        gamma=1.0,
        theta=cfg.theta,
        xi2=xi2,
        norm_ubar=norm_ubar,
        embedding=emb,
        base_coeffs=sc,
        homotopy_delta=res_d,
        homotopy_S=res_s,
        seconds=time.time() - t_start,
    )
