"""Certification of the validated pairs and the Lyapunov-exponent enclosure.

Three steps turn two validated eigenpairs into a signed conditioned Lyapunov
exponent: (i) positivity of the backward eigenfunction on the annulus, via an
interior infimum plus monotone boundary strips (the radial reduction makes the
C^1 embedding available); (ii) non-orthogonality of the two eigenfunctions,
which forces both validated eigenvalues to be the common escape rate; and
(iii) a rigorous evaluation of the expansion-rate average against the
quasi-ergodic density, normalized by the certified mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .interval import Interval, IntervalError
from .ivarray import CArr, IArr
from .newton import ValidatedEigenpair
from .operators import ModelParams, expansion_rate, expansion_sup_abs
from .series import ChebFourierSeries, Domain, clenshaw_radial

__all__ = [
    "PositivityFailed",
    "PairingFailed",
    "NormalizationFailed",
    "PositivityCertificate",
    "PairingCertificate",
    "CertifiedLyapunov",
    "check_positivity",
    "check_pairing",
    "lyapunov_enclosure",
]


class PositivityFailed(IntervalError):
    def __init__(self, region: str, msg: str):
        super().__init__(f"positivity failed on {region}: {msg}")
        self.region = region


class PairingFailed(IntervalError):
    """<eta, phi> could not be certified nonzero."""


class NormalizationFailed(IntervalError):
    """The quasi-ergodic mass enclosure contains zero."""


@dataclass
class PositivityCertificate:
    epsilon: float
    interior_margin: float  # certified inf of the exact eigenfunction inside
    strip_margin_left: float  # certified inf of d(eta)/dr on the left strip
    strip_margin_right: float  # certified sup of d(eta)/dr on the right strip (< 0)
    c0_error: float
    c1_error: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class PairingCertificate:
    inner_lower: float  # certified lower bound of |<eta_bar, phi_bar>|
    threshold: float  # error budget it must exceed

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class CertifiedLyapunov:
    lambda_c: Interval  # quasi-ergodic average: (int e eta phi) / (int eta phi)
    lambda_c_unit_l2: Interval  # same integral with unit-L2-normalized eigenfunctions
    sign: str  # positive | negative | indeterminate (identical in both conventions)
    lambda0: Interval
    positivity: PositivityCertificate
    pairing: PairingCertificate
    numerator: Interval
    denominator: Interval

    def to_dict(self) -> dict:
        lo, hi = self.lambda_c.to_decimal_strings(6)
        lo2, hi2 = self.lambda_c_unit_l2.to_decimal_strings(6)
        l0 = self.lambda0.to_decimal_strings(8)
        return {
            "lambda_c": [lo, hi],
            "lambda_c_float": [self.lambda_c.lo, self.lambda_c.hi],
            "lambda_c_unit_l2": [lo2, hi2],
            "lambda_c_unit_l2_float": [self.lambda_c_unit_l2.lo, self.lambda_c_unit_l2.hi],
            "sign": self.sign,
            "lambda0": list(l0),
            "positivity": self.positivity.to_dict(),
            "pairing": self.pairing.to_dict(),
            "numerator": [self.numerator.lo, self.numerator.hi],
            "denominator": [self.denominator.lo, self.denominator.hi],
        }


# ---------------------------------------------------------------------------
# rigorous 1-D bound proofs by adaptive subdivision
# ---------------------------------------------------------------------------


def _prove_radial_lower(profile: CArr, t_lo: float, t_hi: float, bound: float, depth_cap: int = 30):
    """Prove min of the (real) radial profile over [t_lo, t_hi] exceeds `bound`.

    Adaptive bisection: boxes whose enclosure cannot decide are split; returns
    the certified margin (a rigorous lower bound of the profile minus `bound`),
    or raises ValueError when a box certifiably dips below / the cap is hit.
    """
    if t_hi <= t_lo:
        return math.inf
    queue = [(t_lo, t_hi, 0)]
    margin = math.inf
    while queue:
        lo, hi, depth = queue.pop()
        vals = clenshaw_radial(profile, IArr(np.array([lo]), np.array([hi])))
        enc = vals[0].item().re
        if enc.lo > bound:
            margin = min(margin, enc.lo - bound)
            continue
        if enc.hi <= bound:
            raise ValueError(f"profile dips to {enc.hi:.6g} <= {bound:.6g} near t in [{lo:.6g}, {hi:.6g}]")
        if depth >= depth_cap:
            raise ValueError(f"inconclusive at depth {depth} near t in [{lo:.6g}, {hi:.6g}]")
        mid = 0.5 * (lo + hi)
        queue.append((lo, mid, depth + 1))
        queue.append((mid, hi, depth + 1))
    return margin


# ---------------------------------------------------------------------------
# certification steps
# ---------------------------------------------------------------------------


def check_positivity(eta: ValidatedEigenpair, epsilon: float | None = None) -> PositivityCertificate:
    """Certify that the exact backward eigenfunction is positive on the annulus.

    Interior: inf eta_bar - ||err||_C0 > 0 on the eps-shrunk annulus.
    Strips: d(eta_bar)/dr -+ ||err'||_C0 keeps a sign on each boundary strip,
    which together with the zero boundary value forces positivity there.
    Requires the radial flag (the C^1 embedding is one-dimensional).
    """
    if not eta.radial:
        raise PositivityFailed("precondition", "eigenpair is not radial; C^1 strip argument unavailable")
    dom = eta.u_bar.domain
    l2 = dom.r_max - dom.r_min
    if epsilon is None:
        epsilon = 0.05 * l2
    if not 0.0 < epsilon < 0.5 * l2:
        raise PositivityFailed("strip", f"epsilon={epsilon} must lie strictly inside (0, {0.5 * l2})")
    c0_err = (eta.embedding.upsilon_X_C0 * Interval.point(eta.rho.hi)).hi
    c1_err = (eta.embedding.upsilon_Xradial_C1 * Interval.point(eta.rho.hi)).hi

    N = eta.u_bar.N
    prof = eta.u_bar.coeffs[:, N - 1]
    dprof = ChebFourierSeries(eta.u_bar.coeffs, dom).d_dr().coeffs[:, N - 1]

    # map radii to t-space
    def t_of(r):
        return (2 * r - (dom.r_max + dom.r_min)) / (dom.r_max - dom.r_min)

    try:
        interior = _prove_radial_lower(prof, t_of(dom.r_min + epsilon), t_of(dom.r_max - epsilon), c0_err)
    except ValueError as exc:
        raise PositivityFailed("interior", str(exc)) from exc
    try:
        left = _prove_radial_lower(dprof, -1.0, t_of(dom.r_min + epsilon), c1_err)
    except ValueError as exc:
        raise PositivityFailed("strip_left", str(exc)) from exc
    try:
        neg = CArr(-dprof.re, -dprof.im)
        right = _prove_radial_lower(neg, t_of(dom.r_max - epsilon), 1.0, c1_err)
    except ValueError as exc:
        raise PositivityFailed("strip_right", str(exc)) from exc
    return PositivityCertificate(
        epsilon=epsilon,
        interior_margin=interior,
        strip_margin_left=left,
        strip_margin_right=-right,
        c0_error=c0_err,
        c1_error=c1_err,
    )


def check_pairing(eta: ValidatedEigenpair, phi: ValidatedEigenpair) -> PairingCertificate:
    """Certify <eta, phi>_{L2} != 0, hence both eigenvalues equal the escape rate."""
    ip = eta.u_bar.inner_L2(phi.u_bar)
    inner_lower = float(max(ip.re.mig, ip.im.mig))
    threshold = (
        eta.norm_ubar * Interval.point(phi.rho.hi)
        + phi.norm_ubar * Interval.point(eta.rho.hi)
        + Interval.point(eta.rho.hi) * Interval.point(phi.rho.hi)
    ).hi
    if not inner_lower > threshold:
        raise PairingFailed(
            f"|<eta,phi>| >= {inner_lower:.6g} does not exceed the error budget {threshold:.6g}"
        )
    return PairingCertificate(inner_lower=inner_lower, threshold=threshold)


def lyapunov_enclosure(
    eta: ValidatedEigenpair,
    phi: ValidatedEigenpair,
    params: ModelParams,
    positivity: PositivityCertificate | None = None,
    pairing: PairingCertificate | None = None,
    epsilon: float | None = None,
) -> CertifiedLyapunov:
    """Rigorous enclosure of the conditioned Lyapunov exponent.

    Two conventions are certified, identical in sign:

    * `lambda_c`: (integral of e eta phi) / (integral of eta phi) --- the
      average against the normalized quasi-ergodic density, invariant under
      any rescaling of the validated eigenfunctions;
    * `lambda_c_unit_l2`: the same integral with both eigenfunctions
      L2-normalized (oriented so their inner product is positive), which is
      the convention behind published reference values.

    Both carry the L2-portions of the validation radii as error budgets.
    """
    if positivity is None:
        positivity = check_positivity(eta, epsilon=epsilon)
    if pairing is None:
        pairing = check_pairing(eta, phi)
    e = expansion_rate(params)
    eta_s = eta.u_bar
    phi_s = phi.u_bar
    p = e.multiply(eta_s)
    num_main = p.inner_L2(phi_s.conj()).re  # mean(e eta phi)
    den_main = eta_s.inner_L2(phi_s.conj()).re  # mean(eta phi)
    e_sup = expansion_sup_abs(params)
    rho_e, rho_p = Interval.point(eta.rho.hi), Interval.point(phi.rho.hi)
    cross = eta.norm_ubar * rho_p + phi.norm_ubar * rho_e + rho_e * rho_p
    num_err = (e_sup * cross).hi
    den_err = cross.hi
    num = Interval(num_main.lo - num_err, num_main.hi + num_err)
    den = Interval(den_main.lo - den_err, den_main.hi + den_err)
    if den.lo <= 0.0 <= den.hi:
        raise NormalizationFailed(f"quasi-ergodic mass enclosure {den} contains zero")
    lam_c = num / den
    # unit-L2 convention: true norms lie within rho of the approximate ones
    n_eta = Interval(max(eta.norm_ubar.lo - rho_e.hi, 1e-300), eta.norm_ubar.hi + rho_e.hi)
    n_phi = Interval(max(phi.norm_ubar.lo - rho_p.hi, 1e-300), phi.norm_ubar.hi + rho_p.hi)
    lam_unit = num / (n_eta * n_phi)
    if den.hi < 0:
        lam_unit = -lam_unit
    if lam_c.lo > 0:
        sign = "positive"
    elif lam_c.hi < 0:
        sign = "negative"
    else:
        sign = "indeterminate"
    lam0 = eta.eigenvalue_enclosure.intersect(phi.eigenvalue_enclosure)
    return CertifiedLyapunov(
        lambda_c=lam_c,
        lambda_c_unit_l2=lam_unit,
        sign=sign,
        lambda0=lam0,
        positivity=positivity,
        pairing=pairing,
        numerator=num,
        denominator=den,
    )
