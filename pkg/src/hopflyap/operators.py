"""Model coefficients and Kolmogorov operators on the annulus strip.

The backward operator has the generic form

    L u = d (u_rr + c(r) u_psipsi) + f(r) u_r + g(r,psi) u_psi,

with d = sigma^2/2, c(r) = 4/r^2, f(r) = alpha r - a r^3 + sigma^2/(2r) and
g = 2 r^2 (b + sqrt(a^2+b^2) cos psi) for the Hopf normal form; the adjoint is
L* u = d (u_rr + c u_psipsi) - f u_r - g u_psi - h u with h = f' + g_psi.
All coefficients are kept as exact Laurent-in-r, trigonometric-in-psi data so
operator applications stay exact until a final collapse step.

A constant-coefficient variant (all drifts zero, c(r) = const) backs the
manufactured-solution tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .interval import ComplexInterval, Interval, IntervalError
from .ivarray import CArr, IArr
from .series import (
    ChebFourierSeries,
    Domain,
    InverseRadialTable,
    LaurentSeries,
    ZEndpointConstraint,
    chebyshev_values,
    fourier_deriv,
    fourier_shift,
    radial_conv,
    r_power_coeffs,
)

__all__ = [
    "ModelParams",
    "OperatorData",
    "EmbeddingConstants",
    "InvalidSplitting",
    "BaseCoefficients",
    "expansion_rate",
    "embedding_constants",
    "norm_comparisons",
    "base_coefficients",
    "apply_tilde_delta",
    "apply_L",
    "apply_Lstar",
    "constant_CV",
]


class InvalidSplitting(IntervalError):
    """Base-problem splitting parameters violate their admissibility window."""


@dataclass(frozen=True)
class ModelParams:
    """Hopf normal-form parameters and the annulus (r_min, r_max)."""

    a: float
    alpha: float
    beta: float
    b: float
    sigma: float
    r_min: float
    r_max: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not (0 < self.r_min < self.r_max):
            raise ValueError("need 0 < r_min < r_max")

    @property
    def domain(self) -> Domain:
        return Domain(self.r_min, self.r_max)


# a coefficient function: sum over terms of scalar * radial(r) * r^{-j} * e^{i dn psi}
@dataclass(frozen=True)
class CoeffTerm:
    dn: int
    j: int
    radial: IArr
    scalar: ComplexInterval


def _mul_terms(u: LaurentSeries, terms: list[CoeffTerm]) -> LaurentSeries:
    out = LaurentSeries({}, u.domain)
    if not terms:
        return out
    for term in terms:
        part = LaurentSeries({}, u.domain)
        for j, p in u.parts.items():
            prod = radial_conv(term.radial, p) * CArr._coerce(term.scalar).reshape(())
            if term.dn != 0:
                prod = fourier_shift(prod, term.dn, abs(term.dn))
            part = part + LaurentSeries({j + term.j: prod}, u.domain)
        out = out + part
    return out


def _terms_d_dpsi(terms: list[CoeffTerm]) -> list[CoeffTerm]:
    out = []
    for t in terms:
        if t.dn == 0:
            continue
        out.append(CoeffTerm(t.dn, t.j, t.radial, t.scalar * ComplexInterval.point(1j * t.dn)))
    return out


def _terms_d_dr(terms: list[CoeffTerm], domain: Domain) -> list[CoeffTerm]:
    from .series import cheb_deriv

    out = []
    for t in terms:
        if t.radial.shape[0] > 1:
            dr = cheb_deriv(CArr.from_real(t.radial.reshape(-1, 1)), domain.dt_dr).re[:, 0]
            out.append(CoeffTerm(t.dn, t.j, dr, t.scalar))
        if t.j != 0:
            out.append(CoeffTerm(t.dn, t.j + 1, t.radial, t.scalar * float(-t.j)))
    return out


class OperatorData:
    """Exact operator coefficients plus validated radial inverse approximations."""

    def __init__(
        self,
        domain: Domain,
        d: Interval,
        cpsi_terms: list[CoeffTerm],
        cpsi0: Interval,
        f_terms: list[CoeffTerm],
        g_terms: list[CoeffTerm],
        inv_table: InverseRadialTable | None = None,
        params: ModelParams | None = None,
    ):
        self.domain = domain
        self.d = d
        self.cpsi_terms = cpsi_terms
        self.cpsi0 = cpsi0
        self.f_terms = f_terms
        self.g_terms = g_terms
        self.h_terms = _terms_d_dr(f_terms, domain) + _terms_d_dpsi(g_terms)
        self.inv_table = inv_table or InverseRadialTable(domain)
        self.params = params

    # -- construction -----------------------------------------------------

    @staticmethod
    def from_params(params: ModelParams, inv_modes: int = 80) -> "OperatorData":
        dom = params.domain
        sig2 = Interval.point(params.sigma).sqr()
        d = sig2 * 0.5
        rp2 = r_power_coeffs(dom, 2)
        rp3 = r_power_coeffs(dom, 3)
        c = (Interval.point(params.a).sqr() + Interval.point(params.b).sqr()).sqrt()

        one = IArr.thin(np.array([1.0]))
        # f = alpha r - a r^3 + (sigma^2/2) / r
        fpoly = IArr.thin(np.zeros(4))
        r1 = r_power_coeffs(dom, 1)
        fpoly[:2] = r1 * Interval.point(params.alpha)
        fpoly = fpoly + _pad(rp3, 4) * Interval.point(-params.a)
        f_terms = [
            CoeffTerm(0, 0, fpoly, ComplexInterval.point(1.0)),
            CoeffTerm(0, 1, one, ComplexInterval(d, Interval.point(0.0))),
        ]
        # g = 2 b r^2 + sqrt(a^2+b^2) r^2 (e^{i psi} + e^{-i psi})
        g_terms = [
            CoeffTerm(0, 0, rp2 * (2.0 * Interval.point(params.b)), ComplexInterval.point(1.0)),
            CoeffTerm(1, 0, rp2 * c, ComplexInterval.point(1.0)),
            CoeffTerm(-1, 0, rp2 * c, ComplexInterval.point(1.0)),
        ]
        cpsi_terms = [CoeffTerm(0, 2, IArr.thin(np.array([4.0])), ComplexInterval.point(1.0))]
        cpsi0 = Interval(4.0, 4.0) / Interval.point(params.r_max).sqr()
        return OperatorData(
            dom, d, cpsi_terms, cpsi0, f_terms, g_terms,
            InverseRadialTable(dom, n_modes=inv_modes), params,
        )

    @staticmethod
    def constant_coefficient(domain: Domain, sigma: float, cpsi0: float | None = None) -> "OperatorData":
        """Synthetic self-adjoint operator d*(u_rr + c0 u_psipsi): zero drifts."""
        d = Interval.point(sigma).sqr() * 0.5
        if cpsi0 is None:
            c0 = Interval(4.0, 4.0) / Interval.point(domain.r_max).sqr()
        else:
            c0 = Interval.point(cpsi0)
        cpsi_terms = [CoeffTerm(0, 0, IArr(np.array([c0.lo]), np.array([c0.hi])), ComplexInterval.point(1.0))]
        return OperatorData(domain, d, cpsi_terms, c0, [], [], InverseRadialTable(domain))

    @property
    def sigma2(self) -> Interval:
        return self.d * 2.0

    def is_self_adjoint(self) -> bool:
        return not self.f_terms and not self.g_terms

    # -- operator applications (exact, Laurent level) ------------------------

    def laplace_like(self, u: LaurentSeries) -> LaurentSeries:
        """tilde-Delta u = u_rr + c(r) u_psipsi."""
        return u.d_dr().d_dr() + _mul_terms(u.d_dpsi().d_dpsi(), self.cpsi_terms)

    def drift(self, u: LaurentSeries) -> LaurentSeries:
        """V u = f u_r + g u_psi."""
        return _mul_terms(u.d_dr(), self.f_terms) + _mul_terms(u.d_dpsi(), self.g_terms)

    def mul_h(self, u: LaurentSeries) -> LaurentSeries:
        return _mul_terms(u, self.h_terms)

    def L(self, u: LaurentSeries) -> LaurentSeries:
        return self.laplace_like(u).scale(self.d) + self.drift(u)

    def Lstar(self, u: LaurentSeries) -> LaurentSeries:
        return self.laplace_like(u).scale(self.d) - self.drift(u) - self.mul_h(u)

    def apply_operator(self, u: LaurentSeries, which: str) -> LaurentSeries:
        if which == "L":
            return self.L(u)
        if which == "Lstar":
            return self.Lstar(u)
        raise ValueError(f"unknown operator {which!r}")

    # -- pointwise radial evaluation (for rigorous 1-D sups) ------------------

    def _eval_terms_radial(self, terms: list[CoeffTerm], t: IArr, r: IArr, dn_filter: int) -> CArr:
        """Evaluate sum of terms with Fourier index dn_filter at radial boxes."""
        B = t.shape[0]
        acc = CArr.zeros((B,))
        for term in terms:
            if term.dn != dn_filter:
                continue
            K = term.radial.shape[0]
            T = chebyshev_values(K, t)  # (K, B)
            s = np.where(np.arange(K) == 0, 1.0, 2.0)
            vals = (IArr(np.broadcast_to((term.radial.lo * s)[:, None], (K, B)).copy(),
                          np.broadcast_to((term.radial.hi * s)[:, None], (K, B)).copy()) * T).csum(0)
            if term.j != 0:
                rp = r.copy()
                for _ in range(term.j - 1):
                    rp = rp * r
                vals = vals * rp.recip()
            acc = acc + CArr._coerce(term.scalar).reshape(()) * CArr.from_real(vals)
        return acc

    def f_point(self, r: Interval) -> Interval:
        t = self.domain.t_of_r(r)
        tb = IArr(np.array([t.lo]), np.array([t.hi]))
        rb = IArr(np.array([r.lo]), np.array([r.hi]))
        v = self._eval_terms_radial(self.f_terms, tb, rb, 0)
        return v[0].item().re

    def z_constraints(self, s: float, s2_base: Interval, which: str) -> tuple[ZEndpointConstraint, ZEndpointConstraint]:
        """Endpoint conditions making (s Op + (1-s)(2 s2/sigma^2) tilde-Delta) u vanish.

        At the endpoints every non-derivative term of the operator hits u = 0,
        so only  cw * u'' + s * (+-f(r_e)) * u'  survives.
        """
        cw = self.d * s + (s2_base * 2.0 / self.sigma2) * (1.0 - s)
        sign = 1.0 if which == "L" else -1.0
        cons = []
        for r_end in (self.domain.r_min, self.domain.r_max):
            fw = self.f_point(Interval.point(r_end)) * (s * sign)
            cons.append(ZEndpointConstraint(w1=fw, w2=cw))
        return cons[0], cons[1]

    # -- rigorous scalar constants -----------------------------------------------

    def _branch_range(self, shift: Interval, sign: float, n0: int = 4096) -> Interval:
        """Range of  h_0(r) + sign * h_1mag(r) + shift  over r (h linear in sin psi)."""
        lo_t, hi_t = -1.0, 1.0
        edges = np.linspace(lo_t, hi_t, n0 + 1)
        t = IArr(edges[:-1].copy(), edges[1:].copy())
        r = _r_of_t_boxes(self.domain, t)
        h0 = self._eval_terms_radial(self.h_terms, t, r, 0).re
        h1 = self._eval_terms_radial(self.h_terms, t, r, 1)
        # real coefficient: h = h0(r) + 2 Re(h1 e^{i psi}); the psi-extremes sit
        # at amplitude +-2|h1|, enclosed between component-mig and modulus bounds
        amp = IArr(2.0 * h1.mig_lb(), 2.0 * h1.mag())
        vals = h0 + amp * sign + IArr.from_scalar(shift, t.shape)
        return Interval(float(np.min(vals.lo)), float(np.min(vals.hi))), Interval(
            float(np.max(vals.lo)), float(np.max(vals.hi))
        )

    def h_inf(self, shift: float = 0.0) -> Interval:
        """Enclosure of inf over Omega of h + shift."""
        s = Interval.point(shift)
        inf_m, _ = self._branch_range(s, -1.0)
        inf_p, _ = self._branch_range(s, 1.0)
        return Interval(min(inf_m.lo, inf_p.lo), min(inf_m.hi, inf_p.hi))

    def h_sup_abs(self, shift: float = 0.0) -> Interval:
        """Enclosure of sup over Omega of |h + shift|."""
        s = Interval.point(shift)
        highs = []
        for sign in (-1.0, 1.0):
            inf_b, sup_b = self._branch_range(s, sign)
            highs.append(max(abs(inf_b.lo), abs(sup_b.hi)))
        return Interval(0.0, max(highs))

    def constant_CV(self, n0: int = 4096) -> Interval:
        """C_V = sqrt(||f^2||_inf + ||g^2 / c(r)||_inf) (upper bound, rigorous)."""
        edges = np.linspace(-1.0, 1.0, n0 + 1)
        t = IArr(edges[:-1].copy(), edges[1:].copy())
        r = _r_of_t_boxes(self.domain, t)
        f0 = self._eval_terms_radial(self.f_terms, t, r, 0).re
        fsq = float(np.max((abs(f0) * abs(f0)).hi)) if self.f_terms else 0.0
        gsq = 0.0
        if self.g_terms:
            g0 = self._eval_terms_radial(self.g_terms, t, r, 0).re
            g1 = self._eval_terms_radial(self.g_terms, t, r, 1)
            amp = IArr(np.zeros(t.shape[0]), g1.mag() * 2.0)
            cp = self._eval_terms_radial(self.cpsi_terms, t, r, 0).re
            for sign in (-1.0, 1.0):
                g = g0 + amp * sign
                val = (abs(g) * abs(g)) * cp.recip()
                gsq = max(gsq, float(np.max(val.hi)))
        return (Interval(0.0, fsq) + Interval(0.0, gsq)).sqrt()


def _pad(x: IArr, K: int) -> IArr:
    out = IArr.zeros((K,))
    out[: x.shape[0]] = x
    return out


def _r_of_t_boxes(domain: Domain, t: IArr) -> IArr:
    half = domain.half
    cen = domain.center
    return t * IArr.from_scalar(half, t.shape) + IArr.from_scalar(cen, t.shape)


# ---------------------------------------------------------------------------
# spec-surface operations
# ---------------------------------------------------------------------------


def expansion_rate(params: ModelParams) -> ChebFourierSeries:
    """Linear expansion rate e(r,psi) = alpha - 2 a r^2 + r^2 sqrt(a^2+b^2) sin psi."""
    dom = params.domain
    rp2 = r_power_coeffs(dom, 2)
    c = (Interval.point(params.a).sqr() + Interval.point(params.b).sqr()).sqrt()
    K = rp2.shape[0]
    out = CArr.zeros((K, 3))
    const = IArr.zeros((K,))
    const[0:1] = IArr.thin(np.array([params.alpha]))
    radial0 = const + rp2 * Interval.point(-2.0 * params.a)
    out[:, 1] = CArr.from_real(radial0)
    # r^2 c sin psi = -i/2 c r^2 e^{i psi} + i/2 c r^2 e^{-i psi}
    amp = rp2 * (c * 0.5)
    out[:, 2] = CArr(IArr.zeros((K,)), -amp)
    out[:, 0] = CArr(IArr.zeros((K,)), amp)
    return ChebFourierSeries(out, dom)


def expansion_sup_abs(params: ModelParams, n0: int = 4096) -> Interval:
    """Upper bound of sup |e| over the strip."""
    dom = params.domain
    edges = np.linspace(-1.0, 1.0, n0 + 1)
    t = IArr(edges[:-1].copy(), edges[1:].copy())
    r = _r_of_t_boxes(dom, t)
    r2 = r * r
    c = (Interval.point(params.a).sqr() + Interval.point(params.b).sqr()).sqrt()
    base = IArr.from_scalar(Interval.point(params.alpha), t.shape) + r2 * (-2.0 * Interval.point(params.a))
    amp = r2 * c
    m = 0.0
    for sign in (-1.0, 1.0):
        v = abs(base + amp * sign)
        m = max(m, float(np.max(v.hi)))
    return Interval(0.0, m)


@dataclass(frozen=True)
class EmbeddingConstants:
    gamma1: Interval
    gamma2: Interval
    l1: Interval
    l2: Interval
    C0: Interval
    C1: Interval
    C2: Interval
    m1: Interval
    m2: Interval
    upsilon_X_C0: Interval
    upsilon_Xradial_C1: Interval


def embedding_constants(params: ModelParams, xi2: Interval) -> EmbeddingConstants:
    """Explicit Sobolev embedding constants for the weighted H^2 norm."""
    from .interval import TWO_PI

    if not xi2.lo > 0:
        raise ValueError("xi2 must be positive")
    g1 = Interval.point(1.1548)
    g2 = Interval.point(0.22361)
    l1 = TWO_PI
    l2 = Interval.point(params.r_max) - Interval.point(params.r_min)
    l12, l22 = l1.sqr(), l2.sqr()
    C0 = (l1 * l2).sqrt()
    C1 = (g1 / Interval(3.0, 3.0).sqrt()) * ((l12 + l22) / (l1 * l2)).sqrt()
    C2 = (g2 / 3.0) * (((l12 + l22).sqr() + (l12.sqr() + l22.sqr()) * (Interval(4.0, 4.0) / 3.0)) / (l1 * l2)).sqrt()
    m1 = _imax(Interval.point(params.r_max) * 0.5, Interval.point(1.0))
    m2 = _imax(
        Interval.point(params.r_max).sqr() * 0.25,
        (Interval.point(params.r_min).sqr() + Interval.point(params.r_max).sqr())
        / (Interval.point(params.r_min).sqr() * 2.0),
    )
    pref = (Interval(6.0, 6.0) * (l1 * 0.5) * l2).sqrt()  # sqrt(6 pi (r_max - r_min))
    ups0 = pref * _imax(_imax(C0, C1 * m1), C2 * m2 / xi2.sqrt())
    ups1 = (l2 / l2.tanh()).sqrt() * _imax(Interval.point(1.0), Interval(1.0, 1.0) / xi2.sqrt())
    return EmbeddingConstants(g1, g2, l1, l2, C0, C1, C2, m1, m2, ups0, ups1)


def _imax(x: Interval, y: Interval) -> Interval:
    return Interval(max(x.lo, y.lo), max(x.hi, y.hi))


def _imin(x: Interval, y: Interval) -> Interval:
    return Interval(min(x.lo, y.lo), min(x.hi, y.hi))


def norm_comparisons(params: ModelParams) -> dict:
    """Equivalence constants between the plain and weighted gradient/Laplacian."""
    rmin = Interval.point(params.r_min)
    rmax = Interval.point(params.r_max)
    two = Interval(2.0, 2.0)
    one = Interval(1.0, 1.0)
    four = Interval(4.0, 4.0)
    s = rmin.sqr() + rmax.sqr()
    return {
        "nabla_lo": _imin(two / rmax, one),
        "nabla_hi": _imax(two / rmin, one),
        "delta_lo": _imin(four / rmax.sqr(), rmin.sqr() * 2.0 / s),
        "delta_hi": _imax(four / rmin.sqr(), rmax.sqr() * 2.0 / s),
    }


@dataclass(frozen=True)
class BaseCoefficients:
    """Safe-endpoint coefficients (s2, s1, s0, s_lambda) of the comparison operator."""

    s2: float
    s1: float
    s0: float
    s_lambda: float

    def as_intervals(self) -> tuple[Interval, Interval, Interval, Interval]:
        return (
            Interval.point(self.s2),
            Interval.point(self.s1),
            Interval.point(self.s0),
            Interval.point(self.s_lambda),
        )


def base_coefficients(
    data: OperatorData,
    which: str,
    lambda_bar: float,
    norm_ubar_sq: Interval,
    norm_Astar_ubar: Interval,
    eta_L: float = 0.5,
    eta_L0: float = 0.25,
    eta_S: float | None = None,
) -> BaseCoefficients:
    """Coefficients of the quadratic comparison form under the target one.

    The returned floats are the safe endpoints of the interval computation
    (s2, s0, s_lambda rounded down, s1 rounded up), so the comparison
    inequality holds for these exact values.
    """
    if eta_S is None:
        eta_S = 0.5 * norm_ubar_sq.lo
    if not (0.0 < eta_S < norm_ubar_sq.lo):
        raise InvalidSplitting(f"eta_S={eta_S} outside (0, ||u||^2)")
    sig2 = data.sigma2
    lam = Interval.point(lambda_bar)
    CV = data.constant_CV()
    h0 = data.h_inf()
    if which == "L":
        if not (0.0 < eta_L < 1.0):
            raise InvalidSplitting(f"eta_L={eta_L} outside (0,1)")
        s2 = sig2.sqr() * ((1.0 - eta_L) / 4.0)
        s1 = CV.sqr() * ((1.0 - eta_L) / eta_L) - lam * sig2
        s0 = lam.sqr() + lam * h0 - norm_Astar_ubar.sqr() / Interval.point(eta_S)
    elif which == "Lstar":
        if not (eta_L > 0 and eta_L0 > 0 and eta_L + eta_L0 < 1.0):
            raise InvalidSplitting(f"eta_L={eta_L}, eta_L0={eta_L0} violate the splitting window")
        hsup = data.h_sup_abs()
        s2 = sig2.sqr() * ((1.0 - eta_L - eta_L0) / 4.0)
        s1 = CV.sqr() / Interval.point(eta_L) - lam * sig2
        s0 = (
            lam.sqr()
            + lam * h0
            - norm_Astar_ubar.sqr() / Interval.point(eta_S)
            - hsup.sqr() / Interval.point(eta_L0)
        )
    else:
        raise ValueError(f"unknown operator {which!r}")
    s_lambda = norm_ubar_sq - Interval.point(eta_S)
    if not s2.lo > 0:
        raise InvalidSplitting("s2 not verifiably positive")
    return BaseCoefficients(s2=s2.lo, s1=s1.hi, s0=s0.lo, s_lambda=s_lambda.lo)


# -- spec-surface wrappers around the Laurent machinery -------------------------


def apply_tilde_delta(u: ChebFourierSeries, data: OperatorData) -> tuple[ChebFourierSeries, Interval]:
    lau = data.laplace_like(LaurentSeries.from_poly(u.coeffs, u.domain))
    poly, err = lau.collapse(data.inv_table)
    return ChebFourierSeries(poly, u.domain), err


def apply_L(u: ChebFourierSeries, data: OperatorData) -> tuple[ChebFourierSeries, Interval]:
    lau = data.L(LaurentSeries.from_poly(u.coeffs, u.domain))
    poly, err = lau.collapse(data.inv_table)
    return ChebFourierSeries(poly, u.domain), err


def apply_Lstar(u: ChebFourierSeries, data: OperatorData) -> tuple[ChebFourierSeries, Interval]:
    lau = data.Lstar(LaurentSeries.from_poly(u.coeffs, u.domain))
    poly, err = lau.collapse(data.inv_table)
    return ChebFourierSeries(poly, u.domain), err


def constant_CV(data: OperatorData) -> Interval:
    return data.constant_CV()
