"""Directed-rounding interval arithmetic on double-precision endpoints.

Every operation returns an interval that contains the exact real result for
all points of the operand intervals.  Outward rounding is realized with
error-free transformations (TwoSum, Dekker's product) followed by a
next-representable adjustment only when the rounded result is inexact, so
operations whose exact result is representable stay thin (width 0).

Transcendental kernels (sin, cos, exp) rely on the platform libm being
accurate to a couple of ulps and add a conservative 4-ulp margin on top.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Interval",
    "ComplexInterval",
    "IntervalError",
    "ZeroInDivisor",
    "EmptyIntersection",
    "DomainError",
    "PI",
    "TWO_PI",
    "PI_HALF",
    "hull",
    "intersect",
]

_INF = math.inf


class IntervalError(Exception):
    """Base class for interval arithmetic failures."""


class ZeroInDivisor(IntervalError):
    """Division by an interval containing zero."""


class EmptyIntersection(IntervalError):
    """Intersection of disjoint intervals."""


class DomainError(IntervalError):
    """Argument interval leaves the domain of the function."""


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _two_sum(a: float, b: float) -> tuple[float, float]:
    # Knuth's TwoSum: a + b = s + e exactly.
    s = a + b
    bb = s - a
    e = (a - (s - bb)) + (b - bb)
    return s, e


_SPLIT = 134217729.0  # 2**27 + 1


def _two_prod(a: float, b: float) -> tuple[float, float]:
    # Dekker's product: a * b = p + e exactly, valid away from overflow and
    # underflow of the intermediates; outside that range the caller widens.
    p = a * b
    if (
        not math.isfinite(p)
        or abs(a) > 1e150
        or abs(b) > 1e150
        or (p != 0.0 and abs(p) < 1e-290)
    ):
        return p, math.nan  # caller widens unconditionally
    aa = a * _SPLIT
    ahi = aa - (aa - a)
    alo = a - ahi
    bb = b * _SPLIT
    bhi = bb - (bb - b)
    blo = b - bhi
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, e


def _add_lo(a: float, b: float) -> float:
    s, e = _two_sum(a, b)
    return _down(s) if e < 0 or math.isnan(e) else s


def _add_hi(a: float, b: float) -> float:
    s, e = _two_sum(a, b)
    return _up(s) if e > 0 or math.isnan(e) else s


def _mul_lo(a: float, b: float) -> float:
    p, e = _two_prod(a, b)
    return _down(p) if (e < 0 or math.isnan(e)) else p


def _mul_hi(a: float, b: float) -> float:
    p, e = _two_prod(a, b)
    return _up(p) if (e > 0 or math.isnan(e)) else p


def _div_lo(a: float, b: float) -> float:
    q = a / b
    p, e = _two_prod(q, b)
    if not math.isnan(e):
        # q*b = p + e exactly; compare with a to decide rounding direction.
        if p == a and e == 0.0:
            return q
        exact_high = (p > a) or (p == a and e > 0.0)
        if (exact_high and b > 0) or ((not exact_high) and b < 0):
            return _down(q)
        return q
    return _down(q)


def _div_hi(a: float, b: float) -> float:
    q = a / b
    p, e = _two_prod(q, b)
    if not math.isnan(e):
        if p == a and e == 0.0:
            return q
        exact_low = (p < a) or (p == a and e < 0.0)
        if (exact_low and b > 0) or ((not exact_low) and b < 0):
            return _up(q)
        return q
    return _up(q)


def _libm_point(fn, x: float, slack: int = 4) -> tuple[float, float]:
    """Enclosure of fn(x) at a float point, assuming libm is <= slack/2 ulp off."""
    y = fn(x)
    lo, hi = y, y
    for _ in range(slack):
        lo = _down(lo)
        hi = _up(hi)
    return lo, hi


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] with outward-rounded arithmetic."""

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise IntervalError("NaN endpoint")
        if self.lo > self.hi:
            raise IntervalError(f"empty interval: lo={self.lo} > hi={self.hi}")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def point(x: float) -> "Interval":
        return Interval(float(x), float(x))

    @staticmethod
    def from_any(x) -> "Interval":
        if isinstance(x, Interval):
            return x
        return Interval.point(float(x))

    # -- basic queries -----------------------------------------------------

    @property
    def width(self) -> float:
        d = self.hi - self.lo
        return d if d == 0.0 else _up(d)

    @property
    def mid(self) -> float:
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = 0.5 * self.lo + 0.5 * self.hi
        return m

    @property
    def rad(self) -> float:
        m = self.mid
        return _up(max(m - self.lo, self.hi - m))

    @property
    def mag(self) -> float:
        """sup |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    @property
    def mig(self) -> float:
        """inf |x| over the interval."""
        if self.lo <= 0.0 <= self.hi:
            return 0.0
        return min(abs(self.lo), abs(self.hi))

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    def contains_interval(self, other: "Interval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def is_positive(self) -> bool:
        return self.lo > 0.0

    def is_negative(self) -> bool:
        return self.hi < 0.0

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other) -> "Interval":
        o = Interval.from_any(other)
        return Interval(_add_lo(self.lo, o.lo), _add_hi(self.hi, o.hi))

    __radd__ = __add__

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other) -> "Interval":
        o = Interval.from_any(other)
        return Interval(_add_lo(self.lo, -o.hi), _add_hi(self.hi, -o.lo))

    def __rsub__(self, other) -> "Interval":
        return Interval.from_any(other) - self

    def __mul__(self, other) -> "Interval":
        o = Interval.from_any(other)
        a, b, c, d = self.lo, self.hi, o.lo, o.hi
        # Thin-zero shortcut keeps 0 * anything exactly 0.
        if (a == 0.0 and b == 0.0) or (c == 0.0 and d == 0.0):
            return Interval(0.0, 0.0)
        cands = ((a, c), (a, d), (b, c), (b, d))
        lo = min(_mul_lo(x, y) for x, y in cands)
        hi = max(_mul_hi(x, y) for x, y in cands)
        return Interval(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Interval":
        o = Interval.from_any(other)
        if o.lo <= 0.0 <= o.hi:
            raise ZeroInDivisor(f"divisor {o} contains zero")
        a, b, c, d = self.lo, self.hi, o.lo, o.hi
        cands = ((a, c), (a, d), (b, c), (b, d))
        lo = min(_div_lo(x, y) for x, y in cands)
        hi = max(_div_hi(x, y) for x, y in cands)
        return Interval(lo, hi)

    def __rtruediv__(self, other) -> "Interval":
        return Interval.from_any(other) / self

    def __pow__(self, n: int) -> "Interval":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers")
        out = Interval(1.0, 1.0)
        base = self
        k = n
        while k:
            if k & 1:
                out = out * base
            base = base.sqr() if k > 1 else base
            k >>= 1
        # even powers are nonnegative even if the naive product is not sharp
        if n % 2 == 0 and out.lo < 0.0:
            out = Interval(0.0, out.hi)
        return out

    # -- elementary functions ------------------------------------------------

    def sqr(self) -> "Interval":
        a, b = self.lo, self.hi
        if a >= 0.0:
            return Interval(_mul_lo(a, a), _mul_hi(b, b))
        if b <= 0.0:
            return Interval(_mul_lo(b, b), _mul_hi(a, a))
        m = max(-a, b)
        return Interval(0.0, _mul_hi(m, m))

    def sqrt(self) -> "Interval":
        if self.hi < 0.0:
            raise DomainError(f"sqrt of negative interval {self}")
        lo_in = max(self.lo, 0.0)
        rlo = math.sqrt(lo_in)
        p, e = _two_prod(rlo, rlo)
        if not (p == lo_in and e == 0.0):
            if p > lo_in or (p == lo_in and e > 0.0):
                rlo = _down(rlo)
        rhi = math.sqrt(self.hi)
        p, e = _two_prod(rhi, rhi)
        if not (p == self.hi and e == 0.0):
            if p < self.hi or (p == self.hi and e < 0.0):
                rhi = _up(rhi)
        return Interval(max(rlo, 0.0), rhi)

    def __abs__(self) -> "Interval":
        if self.lo >= 0.0:
            return self
        if self.hi <= 0.0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def exp(self) -> "Interval":
        if self.lo == 0.0 and self.hi == 0.0:
            return Interval(1.0, 1.0)
        lo, _ = _libm_point(math.exp, self.lo)
        _, hi = _libm_point(math.exp, self.hi)
        return Interval(max(lo, 0.0), hi)

    def sin(self) -> "Interval":
        return _sin_interval(self)

    def cos(self) -> "Interval":
        return _sin_interval(self + PI_HALF)

    def tanh(self) -> "Interval":
        lo, _ = _libm_point(math.tanh, self.lo)
        _, hi = _libm_point(math.tanh, self.hi)
        return Interval(max(lo, -1.0), min(hi, 1.0))

    # -- lattice -------------------------------------------------------------

    def hull(self, other: "Interval") -> "Interval":
        o = Interval.from_any(other)
        return Interval(min(self.lo, o.lo), max(self.hi, o.hi))

    def intersect(self, other: "Interval") -> "Interval":
        o = Interval.from_any(other)
        lo = max(self.lo, o.lo)
        hi = min(self.hi, o.hi)
        if lo > hi:
            raise EmptyIntersection(f"{self} and {o} are disjoint")
        return Interval(lo, hi)

    # -- serialization ---------------------------------------------------------

    def to_decimal_strings(self, digits: int = 6) -> tuple[str, str]:
        """Decimal endpoints with outward decimal rounding."""
        from decimal import Decimal, ROUND_CEILING, ROUND_FLOOR

        if self.lo == 0.0 and self.hi == 0.0:
            return "0", "0"
        scale = max(self.mag, 1e-300)
        exp10 = int(math.floor(math.log10(scale))) - digits + 1
        q = Decimal(1).scaleb(exp10)
        lo = Decimal(self.lo).quantize(q, rounding=ROUND_FLOOR)
        hi = Decimal(self.hi).quantize(q, rounding=ROUND_CEILING)
        return format(lo, "f"), format(hi, "f")


def hull(x: Interval, y: Interval) -> Interval:
    return x.hull(y)


def intersect(x: Interval, y: Interval) -> Interval:
    return x.intersect(y)


# Thin two-float enclosures of pi and friends.  math.pi is the correctly
# rounded double, so bracketing by one ulp on each side is sufficient.
PI = Interval(_down(math.pi), _up(math.pi))
TWO_PI = PI * 2.0
PI_HALF = PI * 0.5


def _sin_interval(x: Interval) -> Interval:
    """Enclosure of sin over x, detecting interior extrema at pi/2 + k*pi.

    Wide arguments are reduced modulo 2*pi with an interval enclosure of
    2*pi; if the reduced width still reaches 2*pi the result is [-1, 1].
    """
    full = Interval(-1.0, 1.0)
    if x.width >= TWO_PI.lo:
        return full
    # shift by an integer multiple of 2*pi (interval-rigorous subtraction)
    k = math.floor(x.lo / (2.0 * math.pi))
    if k != 0:
        x = x - TWO_PI * float(k)
    if x.width >= TWO_PI.lo:
        return full
    lo_a, hi_a = _libm_point(math.sin, x.lo)
    lo_b, hi_b = _libm_point(math.sin, x.hi)
    if x.lo == 0.0:
        lo_a = hi_a = 0.0
    if x.hi == 0.0:
        lo_b = hi_b = 0.0
    lo = min(lo_a, lo_b)
    hi = max(hi_a, hi_b)
    # interior critical points: pi/2 + m*pi within [x.lo, x.hi]
    m_first = math.floor((x.lo / math.pi) - 0.5) - 1
    m_last = math.ceil((x.hi / math.pi) - 0.5) + 1
    for m in range(m_first, m_last + 1):
        crit = PI_HALF + PI * float(m)
        if crit.hi < x.lo or crit.lo > x.hi:
            continue
        if m % 2 == 0:
            hi = 1.0
        else:
            lo = -1.0
    lo = max(lo, -1.0)
    hi = min(hi, 1.0)
    return Interval(lo, hi)


def elem(x: Interval, fn: str) -> Interval:
    """Dispatch table for elementary enclosures: sqrt, sin, cos, exp, abs, sqr."""
    try:
        table = {
            "sqrt": Interval.sqrt,
            "sin": Interval.sin,
            "cos": Interval.cos,
            "exp": Interval.exp,
            "abs": Interval.__abs__,
            "sqr": Interval.sqr,
        }
        f = table[fn]
    except KeyError:
        raise ValueError(f"unknown elementary function {fn!r}") from None
    return f(x)


@dataclass(frozen=True)
class ComplexInterval:
    """Rectangular complex interval: re + i*im with Interval components."""

    re: Interval
    im: Interval

    @staticmethod
    def point(z: complex) -> "ComplexInterval":
        return ComplexInterval(Interval.point(z.real), Interval.point(z.imag))

    @staticmethod
    def from_any(z) -> "ComplexInterval":
        if isinstance(z, ComplexInterval):
            return z
        if isinstance(z, Interval):
            return ComplexInterval(z, Interval(0.0, 0.0))
        zc = complex(z)
        return ComplexInterval.point(zc)

    def __add__(self, other) -> "ComplexInterval":
        o = ComplexInterval.from_any(other)
        return ComplexInterval(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self) -> "ComplexInterval":
        return ComplexInterval(-self.re, -self.im)

    def __sub__(self, other) -> "ComplexInterval":
        o = ComplexInterval.from_any(other)
        return ComplexInterval(self.re - o.re, self.im - o.im)

    def __rsub__(self, other) -> "ComplexInterval":
        return ComplexInterval.from_any(other) - self

    def __mul__(self, other) -> "ComplexInterval":
        o = ComplexInterval.from_any(other)
        return ComplexInterval(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )

    __rmul__ = __mul__

    def conj(self) -> "ComplexInterval":
        return ComplexInterval(self.re, -self.im)

    @property
    def mag(self) -> float:
        """Upper bound on |z|."""
        m = (self.re.sqr() + self.im.sqr()).sqrt()
        return m.hi

    def abs_enclosure(self) -> Interval:
        return (self.re.sqr() + self.im.sqr()).sqrt()

    def contains(self, z: complex) -> bool:
        return self.re.contains(z.real) and self.im.contains(z.imag)

    def __repr__(self):
        return f"({self.re} + i*{self.im})"
