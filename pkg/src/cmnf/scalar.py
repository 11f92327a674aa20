"""Exact complex-rational coefficients.

Every series coefficient in this package is a Gaussian rational: a pair of
arbitrary-precision rationals (real and imaginary part).  All arithmetic is
exact; floating point only appears when a caller explicitly converts with
``complex()``.  gmpy2's mpq is used when available (it is much faster than
fractions.Fraction), with a stdlib fallback.
"""

from __future__ import annotations

from typing import Union

try:
    from gmpy2 import mpq as QQ
except ImportError:  # pragma: no cover
    from fractions import Fraction as QQ

_Q0 = QQ(0)
_Q1 = QQ(1)

RatLike = Union[int, str, "QQ"]


def rat(x: RatLike) -> "QQ":
    """Coerce an int, 'p/q' string or rational into the rational backend."""
    if isinstance(x, str):
        x = x.strip()
        if "/" in x:
            p, q = x.split("/")
            return QQ(int(p), int(q))
        return QQ(int(x))
    return QQ(x)


def rat_str(q) -> str:
    """Canonical 'p/q' encoding (always with an explicit denominator)."""
    f = QQ(q)
    return "%d/%d" % (f.numerator, f.denominator)


def rat_sqrt(q):
    """Exact square root of a nonnegative rational, or None if irrational."""
    f = QQ(q)
    if f < 0:
        return None
    num, den = int(f.numerator), int(f.denominator)
    rn = _isqrt(num)
    rd = _isqrt(den)
    if rn * rn != num or rd * rd != den:
        return None
    return QQ(rn, rd)


def _isqrt(k: int) -> int:
    import math

    return math.isqrt(k)


class Scalar:
    """An exact Gaussian rational re + im*i."""

    __slots__ = ("re", "im")

    def __init__(self, re: RatLike = 0, im: RatLike = 0):
        self.re = rat(re)
        self.im = rat(im)

    @staticmethod
    def _new(re, im) -> "Scalar":
        s = object.__new__(Scalar)
        s.re = re
        s.im = im
        return s

    @staticmethod
    def of(x) -> "Scalar":
        if isinstance(x, Scalar):
            return x
        if isinstance(x, complex):
            raise TypeError("floating complex is not exact; build Scalar from rationals")
        return Scalar(x)

    # -- ring operations ---------------------------------------------------

    def __add__(self, other):
        if type(other) is Scalar:
            return Scalar._new(self.re + other.re, self.im + other.im)
        o = Scalar.of(other)
        return Scalar._new(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) is Scalar:
            return Scalar._new(self.re - other.re, self.im - other.im)
        o = Scalar.of(other)
        return Scalar._new(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        o = Scalar.of(other)
        return Scalar._new(o.re - self.re, o.im - self.im)

    def __neg__(self):
        return Scalar._new(-self.re, -self.im)

    def __mul__(self, other):
        if type(other) is Scalar:
            a, b, c, d = self.re, self.im, other.re, other.im
            if b == 0:
                if d == 0:
                    return Scalar._new(a * c, _Q0)
                return Scalar._new(a * c, a * d)
            o = other
        else:
            o = Scalar.of(other)
        a, b, c, d = self.re, self.im, o.re, o.im
        return Scalar._new(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Scalar.of(other)
        n = o.re * o.re + o.im * o.im
        if n == 0:
            raise ZeroDivisionError("division by zero Scalar")
        a, b, c, d = self.re, self.im, o.re, o.im
        return Scalar._new((a * c + b * d) / n, (b * c - a * d) / n)

    def __rtruediv__(self, other):
        return Scalar.of(other) / self

    def __pow__(self, k: int):
        if k < 0:
            return Scalar._new(_Q1, _Q0) / self ** (-k)
        out = ONE
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # -- structure ---------------------------------------------------------

    def conjugate(self) -> "Scalar":
        return Scalar._new(self.re, -self.im)

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def is_real(self) -> bool:
        return self.im == 0

    def __bool__(self):
        return not self.is_zero()

    def __eq__(self, other):
        if isinstance(other, (int, str)) or type(other).__name__ in ("mpq", "Fraction"):
            other = Scalar(other)
        if not isinstance(other, Scalar):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        if self.im == 0:
            return "Scalar(%r)" % str(self.re)
        return "Scalar(%r, %r)" % (str(self.re), str(self.im))

    # -- encoding ----------------------------------------------------------

    def to_pair(self) -> list:
        return [rat_str(self.re), rat_str(self.im)]

    @staticmethod
    def from_pair(pair) -> "Scalar":
        return Scalar(rat(pair[0]), rat(pair[1]))


ZERO = Scalar(0)
ONE = Scalar(1)
I = Scalar(0, 1)
HALF = Scalar(QQ(1, 2))


def srat(p: int, q: int = 1) -> Scalar:
    """Shorthand for the real Scalar p/q."""
    return Scalar(QQ(p, q))
