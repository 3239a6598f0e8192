"""Exact arithmetic over Q and Q(sqrt 2).

Rationals are :class:`fractions.Fraction`; :class:`QuadExt` holds ``a + b*sqrt(2)``
with rational ``a``, ``b``.  Because sqrt(2) is irrational the pair ``(a, b)`` is a
unique representation, so equality and hashing are component-wise and ordering
is decided exactly by :func:`quadext_sign`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import total_ordering
from typing import Union

Rational = Fraction
Number = Union[int, Fraction]


def to_rational(value: Number | str) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"cannot convert {type(value).__name__} to an exact rational")


def format_rational(q: Fraction) -> str:
    """Canonical ``"p/q"`` text; the denominator is always written."""
    return f"{q.numerator}/{q.denominator}"


def parse_rational(text: str) -> Fraction:
    text = text.strip()
    if not text:
        raise ValueError("empty rational literal")
    num, sep, den = text.partition("/")
    try:
        p = int(num)
        q = int(den) if sep else 1
    except ValueError:
        raise ValueError(f"malformed rational literal {text!r}") from None
    if q == 0:
        raise ValueError(f"zero denominator in {text!r}")
    return Fraction(p, q)


def _sgn(q: Fraction) -> int:
    return (q > 0) - (q < 0)


@total_ordering
@dataclass(frozen=True)
class QuadExt:
    """The real number ``a + b*sqrt(2)`` with exact rational coordinates."""

    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", to_rational(self.a))
        object.__setattr__(self, "b", to_rational(self.b))

    @classmethod
    def of(cls, value: QuadExt | Number) -> QuadExt:
        if isinstance(value, QuadExt):
            return value
        return cls(to_rational(value), Fraction(0))

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def __add__(self, other: QuadExt | Number) -> QuadExt:
        if not isinstance(other, (QuadExt, int, Fraction)):
            return NotImplemented
        o = QuadExt.of(other)
        return QuadExt(self.a + o.a, self.b + o.b)

    __radd__ = __add__

    def __neg__(self) -> QuadExt:
        return QuadExt(-self.a, -self.b)

    def __sub__(self, other: QuadExt | Number) -> QuadExt:
        if not isinstance(other, (QuadExt, int, Fraction)):
            return NotImplemented
        return self + (-QuadExt.of(other))

    def __rsub__(self, other: Number) -> QuadExt:
        return QuadExt.of(other) - self

    def __mul__(self, other: QuadExt | Number) -> QuadExt:
        if not isinstance(other, (QuadExt, int, Fraction)):
            return NotImplemented
        o = QuadExt.of(other)
        return QuadExt(self.a * o.a + 2 * self.b * o.b, self.a * o.b + self.b * o.a)

    __rmul__ = __mul__

    def conjugate(self) -> QuadExt:
        return QuadExt(self.a, -self.b)

    def norm(self) -> Fraction:
        """Field norm ``a^2 - 2 b^2``; zero only for the zero element."""
        return self.a * self.a - 2 * self.b * self.b

    def __truediv__(self, other: QuadExt | Number) -> QuadExt:
        if not isinstance(other, (QuadExt, int, Fraction)):
            return NotImplemented
        o = QuadExt.of(other)
        n = o.norm()
        if n == 0:
            raise ZeroDivisionError("division by zero in Q(sqrt 2)")
        num = self * o.conjugate()
        return QuadExt(num.a / n, num.b / n)

    def __rtruediv__(self, other: Number) -> QuadExt:
        return QuadExt.of(other) / self

    def __lt__(self, other: QuadExt | Number) -> bool:
        if not isinstance(other, (QuadExt, int, Fraction)):
            return NotImplemented
        return quadext_sign(self - QuadExt.of(other)) < 0

    def __float__(self) -> float:
        return quadext_to_float(self)

    def __str__(self) -> str:
        return f"{self.a} + {self.b}*sqrt2"

    def to_json(self) -> dict[str, str]:
        return {"a": format_rational(self.a), "b": format_rational(self.b)}

    @classmethod
    def from_json(cls, doc: dict) -> QuadExt:
        if not isinstance(doc, dict) or set(doc) != {"a", "b"}:
            raise ValueError(f"malformed QuadExt document: {doc!r}")
        return cls(parse_rational(doc["a"]), parse_rational(doc["b"]))


SQRT2 = QuadExt(0, 1)


def quadext_sign(v: QuadExt) -> int:
    """Exact sign of ``a + b*sqrt(2)``."""
    sa, sb = _sgn(v.a), _sgn(v.b)
    if sa == sb or sb == 0:
        return sa
    if sa == 0:
        return sb
    # opposite signs: the larger of a^2 and 2 b^2 wins
    d = v.a * v.a - 2 * v.b * v.b
    return sa if d > 0 else sb


def quadext_cmp(u: QuadExt, v: QuadExt) -> int:
    return quadext_sign(u - v)


def quadext_to_float(v: QuadExt) -> float:
    """Float of ``a + b*sqrt(2)``, within 4 ulp of the real value.

    Terms of equal sign are summed in floating point (no cancellation); opposite
    signs fall back to a high-precision decimal evaluation.
    """
    if v.b == 0:
        return float(v.a)
    fb = float(v.b) * math.sqrt(2)
    if _sgn(v.a) * _sgn(v.b) >= 0:
        s = float(v.a) + fb
        if math.isinf(s):
            raise OverflowError("QuadExt magnitude exceeds the float range")
        return s
    return _decimal_float(v)


def _decimal_float(v: QuadExt) -> float:
    digits = 40 + max(
        len(str(abs(v.a.numerator))),
        len(str(v.a.denominator)),
        len(str(abs(v.b.numerator))),
        len(str(v.b.denominator)),
    )
    with localcontext() as ctx:
        ctx.prec = 2 * digits
        a = Decimal(v.a.numerator) / Decimal(v.a.denominator)
        b = Decimal(v.b.numerator) / Decimal(v.b.denominator)
        value = a + b * Decimal(2).sqrt()
    result = float(value)
    if math.isinf(result):
        raise OverflowError("QuadExt magnitude exceeds the float range")
    return result
