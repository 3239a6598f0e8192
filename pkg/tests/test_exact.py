import math
from fractions import Fraction
from math import gcd

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kst.exact import (
    SQRT2,
    QuadExt,
    format_rational,
    parse_rational,
    quadext_cmp,
    quadext_sign,
    quadext_to_float,
)

mpmath.mp.dps = 50

rationals = st.fractions(min_value=-10**6, max_value=10**6, max_denominator=10**6)
quads = st.builds(QuadExt, rationals, rationals)


def decimal_value(v: QuadExt):
    return mpmath.mpf(v.a.numerator) / v.a.denominator + mpmath.mpf(v.b.numerator) / v.b.denominator * mpmath.sqrt(2)


@pytest.mark.parametrize(
    "a, b, expected",
    [(0, 0, 0), (3, -2, 1), (-2, 2, 1), (1, -1, -1), (-3, 2, -1), (0, -5, -1), (7, 0, 1)],
)
def test_sign_examples(a, b, expected):
    v = QuadExt(a, b)
    assert quadext_sign(v) == expected
    if expected:
        assert mpmath.sign(decimal_value(v)) == expected


def test_cmp_examples():
    assert quadext_cmp(QuadExt(1, 1), QuadExt(2, 0)) == 1
    u = QuadExt(Fraction(3, 7), Fraction(-5, 11))
    assert quadext_cmp(u, u) == 0
    assert quadext_cmp(QuadExt(0, 1), QuadExt(Fraction(3, 2), 0)) == -1


def test_to_float_examples():
    assert quadext_to_float(QuadExt(0, 0)) == 0.0
    assert quadext_to_float(QuadExt(1, 1)) == pytest.approx(2.414213562373095, abs=1e-15)
    assert quadext_to_float(QuadExt(2, 0)) == 2.0


def test_to_float_survives_cancellation():
    # 99/70 is a convergent of sqrt 2: the difference is about -7.2e-5
    v = QuadExt(Fraction(99, 70), -1)
    exact = decimal_value(v)
    assert quadext_to_float(v) == pytest.approx(float(exact), rel=1e-15)


def test_to_float_overflow():
    with pytest.raises(OverflowError):
        quadext_to_float(QuadExt(10**400, 10**400))


@settings(max_examples=300)
@given(quads)
def test_to_float_within_4_ulp(v):
    exact = decimal_value(v)
    got = quadext_to_float(v)
    assert abs(mpmath.mpf(got) - exact) <= 4 * math.ulp(float(exact))


@given(st.integers(-10**12, 10**12), st.integers(1, 10**12))
def test_canonical_form(p, q):
    r = Fraction(p, q)
    assert r.denominator > 0
    assert gcd(abs(r.numerator), r.denominator) == 1
    # cross-multiplication oracle
    assert r.numerator * q == p * r.denominator


@given(rationals)
def test_rational_text_round_trip(r):
    text = format_rational(r)
    assert "/" in text
    assert parse_rational(text) == r


@pytest.mark.parametrize("bad", ["", "1/0", "a/b", "1/2/3"])
def test_parse_rational_rejects(bad):
    with pytest.raises(ValueError):
        parse_rational(bad)


@settings(max_examples=500)
@given(quads, quads)
def test_order_matches_decimal(u, v):
    gap = decimal_value(u) - decimal_value(v)
    c = quadext_cmp(u, v)
    if abs(gap) > mpmath.mpf(10) ** -40:
        assert c == (1 if gap > 0 else -1)
    assert (c == 0) == (u.a == v.a and u.b == v.b)


@given(quads, quads, quads)
def test_field_laws(u, v, w):
    assert (u + v) + w == u + (v + w)
    assert u * (v + w) == u * v + u * w
    assert u - u == QuadExt(0, 0)
    if u != QuadExt(0, 0):
        assert (v / u) * u == v


def test_sqrt2_squared_is_two():
    assert SQRT2 * SQRT2 == QuadExt(2, 0)


def test_json_format():
    v = QuadExt(Fraction(-3, 4), 2)
    assert v.to_json() == {"a": "-3/4", "b": "2/1"}
    assert QuadExt.from_json(v.to_json()) == v
    with pytest.raises(ValueError):
        QuadExt.from_json({"a": "1/2"})


def test_total_ordering_sorts_like_floats():
    vals = [QuadExt(1, 1), QuadExt(2, 0), QuadExt(0, 1), QuadExt(Fraction(3, 2), 0), QuadExt(-1, 1)]
    assert sorted(vals) == sorted(vals, key=quadext_to_float)
