from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kst import grid as G
from kst.separators import (
    PLFunction,
    SeparatorError,
    SeparatorSpec,
    build_inner_map,
    build_separator,
    check_inner_map,
    constant,
    identity,
    min_resolution,
    modulus_delta,
    separator_threshold,
)


@pytest.mark.parametrize("delta, N0", [(5, 1), (0.5, 10), (Fraction(3, 100), 167), (Fraction(1, 3), 15)])
def test_min_resolution(delta, N0):
    assert min_resolution(delta) == N0


def test_min_resolution_rejects_nonpositive():
    with pytest.raises(SeparatorError):
        min_resolution(0)


def test_modulus_delta():
    assert modulus_delta(constant(0.5), 0.1) == 1.0
    d = modulus_delta(identity, 0.1)
    assert 0 < d <= 0.1
    d2 = modulus_delta(lambda x: x * x, 0.1)
    assert 0 < d2 <= 0.05


@given(st.floats(0.5, 20), st.floats(0.01, 0.4))
@settings(max_examples=30, deadline=None)
def test_modulus_is_a_modulus(slope, half_eps):
    psi = lambda x: np.sin(slope * np.asarray(x))
    d = modulus_delta(psi, half_eps)
    xs = np.linspace(0, 1 - d, 2000)
    assert np.max(np.abs(psi(xs + d) - psi(xs))) < half_eps * (1 + 1e-9) or d == 1.0


def test_pl_function_exact_and_float():
    f = PLFunction(((0, 0), (Fraction(1, 2), 1), (1, Fraction(1, 3))))
    assert f.exact(Fraction(1, 4)) == Fraction(1, 2)
    assert f.exact(Fraction(3, 4)) == Fraction(2, 3)
    assert f(0.75) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        PLFunction(((0, 0), (0, 1)))


def test_constant_half_plateaus():
    phi, plats = build_separator(SeparatorSpec(constant(0.5), 1, 10, 0.2))
    vals = list(plats.values())
    assert len(set(vals)) == len(vals) == len(G.index_set(1, 10))
    assert all(Fraction(2, 5) < v < Fraction(3, 5) for v in vals)


def test_forbidden_values_avoided():
    _, first = build_separator(SeparatorSpec(constant(0.5), 1, 10, 0.2))
    _, second = build_separator(SeparatorSpec(constant(0.5), 2, 10, 0.2, frozenset(first.values())))
    assert not set(first.values()) & set(second.values())


def test_resolution_enforced():
    n0 = separator_threshold(identity, 0.25)
    with pytest.raises(SeparatorError):
        build_inner_map(identity, n0)
    build_inner_map(identity, n0 + 1)


def test_coarse_grid_cannot_track_identity():
    # a plateau on an interval of length 0.4 sits at least 0.2 from the identity somewhere
    phi = build_inner_map(identity, 10, 0.1, enforce_resolution=False)
    xs = np.linspace(0, 1, 10_001)
    assert max(np.max(np.abs(phi.component(k)(xs) - xs)) for k in G.FAMILIES) >= 0.2 - 1e-12


def test_drift_detected():
    far = {Fraction(m, 40 * 1009) for m in range(-2000, 2001)}
    with pytest.raises(SeparatorError):
        build_separator(SeparatorSpec(constant(0.5), 1, 10, Fraction(1, 100), frozenset(Fraction(1, 2) + f for f in far)),
                        enforce_resolution=False)


@pytest.mark.parametrize(
    "psi, N, eps",
    [(constant(0.5), 10, 0.3), (constant(0.5), 100, 0.1), (identity, 30, 0.3)],
)
def test_inner_map_invariants(psi, N, eps):
    phi = build_inner_map(psi, N, eps, enforce_resolution=False)
    assert check_inner_map(phi) == []
    assert sum(len(G.index_set(k, N)) for k in G.FAMILIES) == len(phi.plateaus)
    xs = np.linspace(0, 1, 10_001)
    for k in G.FAMILIES:
        assert np.max(np.abs(phi.component(k)(xs) - psi(xs))) < eps


@given(st.integers(5, 60))
@settings(max_examples=15, deadline=None)
def test_plateaus_constant_on_intervals(N):
    phi = build_inner_map(identity, N, 1, enforce_resolution=False)
    for (j, k), v in phi.plateaus.items():
        a, b = G.interval(j, k, N).clipped()
        comp = phi.component(k)
        assert comp.exact(a) == comp.exact(b) == comp.exact((a + b) / 2) == v
        assert isinstance(v, Fraction) and 0 <= v <= 1
    vals = list(phi.plateaus.values())
    assert len(set(vals)) == len(vals)


def test_forbidden_seed_respected_by_inner_map():
    seed = {Fraction(1, 2), Fraction(2, 5)}
    phi = build_inner_map(constant(0.5), 20, 0.3, enforce_resolution=False, forbidden=seed)
    assert not seed & set(phi.plateaus.values())


def test_check_inner_map_flags_duplicate():
    phi = build_inner_map(identity, 30, 0.3, enforce_resolution=False)
    table = dict(phi.plateaus)
    table[(0, 2)] = table[(0, 1)]
    bad = phi.with_plateaus(table)
    assert any("distinct" in p for p in check_inner_map(bad))
