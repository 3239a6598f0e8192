"""Piecewise-linear maps that rationally separate the interval families.

A separator for family ``k`` is constant on every ``I_{j,k}(N)`` with pairwise
distinct rational plateau values and linear across the gaps.  Five of them,
built in order with the earlier plateaus forbidden to the later ones, form an
:class:`InnerMap` whose plateau values are distinct across all ``(j, k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .exact import QuadExt, quadext_to_float
from .grid import FAMILIES, index_set, interval

Value = Union[Fraction, QuadExt]
Psi = Callable[[np.ndarray], np.ndarray]

# Collision offsets are multiples of 1/(4N * COLLISION_PRIME).
COLLISION_PRIME = 1009
DEFAULT_EPSILON = Fraction(1, 4)
DEFAULT_PROBES = 2048


class SeparatorError(ValueError):
    pass


def sample(fn: Callable, xs: np.ndarray) -> np.ndarray:
    """Evaluate a scalar or vectorised callable on an array of points."""
    xs = np.asarray(xs, dtype=float)
    try:
        out = np.asarray(fn(xs), dtype=float)
    except (TypeError, ValueError):
        out = None
    if out is None or out.shape != xs.shape:
        out = np.vectorize(lambda t: float(fn(float(t))), otypes=[float])(xs)
    return out


def identity(x):
    return x


def constant(v: float) -> Psi:
    def psi(x):
        return np.full(np.shape(x), float(v)) if np.ndim(x) else float(v)

    psi.__name__ = f"const_{v}"
    return psi


@dataclass(frozen=True)
class PLFunction:
    """Continuous piecewise-linear function given by ascending breakpoints."""

    breakpoints: tuple[tuple[Fraction, Value], ...]

    def __post_init__(self) -> None:
        bp = tuple((Fraction(p), v if isinstance(v, QuadExt) else Fraction(v)) for p, v in self.breakpoints)
        if not bp:
            raise ValueError("a PL function needs at least one breakpoint")
        if any(b[0] <= a[0] for a, b in zip(bp, bp[1:])):
            raise ValueError("breakpoint positions must be strictly ascending")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "_xs", np.array([float(p) for p, _ in bp]))
        object.__setattr__(self, "_ys", np.array([_to_float(v) for _, v in bp]))

    @property
    def domain(self) -> tuple[Fraction, Fraction]:
        return self.breakpoints[0][0], self.breakpoints[-1][0]

    def exact(self, x: Fraction | int) -> Value:
        """Exact value at a rational point (linear interpolation in Q or Q(sqrt 2))."""
        x = Fraction(x)
        lo, hi = self.domain
        if not lo <= x <= hi:
            raise ValueError(f"{x} outside the domain [{lo}, {hi}]")
        bp = self.breakpoints
        for (x0, y0), (x1, y1) in zip(bp, bp[1:]):
            if x0 <= x <= x1:
                if x == x0:
                    return y0
                if x == x1:
                    return y1
                t = (x - x0) / (x1 - x0)
                return y0 + (y1 - y0) * t
        return bp[0][1]

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self._xs, self._ys)

    def values(self) -> list[Value]:
        return [v for _, v in self.breakpoints]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self._ys)))


def _to_float(v: Value) -> float:
    return quadext_to_float(v) if isinstance(v, QuadExt) else float(v)


def separator_from_plateaus(k: int, N: int, plateaus: Mapping[int, Value]) -> PLFunction:
    """The PL function constant on each clipped ``I_{j,k}(N)`` and linear on gaps."""
    bps: list[tuple[Fraction, Value]] = []
    for j in index_set(k, N):
        a, b = interval(j, k, N).clipped()
        v = plateaus[j]
        bps.append((a, v))
        if b != a:
            bps.append((b, v))
    return PLFunction(tuple(bps))


@dataclass(frozen=True)
class SeparatorSpec:
    psi: Psi
    k: int
    N: int
    epsilon: Fraction | float = DEFAULT_EPSILON
    forbidden: frozenset = frozenset()

    def __post_init__(self) -> None:
        if self.k not in FAMILIES:
            raise SeparatorError(f"family index must be in 1..5, got {self.k}")
        if self.N < 1:
            raise SeparatorError("N must be positive")
        if not self.epsilon > 0:
            raise SeparatorError("epsilon must be positive")
        object.__setattr__(self, "forbidden", frozenset(Fraction(g) for g in self.forbidden))


@dataclass(frozen=True)
class InnerMap:
    """Five PL components ``phi_1..phi_5`` plus the plateau table ``(j, k) -> value``.

    ``N`` is None for hand-built maps that are not tied to an interval grid.
    """

    components: tuple[PLFunction, ...]
    plateaus: Mapping[tuple[int, int], Value] = field(default_factory=dict)
    N: int | None = None

    def __post_init__(self) -> None:
        if len(self.components) != 5:
            raise ValueError("an inner map has exactly five components")

    def component(self, k: int) -> PLFunction:
        return self.components[k - 1]

    def family_plateaus(self, k: int) -> dict[int, Value]:
        return {j: v for (j, kk), v in self.plateaus.items() if kk == k}

    def sup_norm(self) -> float:
        return max(c.sup_norm() for c in self.components)

    def with_plateaus(self, plateaus: Mapping[tuple[int, int], Value]) -> InnerMap:
        if self.N is None:
            raise ValueError("hand-built maps carry no plateau structure")
        comps = tuple(
            separator_from_plateaus(k, self.N, {j: plateaus[(j, k)] for j in index_set(k, self.N)})
            for k in FAMILIES
        )
        return InnerMap(comps, dict(plateaus), self.N)


def min_resolution(delta) -> int:
    """``ceil(5 / delta)``, computed exactly on the given value."""
    d = Fraction(delta)
    if d <= 0:
        raise SeparatorError("delta must be positive")
    return math.ceil(Fraction(5) / d)


def _window_oscillation(values: np.ndarray, width: int) -> float:
    size = width + 1
    return float(np.max(maximum_filter1d(values, size, mode="nearest") - minimum_filter1d(values, size, mode="nearest")))


def modulus_delta(psi: Callable, half_epsilon: float, probe_grid: int = DEFAULT_PROBES) -> float:
    """Sampled modulus of continuity: a gap below which ``psi`` moves less than ``half_epsilon``.

    Returns 1.0 when the total oscillation on [0, 1] is already small enough.
    Otherwise the widest probe window with oscillation below ``half_epsilon`` is
    found by bisection and halved as a hedge against sampling.
    """
    if probe_grid < 2:
        raise SeparatorError("probe grid needs at least 2 cells")
    if not half_epsilon > 0:
        raise SeparatorError("half_epsilon must be positive")
    vals = sample(psi, np.linspace(0.0, 1.0, probe_grid + 1))
    if float(np.ptp(vals)) < half_epsilon:
        return 1.0
    if _window_oscillation(vals, 1) >= half_epsilon:
        raise SeparatorError("psi oscillates too fast for the probe grid; refine it")
    lo, hi = 1, probe_grid  # osc(lo) < half_epsilon <= osc(hi)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _window_oscillation(vals, mid) < half_epsilon:
            lo = mid
        else:
            hi = mid
    return lo / probe_grid / 2


def separator_threshold(psi: Callable, epsilon, probe_grid: int = DEFAULT_PROBES) -> int:
    """``N0(psi) = ceil(5 / delta)`` for the modulus at ``epsilon / 2``."""
    return min_resolution(modulus_delta(psi, float(epsilon) / 2, probe_grid))


def _candidates(center: Fraction, step: Fraction):
    yield center
    m = 1
    while True:
        yield center + m * step
        yield center - m * step
        m += 1


def _reflect(v: Fraction) -> Fraction:
    if v < 0:
        return -v
    if v > 1:
        return 2 - v
    return v


def build_separator(
    spec: SeparatorSpec,
    *,
    enforce_resolution: bool = True,
    delta: float | None = None,
) -> tuple[PLFunction, dict[int, Fraction]]:
    """Separator for family ``spec.k``; returns the PL function and its plateaus.

    Plateau ``j`` starts from ``psi(l0_j)`` rounded to denominator ``4N`` and is
    nudged by multiples of ``1/(4N * 1009)`` until it is new, outside the
    forbidden set and inside [0, 1].  With ``enforce_resolution`` the call
    refuses ``N <= ceil(5/delta)``, the range where closeness is not guaranteed.
    """
    k, N, eps = spec.k, spec.N, Fraction(spec.epsilon)
    if enforce_resolution:
        n0 = min_resolution(delta) if delta is not None else separator_threshold(spec.psi, eps)
        if N <= n0:
            raise SeparatorError(f"N={N} too small: need N > {n0} for epsilon={float(eps)}")
    js = index_set(k, N)
    lefts = [interval(j, k, N).left_clamped for j in js]
    targets = sample(spec.psi, np.array([float(l) for l in lefts]))
    denom = 4 * N
    step = Fraction(1, denom * COLLISION_PRIME)
    used: set[Fraction] = set()
    plateaus: dict[int, Fraction] = {}
    for j, target in zip(js, targets):
        if not math.isfinite(target):
            raise SeparatorError(f"psi is not finite at l0_{j},{k}")
        target_q = Fraction(float(target))
        center = min(max(Fraction(int(round(float(target) * denom)), denom), Fraction(0)), Fraction(1))
        for cand in _candidates(center, step):
            v = _reflect(cand)
            if v not in used and v not in spec.forbidden:
                break
        if not abs(v - target_q) < eps / 2:
            raise SeparatorError(
                f"plateau for (j={j}, k={k}) drifted {float(abs(v - target_q)):.3g} from psi; "
                "epsilon is too small for this resolution"
            )
        used.add(v)
        plateaus[j] = v
    return separator_from_plateaus(k, N, plateaus), plateaus


def build_inner_map(
    psi: Callable | Sequence[Callable],
    N: int,
    epsilon=DEFAULT_EPSILON,
    *,
    enforce_resolution: bool = True,
    forbidden: Iterable[Fraction] = (),
) -> InnerMap:
    """Build ``phi_1..phi_5`` in order, forbidding every earlier plateau value."""
    psis = list(psi) if isinstance(psi, (list, tuple)) else [psi] * 5
    if len(psis) != 5:
        raise SeparatorError("need one reference function per family")
    G = set(Fraction(g) for g in forbidden)
    comps = []
    table: dict[tuple[int, int], Fraction] = {}
    for k, psi_k in zip(FAMILIES, psis):
        spec = SeparatorSpec(psi_k, k, N, epsilon, frozenset(G))
        comp, plats = build_separator(spec, enforce_resolution=enforce_resolution)
        comps.append(comp)
        for j, v in plats.items():
            table[(j, k)] = v
        G.update(plats.values())
    return InnerMap(tuple(comps), table, N)


def inner_map_threshold(psi: Callable | Sequence[Callable], epsilon=DEFAULT_EPSILON) -> int:
    psis = list(psi) if isinstance(psi, (list, tuple)) else [psi] * 5
    return max(separator_threshold(p, epsilon) for p in psis)


def check_inner_map(phi: InnerMap) -> list[str]:
    """Invariant violations of a grid-based inner map (empty list when valid)."""
    problems = []
    if phi.N is None:
        return ["inner map has no grid resolution"]
    N = phi.N
    values = list(phi.plateaus.values())
    if len(set(values)) != len(values):
        problems.append("plateau values are not pairwise distinct")
    for (j, k), v in phi.plateaus.items():
        if not isinstance(v, Fraction):
            problems.append(f"plateau ({j},{k}) is not rational")
            continue
        if not 0 <= v <= 1:
            problems.append(f"plateau ({j},{k}) = {v} outside [0, 1]")
        a, b = interval(j, k, N).clipped()
        comp = phi.component(k)
        for x in (a, (a + b) / 2, b):
            if comp.exact(x) != v:
                problems.append(f"phi_{k} is not constant {v} on I_({j},{k})")
                break
    for k in FAMILIES:
        comp = phi.component(k)
        if comp.domain != (0, 1):
            problems.append(f"phi_{k} is not defined on [0, 1]")
        for v in comp.values():
            if not 0 <= v <= 1:
                problems.append(f"phi_{k} leaves [0, 1]")
                break
        if set(index_set(k, N)) != {j for (j, kk) in phi.plateaus if kk == k}:
            problems.append(f"plateau table incomplete for family {k}")
    return problems
