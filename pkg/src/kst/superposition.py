"""The superposition operator ``S_phi h`` and the one-pass outer-function construction.

``S_phi h(x, y) = sum_k h(phi_k(x) + sqrt2 * phi_k(y))``.  On each grid square
``I_{i,k} x I_{j,k}`` the combined inner function takes the constant value
``phi_k(I_i) + sqrt2 * phi_k(I_j)``, an element of Q(sqrt 2); distinct rational
plateaus make these values pairwise distinct, so ``h`` can be prescribed freely
on them.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .exact import SQRT2, QuadExt, quadext_cmp, quadext_to_float
from .grid import FAMILIES, index_set, interval
from .separators import InnerMap

ROOT2 = math.sqrt(2.0)
PASS_RATIO = 6 / 7
DEFAULT_GRID = 512


class InjectivityError(RuntimeError):
    """Two grid squares share a plateau image; the separators are broken."""


class KnotOrderError(RuntimeError):
    pass


class StabilityError(ValueError):
    pass


def scan_threads() -> int:
    try:
        return max(1, int(os.environ.get("KST_THREADS", "1")))
    except ValueError:
        return 1


def _check_domain(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if (x.size and (np.min(x) < 0 or np.max(x) > 1)) or (y.size and (np.min(y) < 0 or np.max(y) > 1)):
        raise ValueError("superposition is defined on [0, 1]^2 only")
    return x, y


@dataclass(frozen=True)
class TargetFunction:
    evaluator: Callable
    name: str = "f"
    lipschitz: float | None = None

    def __call__(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        out = np.asarray(self.evaluator(x, y), dtype=float)
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out


@dataclass(frozen=True)
class SupNormEstimate:
    value: float
    grid: int
    certified_bound: float | None = None

    def __post_init__(self) -> None:
        if self.value < 0:
            raise ValueError("a norm estimate is non-negative")
        if self.certified_bound is not None and self.certified_bound < self.value:
            raise ValueError("certified bound below the sampled value")

    def __float__(self) -> float:
        return self.value


def unit_grid(grid: int) -> np.ndarray:
    if grid < 2:
        raise ValueError("grid needs at least 2 points per axis")
    return np.linspace(0.0, 1.0, grid)


def grid_max_abs(fn: Callable[[np.ndarray, np.ndarray], np.ndarray], grid: int, rows_per_chunk: int = 64) -> float:
    """``max |fn|`` over the ``grid x grid`` tensor grid, scanned in row chunks.

    Chunks may run on ``KST_THREADS`` workers; max-reduction makes the result
    independent of the partition.
    """
    g = unit_grid(grid)
    chunks = [g[i : i + rows_per_chunk] for i in range(0, grid, rows_per_chunk)]

    def work(xs):
        X, Y = np.meshgrid(xs, g, indexing="ij")
        return float(np.max(np.abs(fn(X, Y))))

    threads = scan_threads()
    if threads == 1:
        return max(map(work, chunks))
    with ThreadPoolExecutor(threads) as ex:
        return max(ex.map(work, chunks))


def sup_norm(f: Callable, grid: int = DEFAULT_GRID, lipschitz: float | None = None, extra_axis: Sequence[float] = ()) -> SupNormEstimate:
    """Grid estimate of ``sup |f|`` on the unit square.

    ``extra_axis`` adds coordinates to the tensor grid (used to include the
    square corners at which an outer function samples ``f``).  With a Lipschitz
    constant the estimate is certified: every point is within half a cell
    diagonal of a grid node.
    """
    value = grid_max_abs(f, grid)
    if len(extra_axis):
        ax = np.unique(np.concatenate([unit_grid(grid), np.asarray(extra_axis, dtype=float)]))
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        value = max(value, float(np.max(np.abs(f(X, Y)))))
    cert = None
    if lipschitz is not None:
        cert = value + lipschitz * math.sqrt(2) / (2 * (grid - 1))
    return SupNormEstimate(value, grid, cert)


@dataclass(frozen=True)
class OuterFunction:
    """Piecewise-linear ``h`` with knots at exact Q(sqrt 2) positions.

    Linear between knots, constant beyond the extreme knots.  An empty knot
    list is the zero function.
    """

    knots: tuple[tuple[QuadExt, float], ...]

    def __post_init__(self) -> None:
        pos = np.array([quadext_to_float(p) for p, _ in self.knots], dtype=float)
        val = np.array([v for _, v in self.knots], dtype=float)
        if pos.size > 1 and not np.all(np.diff(pos) > 0):
            raise KnotOrderError("knot positions must be strictly ascending (also as floats)")
        object.__setattr__(self, "_pos", pos)
        object.__setattr__(self, "_val", val)

    @classmethod
    def from_knots(cls, knots: Sequence[tuple[QuadExt, float]]) -> OuterFunction:
        return cls(tuple(sort_knots(knots)))

    @property
    def positions(self) -> np.ndarray:
        return self._pos

    @property
    def values(self) -> np.ndarray:
        return self._val

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self._pos.size == 0:
            return np.zeros_like(t)
        return np.interp(t, self._pos, self._val)

    def norm(self) -> float:
        return float(np.max(np.abs(self._val))) if self._val.size else 0.0

    def lipschitz(self) -> float:
        if self._pos.size < 2:
            return 0.0
        return float(np.max(np.abs(np.diff(self._val)) / np.diff(self._pos)))

    def __len__(self) -> int:
        return len(self.knots)


ZERO_OUTER = OuterFunction(())


def sort_knots(knots: Sequence[tuple[QuadExt, float]]) -> list[tuple[QuadExt, float]]:
    """Sort knots by exact position.

    A float sort does the bulk of the work; every adjacent pair is then
    confirmed with exact comparison and repaired locally if floats disagree.
    Equal exact positions are rejected.
    """
    fl = np.array([quadext_to_float(p) for p, _ in knots], dtype=float)
    order = list(np.argsort(fl, kind="stable"))
    out = [knots[i] for i in order]
    i = 0
    while i < len(out) - 1:
        c = quadext_cmp(out[i][0], out[i + 1][0])
        if c == 0:
            raise InjectivityError(f"duplicate knot position {out[i][0]}")
        if c > 0:
            out[i], out[i + 1] = out[i + 1], out[i]
            i = max(i - 1, 0)
            continue
        i += 1
    return out


def inner_combined(phi: InnerMap, k: int, x, y) -> np.ndarray:
    x, y = _check_domain(x, y)
    comp = phi.component(k)
    return comp(x) + ROOT2 * comp(y)


def superpose_eval(phi: InnerMap, h: OuterFunction, x, y) -> np.ndarray:
    x, y = _check_domain(x, y)
    total = np.zeros(np.broadcast(x, y).shape)
    for k in FAMILIES:
        comp = phi.component(k)
        total += h(comp(x) + ROOT2 * comp(y))
    return total


def plateau_images(phi: InnerMap) -> dict[tuple[int, int, int], QuadExt]:
    """Exact value of the combined inner function on every grid square ``(i, j, k)``."""
    if phi.N is None:
        raise ValueError("plateau images need a grid-based inner map")
    table: dict[tuple[int, int, int], QuadExt] = {}
    seen: dict[QuadExt, tuple[int, int, int]] = {}
    for k in FAMILIES:
        plats = phi.family_plateaus(k)
        js = index_set(k, phi.N)
        for i in js:
            for j in js:
                v = QuadExt.of(plats[i]) + SQRT2 * QuadExt.of(plats[j])
                if v in seen:
                    raise InjectivityError(f"squares {seen[v]} and {(i, j, k)} share the image {v}")
                seen[v] = (i, j, k)
                table[(i, j, k)] = v
    return table


def corner_coordinates(N: int) -> np.ndarray:
    """All clamped left ends ``l0_{j,k}(N)`` as floats."""
    return np.unique([float(interval(j, k, N).left_clamped) for k in FAMILIES for j in index_set(k, N)])


def build_outer(
    f: Callable,
    phi: InnerMap,
    norm_f: SupNormEstimate | float,
    images: Mapping[tuple[int, int, int], QuadExt] | None = None,
) -> OuterFunction:
    """Outer function with ``h(image of square (i,j,k)) = f(l0_i, l0_j) / 3``."""
    norm = float(norm_f)
    if not norm > 0:
        raise ValueError("build_outer needs a positive norm estimate")
    if images is None:
        images = plateau_images(phi)
    keys = list(images)
    N = phi.N
    lx = np.array([float(interval(i, k, N).left_clamped) for i, _, k in keys])
    ly = np.array([float(interval(j, k, N).left_clamped) for _, j, k in keys])
    vals = np.asarray(f(lx, ly), dtype=float) / 3.0
    h = OuterFunction(_sorted_fast(keys, images, vals))
    if h.norm() > norm / 3 * (1 + 1e-12):
        raise ValueError(f"|h| = {h.norm():.6g} exceeds |f|/3 = {norm / 3:.6g}; the norm estimate misses the knot samples")
    return h


def _sorted_fast(keys, images, vals) -> tuple[tuple[QuadExt, float], ...]:
    knots = [(images[key], float(v)) for key, v in zip(keys, vals)]
    return tuple(sort_knots(knots))


def residual_norm(f: Callable, phi: InnerMap, h: OuterFunction, grid: int = DEFAULT_GRID) -> SupNormEstimate:
    return sup_norm(lambda X, Y: f(X, Y) - superpose_eval(phi, h, X, Y), grid)


def passes(residual: SupNormEstimate | float, norm_f: SupNormEstimate | float) -> bool:
    return float(residual) < PASS_RATIO * float(norm_f)


def stability_margin(
    f: Callable,
    psi: InnerMap,
    h: OuterFunction,
    grid: int = DEFAULT_GRID,
    norm_f: SupNormEstimate | float | None = None,
    residual: SupNormEstimate | float | None = None,
) -> float:
    """Sup-distance below which any inner map keeps the 6/7 residual bound with the same ``h``.

    ``eps = (6/7 |f| - |f - S_psi h|) / 5``; ``delta = eps / Lip(h)`` is an exact
    modulus for the piecewise-linear ``h``; the margin is ``delta / 3``.
    """
    nf = float(norm_f) if norm_f is not None else sup_norm(f, grid).value
    if not nf > 0:
        raise StabilityError("stability margin is defined only for |f| > 0")
    res = float(residual) if residual is not None else residual_norm(f, psi, h, grid).value
    eps = stability_epsilon(nf, res)
    if not eps > 0:
        raise StabilityError(f"psi does not pass: residual {res:.6g} >= 6/7 |f| = {PASS_RATIO * nf:.6g}")
    lip = h.lipschitz()
    delta = eps / lip if lip > 0 else 3.0
    return delta / 3


def stability_epsilon(norm_f: float, residual: float) -> float:
    return (PASS_RATIO * norm_f - residual) / 5
