"""The five shifted interval families ``I_{j,k}(N)`` on the unit interval.

Family ``k`` (1..5) at resolution ``N`` consists of the closed intervals
``[(5j+k)/N, (5j+k+4)/N]`` for ``j`` in ``Z_k(N) = [-1, (N-k)/5]``: length 4/N,
separated by gaps of length 1/N, the first covering 0 and the last covering 1.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real

import numpy as np

from .exact import format_rational

FAMILIES = (1, 2, 3, 4, 5)

# Float offsets closer than this to an interval boundary are re-decided exactly.
_BOUNDARY_GUARD = 1e-9


class GridError(ValueError):
    pass


def _check(k: int, N: int) -> None:
    if k not in FAMILIES:
        raise GridError(f"family index must be in 1..5, got {k}")
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise GridError(f"resolution N must be a positive integer, got {N!r}")


@dataclass(frozen=True)
class IntervalIndex:
    j: int
    k: int
    N: int

    def __post_init__(self) -> None:
        _check(self.k, self.N)
        if not -1 <= self.j <= (self.N - self.k) // 5:
            raise GridError(f"j={self.j} is not in Z_{self.k}({self.N})")


@dataclass(frozen=True)
class GridInterval:
    left: Fraction
    right: Fraction
    left_clamped: Fraction

    def contains(self, x: Real | Fraction) -> bool:
        q = Fraction(x)
        return self.left <= q <= self.right

    def clipped(self) -> tuple[Fraction, Fraction]:
        """The interval intersected with [0, 1]."""
        return max(self.left, Fraction(0)), min(self.right, Fraction(1))


def index_set(k: int, N: int) -> list[int]:
    _check(k, N)
    return list(range(-1, (N - k) // 5 + 1))


def interval(j: int, k: int, N: int) -> GridInterval:
    IntervalIndex(j, k, N)
    left = Fraction(5 * j + k, N)
    return GridInterval(left, left + Fraction(4, N), max(left, Fraction(0)))


def family(k: int, N: int) -> list[GridInterval]:
    return [interval(j, k, N) for j in index_set(k, N)]


def _check_unit(x) -> None:
    if not 0 <= x <= 1:
        raise GridError(f"point {x!r} lies outside [0, 1]")


def locate(x: Real | Fraction, k: int, N: int) -> int | None:
    """Index ``j`` of the family-``k`` interval containing ``x``, or None in a gap.

    Floats are exact binary rationals, so the decision is made on
    ``Fraction(x)`` and boundary points are never misclassified.
    """
    _check(k, N)
    _check_unit(x)
    t = Fraction(x) * N - k
    j = t.numerator // (5 * t.denominator)  # floor(t / 5)
    return j if t - 5 * j <= 4 else None


def locate_array(xs, k: int, N: int) -> np.ndarray:
    """Vectorised :func:`locate`; gaps are reported as ``-2``.

    Points whose float offset sits within a hair of an interval end are
    re-decided by the exact scalar routine.
    """
    _check(k, N)
    xs = np.asarray(xs, dtype=float)
    if xs.size and (xs.min() < 0 or xs.max() > 1):
        raise GridError("points must lie in [0, 1]")
    t = xs * N - k
    j = np.floor(t / 5)
    off = t - 5 * j
    out = np.where(off <= 4, j, -2).astype(np.int64)
    near = (
        (np.abs(off - 4) < _BOUNDARY_GUARD)
        | (off < _BOUNDARY_GUARD)
        | (off > 5 - _BOUNDARY_GUARD)
    )
    for idx in np.flatnonzero(near):
        r = locate(float(xs.flat[idx]), k, N)
        out.flat[idx] = -2 if r is None else r
    return out


def covering_triples(x: Real | Fraction, y: Real | Fraction, N: int) -> list[tuple[int, int, int]]:
    """All ``(i, j, k)`` with ``(x, y)`` in ``I_{i,k}(N) x I_{j,k}(N)``, ordered by k."""
    _check_unit(x)
    _check_unit(y)
    out = []
    for k in FAMILIES:
        i = locate(x, k, N)
        if i is None:
            continue
        j = locate(y, k, N)
        if j is not None:
            out.append((i, j, k))
    return out


def covering_count_array(xs, ys, N: int) -> np.ndarray:
    """Number of families whose squares contain each point ``(xs[n], ys[n])``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    count = np.zeros(np.broadcast(xs, ys).shape, dtype=np.int64)
    for k in FAMILIES:
        count += (locate_array(xs, k, N) != -2) & (locate_array(ys, k, N) != -2)
    return count


def dump_csv(k: int, N: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["j", "left", "right", "left_clamped"])
    for j in index_set(k, N):
        iv = interval(j, k, N)
        w.writerow([j, format_rational(iv.left), format_rational(iv.right), format_rational(iv.left_clamped)])
    return buf.getvalue()
