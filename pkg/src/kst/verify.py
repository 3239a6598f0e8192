"""Property suites behind the ``verify`` command."""
from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from . import grid as G
from .separators import (
    InnerMap,
    build_inner_map,
    check_inner_map,
    constant,
    identity,
    inner_map_threshold,
)
from .solver import choose_resolution
from .superposition import (
    InjectivityError,
    build_outer,
    corner_coordinates,
    plateau_images,
    residual_norm,
    stability_margin,
    sup_norm,
)


@dataclass
class SuiteResult:
    name: str
    ok: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.ok else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def brute_force_membership(nums: np.ndarray, den: int, N: int) -> np.ndarray:
    """Boolean ``(points, 5)`` table: is ``num/den`` in some interval of family k.

    Enumerates every interval of every family with integer arithmetic only.
    """
    nums = np.asarray(nums, dtype=np.int64)
    scaled = nums * N
    out = np.zeros((nums.size, 5), dtype=bool)
    for k in G.FAMILIES:
        for j in G.index_set(k, N):
            lo = (5 * j + k) * den
            out[:, k - 1] |= (scaled >= lo) & (scaled <= lo + 4 * den)
    return out


def covering_suite(n_range: Sequence[int] = range(1, 41), grid: int = 200, random_points: int = 10_000, seed: int = 0) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    gx = np.linspace(0.0, 1.0, grid)
    rx, ry = rng.random(random_points), rng.random(random_points)
    den = 2**20
    dyadic = rng.integers(0, den + 1, size=(2, random_points))
    worst2d, worst1d, mismatches = 5, 5, 0
    for N in n_range:
        X, Y = np.meshgrid(gx, gx, indexing="ij")
        worst2d = min(worst2d, int(G.covering_count_array(X, Y, N).min()), int(G.covering_count_array(rx, ry, N).min()))
        per_coord = np.stack([G.locate_array(gx, k, N) != -2 for k in G.FAMILIES], axis=1)
        worst1d = min(worst1d, int(per_coord.sum(axis=1).min()))
        # exact oracle on the grid coordinates i/(grid-1) and on dyadic random points
        oracle = brute_force_membership(np.arange(grid), grid - 1, N)
        mismatches += int(np.count_nonzero(oracle != per_coord))
        ox = brute_force_membership(dyadic[0], den, N)
        oy = brute_force_membership(dyadic[1], den, N)
        worst2d = min(worst2d, int((ox & oy).sum(axis=1).min()))
        impl = np.stack([G.locate_array(dyadic[0] / den, k, N) != -2 for k in G.FAMILIES], axis=1)
        mismatches += int(np.count_nonzero(impl != ox))
    ok = worst2d >= 3 and worst1d >= 4 and mismatches == 0
    detail = f"min squares covering a point {worst2d}, min families per coordinate {worst1d}, oracle mismatches {mismatches}"
    return SuiteResult("covering", ok, detail, time.perf_counter() - t0)


def separator_problems(phi: InnerMap, psi: Callable, epsilon, forbidden=frozenset(), points: int = 10_000) -> list[str]:
    problems = check_inner_map(phi)
    xs = np.linspace(0.0, 1.0, points)
    ref = np.broadcast_to(np.asarray(psi(xs), dtype=float), xs.shape)
    for k in G.FAMILIES:
        dev = float(np.max(np.abs(phi.component(k)(xs) - ref)))
        if not dev < float(epsilon):
            problems.append(f"|phi_{k} - psi| = {dev:.4g} >= epsilon {float(epsilon)}")
    clash = set(phi.plateaus.values()) & set(forbidden)
    if clash:
        problems.append(f"{len(clash)} plateaus hit the forbidden set")
    return problems


def separator_suite(epsilons=(0.3, 0.1)) -> tuple[SuiteResult, list[InnerMap]]:
    t0 = time.perf_counter()
    maps, problems = [], []
    for label, psi in (("identity", identity), ("const 1/2", constant(0.5))):
        for eps in epsilons:
            N = inner_map_threshold(psi, eps) + 1
            phi = build_inner_map(psi, N, eps)
            maps.append(phi)
            problems += [f"{label}, N={N}, eps={eps}: {p}" for p in separator_problems(phi, psi, eps)]
    ok = not problems
    detail = f"{len(maps)} inner maps checked" if ok else "; ".join(problems[:5])
    return SuiteResult("separators", ok, detail, time.perf_counter() - t0), maps


def duplicate_plateau(phi: InnerMap) -> InnerMap:
    """Test hook: copy one plateau value of family 1 onto family 2."""
    plats = dict(phi.plateaus)
    plats[(0, 2)] = plats[(0, 1)]
    return phi.with_plateaus(plats)


def injectivity_suite(maps: Sequence[InnerMap], inject_duplicate: bool = False) -> SuiteResult:
    t0 = time.perf_counter()
    maps = list(maps)
    if inject_duplicate and maps:
        maps[0] = duplicate_plateau(maps[0])
    failures, squares = [], 0
    for phi in maps:
        try:
            squares += len(plateau_images(phi))
        except InjectivityError as exc:
            failures.append(str(exc))
    ok = not failures
    detail = f"{squares} square images, all distinct" if ok else failures[0]
    return SuiteResult("injectivity", ok, detail, time.perf_counter() - t0)


def one_pass(f: Callable, grid: int = 512, epsilon=Fraction(1, 4)):
    """One pass on ``f``: returns (N, phi, h, norm_f, residual)."""
    floor_N = inner_map_threshold(identity, epsilon)
    norm0 = sup_norm(f, grid)
    N = choose_resolution(f, norm0, floor_N)
    phi = build_inner_map(identity, N, epsilon)
    norm_f = sup_norm(f, grid, extra_axis=corner_coordinates(N))
    h = build_outer(f, phi, norm_f)
    return N, phi, h, norm_f, residual_norm(f, phi, h, grid)


def contraction_suite(targets: dict[str, Callable], grid: int = 512) -> SuiteResult:
    t0 = time.perf_counter()
    rows, ok = [], True
    for name, f in targets.items():
        N, phi, h, norm_f, res = one_pass(f, grid)
        good = res.value < 6 / 7 * norm_f.value and h.norm() <= norm_f.value / 3 + 1e-9
        ok &= good
        rows.append(f"{name} N={N} ratio={res.value / norm_f.value:.3f}{'' if good else ' FAIL'}")
    return SuiteResult("contraction", ok, ", ".join(rows), time.perf_counter() - t0)


def perturb(phi: InnerMap, amount: float, rng: np.random.Generator) -> InnerMap:
    """Move every plateau by a uniform random amount strictly below ``amount``, staying in [0, 1]."""
    plats = {}
    for key, v in phi.plateaus.items():
        u = Fraction(float(rng.uniform(-1.0, 1.0)) * amount * 0.999)
        plats[key] = min(max(v + u, Fraction(0)), Fraction(1))
    return phi.with_plateaus(plats)


def stability_suite(f: Callable, trials: int = 20, grid: int = 512, seed: int = 0) -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    N, phi, h, norm_f, res = one_pass(f, grid)
    margin = stability_margin(f, phi, h, grid, norm_f, res)
    kept = 0
    for _ in range(trials):
        moved = perturb(phi, margin, rng)
        if residual_norm(f, moved, h, grid).value < 6 / 7 * norm_f.value:
            kept += 1
    ok = kept == trials
    return SuiteResult("stability", ok, f"margin {margin:.3g}, {kept}/{trials} perturbed maps keep ratio < 6/7", time.perf_counter() - t0)
