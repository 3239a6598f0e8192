"""Outer iteration: stack one-pass approximations of the running residual.

Stage ``m`` applies the one-pass construction to ``r_{m-1} = f - sum_{s<m} S_{phi_s} h_s``.
In adaptive mode each stage builds its own inner map at a resolution fine
enough for the current residual; fixed mode reuses one inner map throughout.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter, minimum_filter

from .exact import QuadExt, format_rational, parse_rational
from .separators import (
    DEFAULT_EPSILON,
    InnerMap,
    PLFunction,
    build_inner_map,
    identity,
    inner_map_threshold,
)
from .superposition import (
    DEFAULT_GRID,
    PASS_RATIO,
    OuterFunction,
    SupNormEstimate,
    build_outer,
    corner_coordinates,
    plateau_images,
    sup_norm,
    superpose_eval,
)

log = logging.getLogger(__name__)

FORMAT = "kst-model/1"
LAMBDA = 7 / 8
RESOLUTION_CAP = 2**14
PROBES_PER_EDGE = 4
DEFAULT_MAX_STAGES = 12
DEFAULT_RELATIVE_TOL = 1e-3


class ResolutionCapExceeded(RuntimeError):
    pass


class NonContractionError(RuntimeError):
    def __init__(self, message: str, representation: "KSRepresentation | None" = None, report: "RunReport | None" = None):
        super().__init__(message)
        self.representation = representation
        self.report = report


class ModelFormatError(ValueError):
    pass


def box_oscillation_exceeds(fn: Callable, N: int, threshold: float, probes: int = PROBES_PER_EDGE, rows_per_chunk: int = 256) -> bool:
    """True when some sampled box of side 4/N shows oscillation >= threshold.

    ``fn`` is sampled on a uniform grid with ``probes`` points per box edge;
    each window of ``probes x probes`` nodes is one box.  Row bands are
    scanned in order and the scan stops at the first offending band.
    """
    spacing = 4.0 / (N * (probes - 1))
    m = int(math.ceil(1.0 / spacing)) + 1
    axis = np.linspace(0.0, 1.0, m)
    w = min(probes, m)
    start = 0
    while True:
        stop = min(start + rows_per_chunk + w - 1, m)
        X, Y = np.meshgrid(axis[start:stop], axis, indexing="ij")
        v = np.asarray(fn(X, Y), dtype=float)
        osc = maximum_filter(v, size=w, mode="nearest") - minimum_filter(v, size=w, mode="nearest")
        if float(np.max(osc)) >= threshold:
            return True
        if stop == m:
            return False
        start = stop - (w - 1)


def choose_resolution(residual: Callable, norm: SupNormEstimate | float, floor_N: int, cap: int = RESOLUTION_CAP) -> int:
    """Smallest ``N > floor_N`` whose sampled 4/N-box oscillation is below ``norm / 6``.

    Candidates double from ``floor_N + 1`` until one passes (or ``cap`` fails);
    the last failing/first passing pair is then bisected.
    """
    nv = float(norm)
    if not nv > 0:
        raise ValueError("choose_resolution needs a positive norm")
    thr = nv / 6
    n = floor_N + 1
    if n > cap:
        raise ResolutionCapExceeded(f"floor resolution {floor_N} already at the cap {cap}")
    if not box_oscillation_exceeds(residual, n, thr):
        return n
    lo = n
    while True:
        if lo == cap:
            raise ResolutionCapExceeded(f"oscillation still >= |r|/6 at N = {cap}")
        hi = min(2 * lo, cap)
        if not box_oscillation_exceeds(residual, hi, thr):
            break
        lo = hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if box_oscillation_exceeds(residual, mid, thr):
            lo = mid
        else:
            hi = mid
    return hi


@dataclass
class Stage:
    index: int
    N: int
    phi: InnerMap | None  # None in fixed mode: the representation holds the shared map
    h: OuterFunction
    residual_before: SupNormEstimate
    residual_after: SupNormEstimate


@dataclass
class KSRepresentation:
    mode: str = "adaptive"
    stages: list[Stage] = field(default_factory=list)
    target_name: str = "f"
    shared_phi: InnerMap | None = None
    norm_f: float = 0.0

    def stage_phi(self, stage: Stage) -> InnerMap:
        phi = stage.phi if stage.phi is not None else self.shared_phi
        if phi is None:
            raise ValueError(f"stage {stage.index} has no inner map")
        return phi

    def combined_outer(self) -> OuterFunction:
        """Sum of all stage outer functions (fixed mode only)."""
        if self.mode != "fixed" or self.shared_phi is None:
            raise ValueError("only fixed-mode representations share one inner map")
        if not self.stages:
            return OuterFunction(())
        pos = {}
        for st in self.stages:
            for p, _ in st.h.knots:
                pos[p] = None
        keys = list(pos)
        fl = np.array([float(p) for p in keys])
        order = np.argsort(fl)
        xs = fl[order]
        total = sum(st.h(xs) for st in self.stages)
        return OuterFunction(tuple((keys[i], float(v)) for i, v in zip(order, total)))


def evaluate(rep: KSRepresentation, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    if (x.size and (x.min() < 0 or x.max() > 1)) or (y.size and (y.min() < 0 or y.max() > 1)):
        raise ValueError("evaluation is defined on [0, 1]^2 only")
    for st in rep.stages:
        out = out + superpose_eval(rep.stage_phi(st), st.h, x, y)
    return out


@dataclass
class StageRow:
    m: int
    N: int
    res_before: float
    res_after: float
    ratio: float
    h_norm: float
    lambda_bound: float
    millis: float
    accepted: bool = True


REPORT_COLUMNS = ["m", "N", "res_before", "res_after", "ratio", "h_norm", "lambda_bound", "millis"]


@dataclass
class RunReport:
    norm_f: float
    rows: list[StageRow] = field(default_factory=list)
    final_residual: float = 0.0
    stop_reason: str = ""
    diagnostic: str = ""
    config: dict = field(default_factory=dict)

    @property
    def accepted_rows(self) -> list[StageRow]:
        return [r for r in self.rows if r.accepted]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# config=" + json.dumps(self.config, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS + ["accepted"])
        for r in self.rows:
            w.writerow([r.m, r.N, repr(r.res_before), repr(r.res_after), repr(r.ratio), repr(r.h_norm), repr(r.lambda_bound), f"{r.millis:.1f}", int(r.accepted)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "norm_f": self.norm_f,
            "stages": len(self.accepted_rows),
            "final_residual": self.final_residual,
            "stop_reason": self.stop_reason,
            "diagnostic": self.diagnostic,
        }


class _Residual:
    """``f - sum of stage superpositions``, evaluated lazily."""

    def __init__(self, f: Callable, rep: KSRepresentation):
        self.f = f
        self.rep = rep

    def __call__(self, X, Y):
        return self.f(X, Y) - evaluate(self.rep, X, Y)


def run(
    f: Callable,
    max_stages: int = DEFAULT_MAX_STAGES,
    target_residual: float | None = None,
    mode: str = "adaptive",
    *,
    phi: InnerMap | None = None,
    grid: int = DEFAULT_GRID,
    psi: Callable | Sequence[Callable] = identity,
    epsilon=DEFAULT_EPSILON,
    cap: int = RESOLUTION_CAP,
    name: str | None = None,
    config: dict | None = None,
) -> tuple[KSRepresentation, RunReport]:
    """Iterate one-pass approximations of the residual.

    Stops when the grid residual drops to ``target_residual`` (default
    ``1e-3 * |f|``) or after ``max_stages`` accepted stages.  In adaptive mode a
    stage that fails to contract by 6/7 raises :class:`NonContractionError`;
    a residual too rough for the resolution cap ends the run with
    ``stop_reason = "resolution_cap"``.  In fixed mode a failing stage is
    recorded as rejected and ends the run (``"fixed_violation"``).
    """
    if mode not in ("adaptive", "fixed"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "fixed" and (phi is None or phi.N is None):
        raise ValueError("fixed mode needs a grid-based inner map up front")
    if max_stages < 1:
        raise ValueError("max_stages must be positive")
    name = name or getattr(f, "name", None) or "f"
    norm_f = sup_norm(f, grid)
    rep = KSRepresentation(mode=mode, target_name=name, shared_phi=phi if mode == "fixed" else None, norm_f=norm_f.value)
    tol = DEFAULT_RELATIVE_TOL * norm_f.value if target_residual is None else float(target_residual)
    report = RunReport(norm_f=norm_f.value, final_residual=norm_f.value, config=dict(config or {}))
    if norm_f.value == 0:
        report.stop_reason = "zero_target"
        return rep, report

    floor_N = inner_map_threshold(psi, epsilon) if mode == "adaptive" else None
    residual = _Residual(f, rep)
    current = norm_f
    shared_images = plateau_images(phi) if mode == "fixed" else None
    m = 0
    while True:
        if current.value <= tol:
            report.stop_reason = "tolerance"
            break
        if m >= max_stages:
            report.stop_reason = "max_stages"
            break
        t0 = time.perf_counter()
        if mode == "adaptive":
            try:
                N = choose_resolution(residual, current, floor_N, cap)
            except ResolutionCapExceeded as exc:
                report.stop_reason = "resolution_cap"
                report.diagnostic = f"stage {m + 1}: {exc}"
                log.info("run stopped: %s", report.diagnostic)
                break
            stage_phi = build_inner_map(psi, N, epsilon)
            images = plateau_images(stage_phi)
        else:
            N, stage_phi, images = phi.N, phi, shared_images
        before = sup_norm(residual, grid, extra_axis=corner_coordinates(N))
        h = build_outer(residual, stage_phi, before, images)
        stage = Stage(m + 1, N, stage_phi if mode == "adaptive" else None, h, before, before)
        rep.stages.append(stage)
        after = sup_norm(residual, grid)
        stage.residual_after = after
        millis = (time.perf_counter() - t0) * 1000
        ratio = after.value / before.value
        row = StageRow(m + 1, N, before.value, after.value, ratio, h.norm(), LAMBDA ** (m + 1) * norm_f.value, millis)
        report.rows.append(row)
        log.info("stage %d: N=%d residual %.6g -> %.6g (ratio %.4f)", m + 1, N, before.value, after.value, ratio)
        if not ratio < PASS_RATIO:
            rep.stages.pop()
            row.accepted = False
            msg = f"stage {m + 1}: residual ratio {ratio:.4f} >= 6/7 at N={N}"
            if mode == "fixed":
                report.stop_reason = "fixed_violation"
                report.diagnostic = msg + " (the fixed resolution no longer resolves the residual)"
                break
            report.stop_reason = "non_contraction"
            report.diagnostic = msg
            raise NonContractionError(msg, rep, report)
        current = after
        report.final_residual = after.value
        m += 1
    return rep, report


# ---------------------------------------------------------------- serialization


def _value_doc(v):
    return v.to_json() if isinstance(v, QuadExt) else format_rational(v)


def _value_from(doc):
    if isinstance(doc, dict):
        return QuadExt.from_json(doc)
    if isinstance(doc, str):
        return parse_rational(doc)
    raise ModelFormatError(f"bad exact value {doc!r}")


def phi_to_doc(phi: InnerMap) -> dict:
    return {
        "N": phi.N,
        "components": [[[format_rational(p), _value_doc(v)] for p, v in c.breakpoints] for c in phi.components],
        "plateaus": [[j, k, _value_doc(v)] for (j, k), v in sorted(phi.plateaus.items(), key=lambda e: (e[0][1], e[0][0]))],
    }


def phi_from_doc(doc: dict) -> InnerMap:
    comps = tuple(PLFunction(tuple((parse_rational(p), _value_from(v)) for p, v in c)) for c in doc["components"])
    plats = {(int(j), int(k)): _value_from(v) for j, k, v in doc["plateaus"]}
    return InnerMap(comps, plats, doc["N"])


def _estimate_doc(e: SupNormEstimate) -> dict:
    return {"value": e.value, "grid": e.grid, "certified_bound": e.certified_bound}


def _estimate_from(doc: dict) -> SupNormEstimate:
    return SupNormEstimate(float(doc["value"]), int(doc["grid"]), doc["certified_bound"])


def to_document(rep: KSRepresentation) -> dict:
    return {
        "format": FORMAT,
        "mode": rep.mode,
        "target": rep.target_name,
        "norm_f": rep.norm_f,
        "shared_phi": phi_to_doc(rep.shared_phi) if rep.shared_phi is not None else None,
        "stages": [
            {
                "m": st.index,
                "N": st.N,
                "phi": phi_to_doc(st.phi) if st.phi is not None else None,
                "h": [[p.to_json(), v] for p, v in st.h.knots],
                "residual_before": _estimate_doc(st.residual_before),
                "residual_after": _estimate_doc(st.residual_after),
            }
            for st in rep.stages
        ],
    }


def from_document(doc: Any) -> KSRepresentation:
    if not isinstance(doc, dict) or "format" not in doc:
        raise ModelFormatError("not a model document")
    if doc["format"] != FORMAT:
        raise ModelFormatError(f"unsupported model version {doc['format']!r}, expected {FORMAT!r}")
    try:
        shared = phi_from_doc(doc["shared_phi"]) if doc["shared_phi"] is not None else None
        stages = [
            Stage(
                int(s["m"]),
                int(s["N"]),
                phi_from_doc(s["phi"]) if s["phi"] is not None else None,
                OuterFunction(tuple((QuadExt.from_json(p), float(v)) for p, v in s["h"])),
                _estimate_from(s["residual_before"]),
                _estimate_from(s["residual_after"]),
            )
            for s in doc["stages"]
        ]
        return KSRepresentation(doc["mode"], stages, doc["target"], shared, float(doc["norm_f"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc


def serialize(rep: KSRepresentation) -> str:
    return json.dumps(to_document(rep), separators=(",", ":"))


def deserialize(text: str) -> KSRepresentation:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model is not JSON: {exc}") from exc
    return from_document(doc)
