"""``kst`` command line: build-phi, approximate, eval, report, grid dump, verify."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .. import grid as G
from .. import verify as V
from ..separators import SeparatorError, build_inner_map, constant, identity
from ..solver import (
    NonContractionError,
    ModelFormatError,
    deserialize,
    evaluate,
    phi_from_doc,
    phi_to_doc,
    run,
    serialize,
)
from ..superposition import PASS_RATIO, sup_norm, unit_grid
from .registry import REGISTRY, resolve_target

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_NONCONTRACTION = 0, 2, 3, 4

log = logging.getLogger("kst")


class ConfigError(Exception):
    pass


def _psi(spec: str):
    if spec == "identity":
        return identity
    if spec.startswith("const:"):
        try:
            v = float(Fraction(spec.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad constant in --psi {spec!r}") from None
        if not 0 <= v <= 1:
            raise ConfigError("--psi constant must lie in [0, 1]")
        return constant(v)
    raise ConfigError(f"--psi must be 'identity' or 'const:<v>', got {spec!r}")


def _epsilon(text: str) -> Fraction:
    try:
        eps = Fraction(text)
    except ValueError:
        raise ConfigError(f"bad epsilon {text!r}") from None
    if eps <= 0:
        raise ConfigError("epsilon must be positive")
    return eps


def _target(spec: str):
    try:
        return resolve_target(spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _write(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _load_model(path: str):
    try:
        return deserialize(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read model: {exc}") from None
    except ModelFormatError as exc:
        raise ConfigError(str(exc)) from None


def cmd_build_phi(args) -> int:
    if args.N < 1:
        raise ConfigError("--N must be positive")
    phi = build_inner_map(_psi(args.psi), args.N, _epsilon(args.epsilon), enforce_resolution=not args.no_enforce)
    doc = {"format": "kst-phi/1", "psi": args.psi, "epsilon": str(_epsilon(args.epsilon)), "phi": phi_to_doc(phi)}
    _write(args.out, json.dumps(doc, separators=(",", ":")) + "\n")
    return EXIT_OK


def _read_phi(path: str):
    try:
        doc = json.loads(Path(path).read_text())
        return phi_from_doc(doc["phi"] if "phi" in doc else doc)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot read inner map {path}: {exc}") from None


def cmd_approximate(args) -> int:
    f = _target(args.target)
    config = {
        "verb": "approximate",
        "target": args.target,
        "mode": args.mode,
        "stages": args.stages,
        "tol": args.tol,
        "grid": args.grid,
        "epsilon": args.epsilon,
        "N": args.N,
        "phi": args.phi,
        "seed": args.seed,
    }
    phi = None
    if args.mode == "fixed":
        if args.phi:
            phi = _read_phi(args.phi)
        elif args.N:
            phi = build_inner_map(identity, args.N, _epsilon(args.epsilon))
        else:
            raise ConfigError("fixed mode needs --phi or --N")
    if args.stages < 1 or args.grid < 2:
        raise ConfigError("--stages must be >= 1 and --grid >= 2")
    code = EXIT_OK
    try:
        rep, report = run(f, args.stages, args.tol, args.mode, phi=phi, grid=args.grid, epsilon=_epsilon(args.epsilon), name=f.name, config=config)
    except NonContractionError as exc:
        rep, report, code = exc.representation, exc.report, EXIT_NONCONTRACTION
        log.error("%s", exc)
    if report.stop_reason == "resolution_cap":
        code = EXIT_NONCONTRACTION
    if args.out:
        Path(args.out).write_text(serialize(rep))
    if args.report:
        Path(args.report).write_text(report.to_csv())
    print(json.dumps(report.summary()))
    if report.diagnostic:
        print(report.diagnostic, file=sys.stderr)
    return code


def cmd_eval(args) -> int:
    rep = _load_model(args.model)
    if args.grid:
        g = unit_grid(args.grid)
        X, Y = np.meshgrid(g, g, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
    elif args.x is not None and args.y is not None:
        pts = np.array([[args.x, args.y]])
    else:
        raise ConfigError("eval needs --x and --y, or --grid")
    if pts.min() < 0 or pts.max() > 1:
        raise ConfigError("evaluation points must lie in [0, 1]^2")
    vals = evaluate(rep, pts[:, 0], pts[:, 1])
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["x", "y", "value"])
    for (x, y), v in zip(pts, vals):
        w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
    return EXIT_OK


def cmd_report(args) -> int:
    rep = _load_model(args.model)
    f = _target(args.target or rep.target_name)
    g = unit_grid(args.grid)
    X, Y = np.meshgrid(g, g, indexing="ij")
    fv = f(X, Y)
    sv = evaluate(rep, X, Y)
    res = fv - sv
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "f", "S_phi_h", "residual"])
            for row in zip(X.ravel(), Y.ravel(), fv.ravel(), sv.ravel(), res.ravel()):
                w.writerow([repr(float(v)) for v in row])
    norm_f = sup_norm(f, args.grid).value
    residual = float(np.max(np.abs(res)))
    summary = {
        "target": f.name,
        "mode": rep.mode,
        "stages": len(rep.stages),
        "N": [st.N for st in rep.stages],
        "grid": args.grid,
        "norm_f": norm_f,
        "residual": residual,
        "ratio": residual / norm_f if norm_f else 0.0,
        "pass": bool(residual < PASS_RATIO * norm_f) if norm_f else True,
    }
    text = json.dumps(summary, indent=2) + "\n"
    _write(args.summary, text)
    return EXIT_OK


def cmd_grid_dump(args) -> int:
    try:
        _write(args.out, G.dump_csv(args.k, args.N))
    except G.GridError as exc:
        raise ConfigError(str(exc)) from None
    return EXIT_OK


def _n_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        a, b = int(lo), int(hi if sep else lo)
    except ValueError:
        raise ConfigError(f"--N-range must look like 1..40, got {text!r}") from None
    if a < 1 or b < a:
        raise ConfigError("--N-range must be an ascending range of positive integers")
    return range(a, b + 1)


def cmd_verify(args) -> int:
    results = [V.covering_suite(_n_range(args.N_range), seed=args.seed)]
    sep, maps = V.separator_suite()
    results.append(sep)
    results.append(V.injectivity_suite(maps, inject_duplicate=args.inject_duplicate))
    if not args.quick:
        results.append(V.contraction_suite(REGISTRY, args.grid))
        results.append(V.stability_suite(REGISTRY["xy"], args.trials, args.grid, args.seed))
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kst", description="Kolmogorov superposition on the unit square")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    b = sub.add_parser("build-phi", help="build a rationally separating inner map")
    b.add_argument("--N", type=int, required=True)
    b.add_argument("--epsilon", default="1/4")
    b.add_argument("--psi", default="identity", help="identity | const:<v>")
    b.add_argument("--no-enforce", action="store_true", help="allow N at or below the closeness threshold")
    b.add_argument("--out")
    b.set_defaults(func=cmd_build_phi)

    a = sub.add_parser("approximate", help="run the stage iteration on a target")
    a.add_argument("--target", required=True, help=f"registry name ({', '.join(REGISTRY)}) or expression")
    a.add_argument("--mode", choices=("adaptive", "fixed"), default="adaptive")
    a.add_argument("--stages", type=int, default=12)
    a.add_argument("--tol", type=float, default=None, help="target residual (default 1e-3 |f|)")
    a.add_argument("--grid", type=int, default=512)
    a.add_argument("--epsilon", default="1/4")
    a.add_argument("--N", type=int, default=None, help="resolution of the shared inner map (fixed mode)")
    a.add_argument("--phi", default=None, help="inner map JSON from build-phi (fixed mode)")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.add_argument("--report", required=True)
    a.set_defaults(func=cmd_approximate)

    e = sub.add_parser("eval", help="evaluate a model")
    e.add_argument("--model", required=True)
    e.add_argument("--x", type=float)
    e.add_argument("--y", type=float)
    e.add_argument("--grid", type=int, default=None)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="per-point residual CSV and JSON summary")
    r.add_argument("--model", required=True)
    r.add_argument("--target", default=None)
    r.add_argument("--grid", type=int, default=64)
    r.add_argument("--out", default=None, help="residual CSV path")
    r.add_argument("--summary", default=None, help="summary JSON path (default stdout)")
    r.set_defaults(func=cmd_report)

    g = sub.add_parser("grid", help="interval families")
    gsub = g.add_subparsers(dest="grid_verb", required=True)
    d = gsub.add_parser("dump", help="one family as CSV")
    d.add_argument("--N", type=int, required=True)
    d.add_argument("--k", type=int, required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_grid_dump)

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--N-range", dest="N_range", default="1..40")
    v.add_argument("--grid", type=int, default=512)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--quick", action="store_true", help="skip the contraction and stability suites")
    v.add_argument("--inject-duplicate", action="store_true", help="test hook: force a duplicate plateau")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SeparatorError) as exc:
        print(f"kst: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
