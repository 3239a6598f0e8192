"""Constructive Kolmogorov superposition on the unit square.

Approximates ``f(x, y)`` by ``sum_k h(phi_k(x) + sqrt2 * phi_k(y))`` with
piecewise-linear inner maps ``phi_1..phi_5`` and outer functions ``h``.
"""
from .exact import QuadExt, quadext_cmp, quadext_sign, quadext_to_float
from .separators import InnerMap, PLFunction, build_inner_map, build_separator
from .solver import KSRepresentation, RunReport, deserialize, evaluate, run, serialize
from .superposition import OuterFunction, SupNormEstimate, TargetFunction, build_outer, superpose_eval

__all__ = [
    "InnerMap",
    "KSRepresentation",
    "OuterFunction",
    "PLFunction",
    "QuadExt",
    "RunReport",
    "SupNormEstimate",
    "TargetFunction",
    "build_inner_map",
    "build_outer",
    "build_separator",
    "deserialize",
    "evaluate",
    "quadext_cmp",
    "quadext_sign",
    "quadext_to_float",
    "run",
    "serialize",
    "superpose_eval",
]
