"""Built-in target functions and target resolution for the command line."""
from __future__ import annotations

import math

import numpy as np

from ..superposition import TargetFunction
from .expression import ExpressionError, evaluate, parse_expression

TWO_PI = 2 * math.pi


def _const1(x, y):
    return np.ones(np.broadcast(x, y).shape)


def _sin2pi(x, y):
    return np.sin(TWO_PI * x) * np.sin(TWO_PI * y)


def _runge(x, y):
    return 1.0 / (1.0 + 25.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))


# Lipschitz constants are for the Euclidean norm on the unit square.
REGISTRY: dict[str, TargetFunction] = {
    "const1": TargetFunction(_const1, "const1", 0.0),
    "xplusy": TargetFunction(lambda x, y: x + y, "xplusy", math.sqrt(2)),
    "xy": TargetFunction(lambda x, y: x * y, "xy", math.sqrt(2)),
    "sin2pi": TargetFunction(_sin2pi, "sin2pi", TWO_PI),
    "runge": TargetFunction(_runge, "runge", 3.25),
}

# The same targets in the expression language.
EXPRESSIONS = {
    "const1": "1",
    "xplusy": "x + y",
    "xy": "x*y",
    "sin2pi": f"sin({TWO_PI!r}*x)*sin({TWO_PI!r}*y)",
    "runge": "1/(1 + 25*((x - 0.5)^2 + (y - 0.5)^2))",
}


def expression_target(text: str) -> TargetFunction:
    tree = parse_expression(text)

    def fn(x, y):
        out = evaluate(tree, x, y)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(x, y).shape)

    return TargetFunction(fn, text)


def resolve_target(spec: str) -> TargetFunction:
    """A registry name, or else an expression in ``x`` and ``y``."""
    if spec in REGISTRY:
        return REGISTRY[spec]
    try:
        return expression_target(spec)
    except ExpressionError as exc:
        raise ValueError(f"{spec!r} is neither a registry target ({', '.join(REGISTRY)}) nor a valid expression: {exc}") from exc
