import numpy as np
import pytest

from kst.cli.registry import REGISTRY
from kst.separators import build_inner_map, identity


@pytest.fixture(scope="session")
def phi30():
    return build_inner_map(identity, 30, 0.3, enforce_resolution=False)


@pytest.fixture(scope="session")
def xy():
    return REGISTRY["xy"]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def closed_form():
    """h(t) = t, phi_1(x) = x, phi_2 = 2/(1 + sqrt2), phi_3..5 = 0: sums to x + sqrt2*y + 2."""
    from kst.exact import QuadExt
    from kst.separators import InnerMap, PLFunction
    from kst.solver import KSRepresentation, Stage
    from kst.superposition import OuterFunction, SupNormEstimate

    two_over = QuadExt(-2, 2)
    comps = (
        PLFunction(((0, 0), (1, 1))),
        PLFunction(((0, two_over), (1, two_over))),
    ) + tuple(PLFunction(((0, 0), (1, 0))) for _ in range(3))
    phi = InnerMap(comps)
    top = QuadExt(1, 1)
    h = OuterFunction.from_knots([(QuadExt(0, 0), 0.0), (top, float(top))])
    est = SupNormEstimate(0.0, 1, 0.0)
    return KSRepresentation(mode="adaptive", stages=[Stage(1, 1, phi, h, est, est)], target_name="closed_form")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
