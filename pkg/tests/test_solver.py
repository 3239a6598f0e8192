import json
from fractions import Fraction

import numpy as np
import pytest

from kst.cli.registry import REGISTRY
from kst.separators import build_inner_map, identity, inner_map_threshold
from kst.solver import (
    FORMAT,
    LAMBDA,
    REPORT_COLUMNS,
    KSRepresentation,
    ModelFormatError,
    ResolutionCapExceeded,
    choose_resolution,
    deserialize,
    evaluate,
    run,
    serialize,
)
from kst.superposition import PASS_RATIO, TargetFunction

ZERO = TargetFunction(lambda x, y: np.zeros(np.broadcast(x, y).shape), "zero")


def test_choose_resolution_constant_target():
    assert choose_resolution(REGISTRY["const1"], 1.0, 7) == 8


def test_choose_resolution_sum():
    f = REGISTRY["xplusy"]
    N = choose_resolution(f, 2.0, 20)
    # 4/N-boxes of x + y oscillate by 8/N, which must drop below 2/6
    assert N == 25


def test_choose_resolution_cap():
    rough = TargetFunction(lambda x, y: np.sin(4000 * x), "rough")
    with pytest.raises(ResolutionCapExceeded):
        choose_resolution(rough, 1.0, 10, cap=64)


def test_zero_target_gives_empty_representation():
    rep, report = run(ZERO, 3)
    assert rep.stages == [] and report.stop_reason == "zero_target"
    assert np.all(evaluate(rep, np.linspace(0, 1, 5), 0.5) == 0)


def test_const1_stages():
    rep, report = run(REGISTRY["const1"], 3, grid=128)
    assert report.stop_reason == "max_stages"
    for row in report.rows:
        assert row.ratio == pytest.approx(2 / 3, abs=1e-9)
        assert row.res_after <= LAMBDA**row.m * report.norm_f
    assert report.final_residual == pytest.approx((2 / 3) ** 3, abs=1e-9)


def test_xy_first_stage_contracts(xy):
    rep, report = run(xy, 1, grid=256)
    row = report.rows[0]
    assert row.accepted and row.ratio < PASS_RATIO
    assert row.h_norm <= row.res_before / 3 + 1e-12
    assert row.N > inner_map_threshold(identity)


def test_fixed_mode_shares_phi(xy):
    phi = build_inner_map(identity, 82)
    rep, report = run(xy, 2, mode="fixed", phi=phi, grid=128)
    assert rep.shared_phi is phi
    assert all(st.phi is None for st in rep.stages)
    h = rep.combined_outer()
    xs = np.linspace(0, 1, 33)
    X, Y = np.meshgrid(xs, xs)
    from kst.superposition import superpose_eval

    assert np.allclose(superpose_eval(phi, h, X, Y), evaluate(rep, X, Y), atol=1e-12)


def test_fixed_mode_needs_phi(xy):
    with pytest.raises(ValueError):
        run(xy, 1, mode="fixed")


def test_tolerance_stop(xy):
    _, report = run(xy, 5, target_residual=10.0)
    assert report.stop_reason == "tolerance" and report.rows == []


def test_report_csv(xy):
    _, report = run(xy, 1, grid=128, config={"target": "xy"})
    lines = report.to_csv().splitlines()
    assert lines[0] == '# config={"target": "xy"}'
    assert lines[1].split(",") == REPORT_COLUMNS + ["accepted"]
    assert len(lines) == 3


def test_serialization_round_trip(xy):
    rep, _ = run(xy, 1, grid=128)
    text = serialize(rep)
    again = deserialize(text)
    assert serialize(again) == text
    xs = np.linspace(0, 1, 17)
    X, Y = np.meshgrid(xs, xs)
    assert np.array_equal(evaluate(rep, X, Y), evaluate(again, X, Y))
    doc = json.loads(text)
    assert doc["format"] == FORMAT
    plateau = doc["stages"][0]["phi"]["plateaus"][0][2]
    assert "/" in plateau and Fraction(plateau) == rep.stages[0].phi.plateaus[(-1, 1)]


def test_serialization_rejects_bad_input():
    with pytest.raises(ModelFormatError):
        deserialize("{")
    with pytest.raises(ModelFormatError):
        deserialize(json.dumps({"format": "kst-model/99"}))
    with pytest.raises(ModelFormatError):
        deserialize(json.dumps({"format": FORMAT, "stages": [{}]}))


def test_runs_are_deterministic(xy):
    a, ra = run(xy, 1, grid=128)
    b, rb = run(xy, 1, grid=128)
    assert serialize(a) == serialize(b)
    assert [(r.N, r.res_after) for r in ra.rows] == [(r.N, r.res_after) for r in rb.rows]


def test_evaluate_domain():
    with pytest.raises(ValueError):
        evaluate(KSRepresentation(), 1.2, 0.0)
