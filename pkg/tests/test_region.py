import json
from fractions import Fraction as F

import numpy as np
import pytest

from flatbez.bezier import symbolic_curve
from flatbez.constraints import Relation, bound_curve, compile_system
from flatbez.models import vehicle_input_curve
from flatbez.region import (
    Fixture,
    branch_and_prune,
    cad_fixture_check,
    classify_box,
    load_fixture,
    membership,
    sample_oracle,
)
from flatbez.sympoly import parse_poly, variables

a1, a2 = variables("a1", "a2")


def vehicle2():
    u = vehicle_input_curve(symbolic_curve([0, "a1", "a2", 1]))
    return compile_system(bound_curve(u, 0, 10, name="u"), {"a1": (0, 2), "a2": (F(-1, 2), F(3, 2))})


def vehicle3():
    u = vehicle_input_curve(symbolic_curve([0, "a1", "a2", "a3", 1]))
    return compile_system(bound_curve(u, 0, 10, name="u"),
                          {"a1": (0, F(5, 2)), "a2": (-1, F(5, 2)), "a3": (F(-5, 4), F(3, 2))})


def pss():
    polys = ["1 + 2*x2", "2 - 4*x1 - 3*x2", "10 - 28*x1 - 5*x2 - 24*x1*x2 - 18*x2^2",
             "1 - x2 - 8*x1^2 - 2*x1*x2 - x2^2 - 8*x1^2*x2 - 6*x1*x2^2"]
    rels = [Relation(parse_poly(p), ">=", f"f{i + 1}") for i, p in enumerate(polys)]
    return compile_system(rels, {"x1": (F(-4, 5), F(3, 5)), "x2": (F(-3, 5), 1)})


def test_classify_examples():
    sys = compile_system([Relation(a1, ">=")], {"a1": (-1, 1)})
    assert classify_box(sys, [(0.1, 0.2)]) == "inside"
    assert classify_box(sys, [(-0.2, -0.1)]) == "outside"
    sq = compile_system([Relation(a1**2 - 1, "<=")], {"a1": (-2, 2)})
    assert classify_box(sq, [(0.5, 1.5)]) == "unknown"


def test_one_dimensional_disc():
    sys = compile_system([Relation(a1**2 - 1, "<=")], {"a1": (-2, 2)})
    r = branch_and_prune(sys, 1e-3)
    lo = min(c.bounds[0][0] for c in r.inside)
    hi = max(c.bounds[0][1] for c in r.inside)
    assert abs(lo + 1) <= 2e-3 and abs(hi - 1) <= 2e-3
    assert r.inside_volume() == pytest.approx(2.0, abs=4e-3)


def test_contradictory_system():
    sys = compile_system([Relation(a1 - 1, ">"), Relation(a1, "<")], {"a1": (-2, 2), "a2": (-2, 2)})
    r = branch_and_prune(sys, 1e-2)
    assert r.inside == [] and r.boundary == []
    assert r.stats["outside_volume"] == pytest.approx(16.0)
    assert sample_oracle(sys, 1000, 0).fraction == 0.0


def test_reference_points_located():
    r = branch_and_prune(vehicle2(), 1e-2)
    assert r.locate((0.05, 0.5)) == "inside"
    assert r.locate((0.05, -0.2)) == "outside"


def test_budget_flags_partial():
    r = branch_and_prune(vehicle2(), 1e-3, budget=10)
    assert r.stats["partial"] and r.stats["boxes_examined"] == 10 and r.pending


def test_requires_finite_box_and_width():
    sys = compile_system([Relation(a1, ">")], {"a1": (0, float("inf"))})
    with pytest.raises(ValueError):
        branch_and_prune(sys, 0.1)
    with pytest.raises(ValueError):
        branch_and_prune(vehicle2(), 0.0)


def test_inside_boxes_are_sound_and_disjoint():
    sys = vehicle2()
    r = branch_and_prune(sys, 2e-2)
    rng = np.random.default_rng(1)
    for cell in r.inside:
        b = np.array(cell.bounds)
        for u in rng.random((10, 2)):
            p = b[:, 0] + u * (b[:, 1] - b[:, 0])
            rep = membership(sys, p)
            # strict relations are certified in closed form; the interior is open-feasible
            assert rep.feasible
    cells = r.inside + r.outside + r.boundary
    lo = np.array([[c.bounds[0][0], c.bounds[1][0]] for c in cells])
    hi = np.array([[c.bounds[0][1], c.bounds[1][1]] for c in cells])
    for i in range(len(cells)):
        overlap = np.all(np.minimum(hi[i], hi[i + 1:]) > np.maximum(lo[i], lo[i + 1:]), axis=1)
        assert not overlap.any()
    total = sum(c.volume for c in cells)
    assert total == pytest.approx(r.stats["total_volume"])


def test_outside_boxes_certified():
    sys = vehicle2()
    r = branch_and_prune(sys, 2e-2)
    rels = {rel.name: rel for rel in sys.relations}
    for cell in r.outside:
        rel = rels[cell.violated]
        lo, hi = rel.poly.interval_eval(dict(zip(sys.parameters, cell.bounds)))
        assert (lo >= 0) if rel.op == "<" else (hi <= 0)


def test_monotone_refinement():
    sys = vehicle2()
    vols = [branch_and_prune(sys, w).inside_volume() for w in (8e-2, 4e-2, 2e-2, 1e-2)]
    assert all(b >= a for a, b in zip(vols, vols[1:]))


def test_oracle_consistency():
    sys = vehicle2()
    r = branch_and_prune(sys, 1e-2)
    o = sample_oracle(sys, 100_000, seed=0)
    assert r.stats["inside_fraction"] <= o.fraction + 3 * o.stderr
    assert o.fraction <= r.stats["outer_fraction"] + 3 * o.stderr


def test_determinism_and_exports():
    a = branch_and_prune(vehicle2(), 5e-2)
    b = branch_and_prune(vehicle2(), 5e-2)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()
    data = json.loads(a.to_json())
    assert {box["status"] for box in data["boxes"]} <= {"inside", "outside", "boundary", "pending"}
    header = a.to_csv().splitlines()[0]
    assert header == "status,depth,closure,violated,a1_lo,a1_hi,a2_lo,a2_hi"


def test_membership_reports():
    sys = vehicle3()
    bad = membership(sys, (2, F(23, 10), F(13, 10)))
    assert not bad.feasible
    values = {r["name"]: r["value"] for r in bad.violated()}
    assert values["u[8]>lo"] == F(-1, 5)
    # lowering a3 to 1.2 is not enough: U7 = 5/2 - 3 a2 / 2 is still negative
    alt = membership(sys, (2, F(23, 10), F(12, 10)))
    assert not alt.feasible
    assert {r["name"]: r["value"] for r in alt.violated()}["u[7]>lo"] == F(-19, 20)
    good = membership(sys, (2, F(3, 2), F(6, 5)))
    assert good.feasible
    assert good.rows[-2]["value"] == F(1, 5)
    out = membership(sys, (3, 0, 0))
    assert not out.feasible and out.box_violations == ["a1"]
    with pytest.raises(ValueError):
        membership(sys, (1, 2))


def test_pss_origin_feasible():
    rep = membership(pss(), (0, 0))
    assert rep.feasible
    assert [r["value"] for r in rep.rows] == [1, 2, 10, 1]


def test_fixture_agreement():
    r = cad_fixture_check(load_fixture("vehicle_deg3"), vehicle2(), 10_000, seed=0)
    assert r.ratio == 1.0 and r.compared > 9_900
    r = cad_fixture_check(load_fixture("pss_example"), pss(), 10_000, seed=0)
    assert r.ratio >= 0.999


def test_degenerate_fixture():
    fx = Fixture.from_dict({"variables": ["a1"], "box": [[0, 1]], "any": [["0 <= a1 <= 1"]]})
    sys = compile_system([], {"a1": (0, 1)})
    assert cad_fixture_check(fx, sys, 1000).ratio == 1.0


def test_fixture_syntax_errors():
    with pytest.raises(ValueError):
        Fixture.from_dict({"variables": ["a1"], "box": [[0, 1]], "any": [["a1 + 1"]]})
    fx = Fixture.from_dict({"variables": ["a1"], "box": [[0, 1]], "any": [["__import__('os') < 1"]]})
    with pytest.raises(ValueError):
        fx.contains([0.5])
