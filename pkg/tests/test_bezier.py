from fractions import Fraction as F
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatbez.bezier import (
    BezierCurve,
    bernstein,
    bernstein_sum,
    binomial,
    degree_elevate,
    derivative,
    elevate_to,
    eval_curve,
    minmax_bounds,
    mul,
    second_differences,
    symbolic_curve,
)
from flatbez.sympoly import PolyExpr

TAUS = np.linspace(0.0, 1.0, 101)

point = st.floats(-10, 10, allow_nan=False)


@st.composite
def curves(draw, min_degree=0, max_degree=10):
    n = draw(st.integers(min_degree, max_degree))
    pts = draw(st.lists(point, min_size=n + 1, max_size=n + 1))
    T = draw(st.sampled_from([1.0, 0.5, 2.0, 10.0]))
    return BezierCurve(pts, T)


def test_binomial_matches_math_comb():
    for n in range(65):
        for k in range(n + 1):
            assert binomial(n, k) == comb(n, k)
    with pytest.raises(ValueError):
        binomial(65, 2)


def test_degree_cap():
    with pytest.raises(ValueError):
        BezierCurve([0.0] * 66)


def test_exact_evaluation():
    c = BezierCurve([F(0), F(1), F(0)])
    assert c(F(1, 2)) == F(1, 2)
    assert eval_curve(c, 0) == 0


def test_tau_out_of_range():
    with pytest.raises(ValueError):
        BezierCurve([0.0, 1.0])(1.5)


def test_symbolic_derivative_divides_by_horizon_per_order():
    x = symbolic_curve([0, 0, 0, "a1", "a2", "a3", 2, 2, 2], horizon=10)
    xdd = derivative(x, 2)
    a1, a2, a3 = (PolyExpr.variable(n) for n in ("a1", "a2", "a3"))
    expected = [0, F(14, 25) * a1, F(14, 25) * a2 - F(28, 25) * a1,
                F(14, 25) * a1 - F(28, 25) * a2 + F(14, 25) * a3,
                F(14, 25) * a2 - F(28, 25) * a3 + F(28, 25), F(14, 25) * a3 - F(28, 25), 0]
    assert [PolyExpr.constant(0) + c for c in xdd.control_points] == \
        [PolyExpr.constant(0) + e for e in expected]


def test_velocity_polygon_of_sigmoid_shape():
    # {a, a, a, (a+b)/2, b, b, b} gives velocity polygon {0, 0, v, v, 0, 0}
    a, b, T = F(0), F(2), F(10)
    x = BezierCurve([a, a, a, (a + b) / 2, b, b, b], T)
    v = derivative(x, 1).control_points
    half = 6 / T * (b - a) / 2
    assert list(v) == [0, 0, half, half, 0, 0]


def test_horizon_mismatch_rejected():
    with pytest.raises(ValueError):
        BezierCurve([0.0, 1.0], 1.0) + BezierCurve([0.0, 1.0], 2.0)


def test_second_differences_and_minmax():
    c = BezierCurve([0.0, 3.0, 1.0, 2.0])
    assert second_differences(c) == [-5.0, 3.0]
    assert minmax_bounds(c) == (0.0, 3.0)


@settings(max_examples=100, deadline=None)
@given(curves(), st.floats(0, 1))
def test_de_casteljau_matches_bernstein_sum(c, tau):
    assert eval_curve(c, tau) == pytest.approx(bernstein_sum(c, tau), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(curves(max_degree=12), st.floats(0, 1))
def test_partition_of_unity(c, tau):
    N = c.degree
    assert sum(bernstein(j, N, tau) for j in range(N + 1)) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(curves(), st.integers(1, 6))
def test_elevation_preserves_the_function(c, r):
    e = degree_elevate(c, r)
    assert e.degree == c.degree + r
    assert np.allclose(e(TAUS), c(TAUS), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(curves(max_degree=8), st.data())
def test_operations_commute_with_evaluation(f, data):
    g = BezierCurve(data.draw(st.lists(point, min_size=1, max_size=8)), f.horizon)
    assert np.allclose((f + g)(TAUS), f(TAUS) + g(TAUS), atol=1e-9)
    assert np.allclose((f - g)(TAUS), f(TAUS) - g(TAUS), atol=1e-9)
    assert np.allclose(mul(f, g)(TAUS), f(TAUS) * g(TAUS), atol=1e-7)


@settings(max_examples=100, deadline=None)
@given(curves(min_degree=1, max_degree=10), st.floats(0.05, 0.95))
def test_derivative_against_finite_difference(c, tau):
    T = float(c.horizon)
    h = 1e-6
    fd = (c(tau + h) - c(tau - h)) / (2 * h * T)
    scale = max(1.0, max(abs(p) for p in c.control_points)) * c.degree**2 / T
    assert derivative(c, 1)(tau) == pytest.approx(fd, abs=1e-6 * scale)


@settings(max_examples=100, deadline=None)
@given(curves(min_degree=2, max_degree=10))
def test_second_derivative_is_iterated_first(c):
    assert np.allclose(derivative(c, 2)(TAUS), derivative(derivative(c, 1), 1)(TAUS), atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(curves())
def test_convex_hull(c):
    lo, hi = minmax_bounds(c)
    v = c(TAUS)
    assert np.all(v >= lo - 1e-9) and np.all(v <= hi + 1e-9)


def test_elevate_to_rejects_lowering():
    with pytest.raises(ValueError):
        elevate_to(BezierCurve([0.0, 1.0, 2.0]), 1)
