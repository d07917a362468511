import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flatbez.bezier import BezierCurve, derivative, symbolic_curve
from flatbez.models import (
    QuadParams,
    QuadrotorReference,
    Sigmoid,
    SingularityError,
    VehicleParams,
    gamma_limit,
    quad_angle_refs,
    quad_hover_torque_sym,
    quad_thrust_curve,
    quad_tilt_bound,
    quad_torque_refs,
    sigmoid_bounds,
    sigmoid_constants,
    sigmoid_eval,
    vehicle_closed_loop_input,
    vehicle_input_curve,
)
from flatbez.sympoly import PolyExpr, variables

a1, a2, a3 = variables("a1", "a2", "a3")
UNIT = VehicleParams(M=1.0, r=1.0, Ca=1.0, T=1.0)


def reference_system():
    return [
        4 * a1,
        a1 + F(3, 2) * a2,
        F(4, 7) * a1**2 - F(5, 7) * a1 + F(12, 7) * a2 + F(3, 7) * a3,
        F(15, 14) * a2 - F(10, 7) * a1 + a3 + F(6, 7) * a1 * a2 + F(1, 14),
        F(18, 35) * a2**2 - F(10, 7) * a1 + F(10, 7) * a3 + F(16, 35) * a1 * a3 + F(2, 7),
        F(10, 7) * a3 - F(15, 14) * a2 - F(6, 7) * a1 + F(6, 7) * a2 * a3 + F(5, 7),
        F(4, 7) * a3**2 + F(5, 7) * a3 - F(3, 7) * a1 - F(9, 7) * a2 + F(10, 7),
        F(5, 2) - F(3, 2) * a2,
        5 - 4 * a3,
    ]


# -- vehicle -----------------------------------------------------------------


def test_vehicle_input_reproduces_reference_system():
    u = vehicle_input_curve(symbolic_curve([0, "a1", "a2", "a3", 1]), VehicleParams())
    assert u.degree == 8
    assert list(u.control_points) == reference_system()


def test_vehicle_input_zero_speed():
    u = vehicle_input_curve(BezierCurve([0.0] * 5))
    assert all(c == 0 for c in u.control_points)


def test_vehicle_input_numeric_point():
    u = vehicle_input_curve(BezierCurve([F(0), F(2), F(23, 10), F(12, 10), F(1)]))
    assert u.control_points[0] == 8
    assert u.control_points[8] == F(1, 5)


def test_vehicle_input_needs_degree_two():
    with pytest.raises(ValueError):
        vehicle_input_curve(BezierCurve([0.0, 1.0]))


def test_vehicle_params_positive():
    with pytest.raises(ValueError):
        VehicleParams(M=0.0)


def test_closed_loop_input_examples():
    p = VehicleParams()
    assert vehicle_closed_loop_input(1.3, 1.3, 0.0, 9.0, p) == pytest.approx(p.r * p.Ca * 1.3**2)
    ff = vehicle_closed_loop_input(1.0, 1.0, 0.0, 9.0, p)
    assert vehicle_closed_loop_input(1.1, 1.0, 0.0, 9.0, p) - p.r * p.Ca * 1.1**2 \
        == pytest.approx(ff - p.r * p.Ca - p.M * p.r * 9.0 * 0.1)
    assert vehicle_closed_loop_input(1.0, 1.1, 0.0, 9.0, UNIT) == pytest.approx(0.9 + 1.0)


rat = st.fractions(min_value=-3, max_value=3, max_denominator=9)


@settings(max_examples=50, deadline=None)
@given(st.lists(rat, min_size=3, max_size=7), st.sampled_from([F(1), F(1, 2), F(5)]))
def test_vehicle_flatness_residual_exact(pts, T):
    p = VehicleParams(M=1.5, r=0.3, Ca=2.0, T=float(T))
    v = BezierCurve(pts, T)
    u = vehicle_input_curve(v, p)
    dv = derivative(v, 1)
    M, r, Ca = F(3, 2), F(3, 10), F(2)
    for k in range(11):
        tau = F(k, 10)
        assert M * dv(tau) - u(tau) / r + Ca * v(tau) ** 2 == 0


# -- sigmoid -----------------------------------------------------------------


def test_sigmoid_examples():
    s = Sigmoid(Hi=0.0, Hf=2.0, gamma=2.0, tm=5.0)
    assert sigmoid_eval(s, 5.0, 0) == pytest.approx(1.0)
    assert sigmoid_eval(s, 5.0, 2) == 0.0
    assert sigmoid_eval(s, 5.0, 1) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        sigmoid_eval(s, 5.0, 5)
    with pytest.raises(ValueError):
        Sigmoid(Hi=1.0, Hf=1.0)


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_sigmoid_derivatives_consistent(order):
    s = Sigmoid(Hi=0.5, Hf=2.0, gamma=1.7, tm=5.0)
    t = np.linspace(2.0, 8.0, 61)
    h = 1e-5
    fd = (sigmoid_eval(s, t + h, order) - sigmoid_eval(s, t - h, order)) / (2 * h)
    assert np.allclose(fd, sigmoid_eval(s, t, order + 1), atol=1e-5)


def test_sigmoid_bound_constants():
    k = sigmoid_constants()
    assert k["b1"] == 1.0
    assert k["b2"] == pytest.approx(4 * math.sqrt(3) / 9, abs=1e-12)
    assert (k["b3_lo"], k["b3_hi"]) == (pytest.approx(2 / 3), pytest.approx(2.0))
    assert abs(k["b4"] - 4.0849) < 2e-3


def test_sigmoid_bound_examples():
    lo, hi = sigmoid_bounds(Sigmoid(gamma=2.0), 2)
    assert (lo, hi) == (pytest.approx(-3.0792, abs=1e-4), pytest.approx(3.0792, abs=1e-4))
    # z''' = -2 gamma^3 C (1-R^2)(1-3R^2) peaks at +2/3 and dips to -2
    assert sigmoid_bounds(Sigmoid(Hi=0, Hf=2, gamma=1.0), 3) == (pytest.approx(-2.0), pytest.approx(2 / 3))
    assert sigmoid_bounds(Sigmoid(Hi=0, Hf=2), 0) == (0, 2)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.1, 3.0))
def test_sigmoid_bounds_tight(gamma, C):
    s = Sigmoid(Hi=1.0, Hf=1.0 + 2 * C, gamma=gamma, tm=0.0)
    t = np.linspace(-12 / gamma, 12 / gamma, 400_001)
    for order in range(5):
        vals = sigmoid_eval(s, t, order)
        lo, hi = sigmoid_bounds(s, order)
        scale = gamma**order * C
        assert vals.min() >= lo - 1e-9 * scale and vals.max() <= hi + 1e-9 * scale
        if order >= 2:
            assert abs(vals.min() - lo) <= 1e-3 * scale and abs(vals.max() - hi) <= 1e-3 * scale


# -- quadrotor ---------------------------------------------------------------


def test_quad_params_default_thrust_limit():
    q = QuadParams()
    assert q.U1max == pytest.approx(4 * 0.53 * 9.8)
    with pytest.raises(ValueError):
        QuadParams(m=-1.0)


def test_thrust_curve_gamma_two():
    s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
    series = quad_thrust_curve(s, QuadParams(), np.linspace(0, 10, 2001))
    assert series["u1"].max() <= 0.53 * (9.8 + 3.0792) + 1e-4
    assert series["u1"].max() == pytest.approx(6.826, abs=1e-3)
    assert not series.violated


def test_thrust_curve_gamma_seven():
    s = Sigmoid(Hi=0, Hf=2, gamma=7, tm=5)
    series = quad_thrust_curve(s, QuadParams(), np.linspace(0, 10, 20001))
    assert series.bounds["u1"][1] == pytest.approx(25.19, abs=5e-3)
    assert series.violated


def test_no_flags_below_gamma_limit():
    q = QuadParams()
    for C in (0.5, 1.0, 2.0):
        g_lim = gamma_limit(Sigmoid(Hi=0, Hf=2 * C), q)
        for frac in (0.3, 0.7, 0.99):
            s = Sigmoid(Hi=0, Hf=2 * C, gamma=frac * g_lim, tm=5)
            assert not quad_thrust_curve(s, q, np.linspace(0, 10, 4001)).violated


def test_tilt_bound_values():
    s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
    lo, hi = quad_tilt_bound(s, QuadParams())
    assert lo == pytest.approx(-3.2198, abs=1e-4) and hi == pytest.approx(1.6802, abs=1e-4)
    assert abs(lo - -3.222) < 3e-3 and abs(hi - 1.682) < 3e-3
    assert quad_tilt_bound(s, QuadParams(theta_max=0.0)) == (0.0, 0.0)
    lo, hi = quad_tilt_bound(Sigmoid(gamma=1e-6), QuadParams())
    assert (lo, hi) == (pytest.approx(-2.45), pytest.approx(2.45))


def test_tilt_bound_singular():
    with pytest.raises(SingularityError):
        quad_tilt_bound(Sigmoid(Hi=0, Hf=2, gamma=4), QuadParams())


def test_standard_lower_tilt_window_is_not_pointwise():
    # constant x'' = -3 lies inside the standard window, but at t = tm the
    # vertical acceleration is zero and theta = -3 / g exceeds 0.25
    s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
    lo, hi = quad_tilt_bound(s)
    x = BezierCurve([0.0, 0.0, -150.0], 10.0)
    assert derivative(x, 2).control_points == (-3.0,)
    assert lo < -3.0 < hi
    theta = quad_angle_refs(x, BezierCurve([0.0, 0.0, 0.0], 10.0), s, [5.0])["theta"]
    assert abs(theta[0]) > 0.25


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=3, max_size=3))
def test_conservative_tilt_window_guarantees_angle(alpha):
    s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
    q = QuadParams()
    lo, hi = quad_tilt_bound(s, q, conservative=True)
    x = BezierCurve([0, 0, 0, *alpha, 2, 2, 2], 10.0)
    t = np.linspace(0, 10, 2001)
    xdd = derivative(x, 2).at_time(t)
    theta = quad_angle_refs(x, BezierCurve([0.0] * 9, 10.0), s, t)["theta"]
    inside = (xdd >= lo) & (xdd <= hi)
    if inside.all():
        assert np.abs(theta).max() <= q.theta_max + 1e-12


def test_angle_refs():
    s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
    t = np.linspace(0, 10, 1001)
    flat = BezierCurve([1.0] * 9, 10.0)
    assert np.all(quad_angle_refs(flat, flat, s, t)["theta"] == 0)
    x = BezierCurve([0, 0, 0, 8, 12.5, 9, 2, 2, 2], 10.0)
    y = BezierCurve([0, 0, 0, 4, 2.5, 2, 2, 2, 2], 10.0)
    r = quad_angle_refs(x, y, s, t)
    assert np.abs(r["theta"]).max() <= 0.25 and not r.violated
    hover = Sigmoid(Hi=0, Hf=2, gamma=2, tm=-100)
    r = quad_angle_refs(x, y, hover, t)
    assert np.allclose(r["theta"], derivative(x, 2).at_time(t) / 9.8, atol=1e-15)


def test_torque_refs_hover_and_linear():
    hover = Sigmoid(Hi=0, Hf=2, gamma=2, tm=-100)
    q = QuadParams()
    t = np.linspace(0, 10, 501)
    lin = BezierCurve([0.0, 0.5, 1.0, 1.5, 2.0], 10.0)
    r = quad_torque_refs(lin, lin, None, hover, q, t)
    assert np.allclose(r["u2"], 0, atol=1e-15) and np.allclose(r["u3"], 0, atol=1e-15)
    x = BezierCurve([0, 0, 0, 8, 12.5, 9, 2, 2, 2], 10.0)
    y = BezierCurve([0, 0, 0, 4, 2.5, 2, 2, 2, 2], 10.0)
    psi = BezierCurve([0.0, 0.0, 0.3, 1.0, 1.0], 10.0)
    r = quad_torque_refs(x, y, psi, hover, q, t)
    assert np.allclose(r["u2"], q.Ix / q.g * derivative(x, 4).at_time(t), rtol=1e-12, atol=1e-15)
    assert np.allclose(r["u3"], -q.Iy / q.g * derivative(y, 4).at_time(t), rtol=1e-12, atol=1e-15)
    assert np.allclose(r["u4"], q.Iz * derivative(psi, 2).at_time(t))
    with pytest.raises(ValueError):
        quad_torque_refs(BezierCurve([0.0, 1.0, 2.0]), y, None, hover, q, t)


def test_torque_matches_differentiated_pitch():
    s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
    q = QuadParams()
    x = BezierCurve([0, 0, 0, 8, 12.5, 9, 2, 2, 2], 10.0)
    y = BezierCurve([0, 0, 0, 4, 2.5, 2, 2, 2, 2], 10.0)
    t = np.linspace(1.0, 9.0, 81)
    h = 1e-3
    theta = lambda tt: quad_angle_refs(x, y, s, tt)["theta"]
    fd2 = (theta(t + h) - 2 * theta(t) + theta(t - h)) / h**2
    u2 = quad_torque_refs(x, y, None, s, q, t)["u2"]
    assert np.allclose(u2, q.Ix * fd2, atol=1e-7)


def test_reference_state_matches_model():
    s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
    q = QuadParams()
    ref = QuadrotorReference(BezierCurve([0, 0, 0, 8, 12.5, 9, 2, 2, 2], 10.0),
                             BezierCurve([0, 0, 0, 4, 2.5, 2, 2, 2, 2], 10.0), s, None, q)
    for t in (1.0, 4.0, 5.3, 7.7):
        st_ = ref.state(t)
        u = ref.inputs(t)
        assert q.m * (sigmoid_eval(s, t, 2)) == pytest.approx(u["u1"] - q.m * q.g)
        assert st_[6] * u["u1"] / q.m == pytest.approx(derivative(BezierCurve(
            [0, 0, 0, 8, 12.5, 9, 2, 2, 2], 10.0), 2).at_time(t))


def test_singular_reference_rejected():
    s = Sigmoid(Hi=0, Hf=2, gamma=7, tm=5)
    x = BezierCurve([0, 0, 0, 8, 12.5, 9, 2, 2, 2], 10.0)
    with pytest.raises(SingularityError):
        quad_angle_refs(x, x, s, [1.0])
    # a purely vertical flight has no tilt, so it stays simulable
    still = BezierCurve([0.0] * 5, 10.0)
    ref = QuadrotorReference(still, still, s)
    assert ref.inputs(5.0)["u2"] == 0


def test_hover_torque_symbolic():
    q = QuadParams()
    x = symbolic_curve([0, "a1", "a2", "a3", 0], 1)
    u2 = quad_hover_torque_sym(x, q)
    gain = F(622, 100000) / F(98, 10)
    assert u2.degree == 0
    assert u2.control_points[0] == 24 * gain * (-4 * a1 + 6 * a2 - 4 * a3)
    same = quad_hover_torque_sym(symbolic_curve(["a1"] * 5, 1), q)
    assert same.control_points[0] == 0
    big = quad_hover_torque_sym(symbolic_curve([0, 0, 0, "a1", "a2", "a3", 2, 2, 2], 10), q)
    assert all(isinstance(c, PolyExpr) and c.degree <= 1 for c in big.control_points)
    assert quad_hover_torque_sym(x, q, axis="y").control_points[0] == -u2.control_points[0]
    with pytest.raises(ValueError):
        quad_hover_torque_sym(symbolic_curve([0, "a1", 0], 1), q)


def test_sigmoid_polygon_acceleration_peak():
    # polygon {a, a, a, (a+b)/2, b, b, b}: the exact peak is (10/sqrt(3)) b / T^2,
    # slightly above the rounded 144/25 quoted for this shape
    for b, T in ((1.0, 1.0), (2.0, 10.0)):
        x = BezierCurve([0, 0, 0, b / 2, b, b, b], T)
        v = derivative(x, 2)(np.linspace(0, 1, 200_001))
        peak = 10 / math.sqrt(3) * b / T**2
        assert v.max() == pytest.approx(peak, rel=1e-9)
        assert -v.min() == pytest.approx(peak, rel=1e-9)
        assert peak > 144 / 25 * b / T**2
