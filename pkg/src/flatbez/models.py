"""Built-in differentially flat models.

Two models are provided:

* vehicle longitudinal dynamics ``M dV/dt = u / r - Ca V^2`` with flat
  output ``V``;
* a simplified quadrotor with flat output ``(x, y, z, psi)`` where the
  altitude reference is a tanh sigmoid and the horizontal references are
  Bezier curves.

The flatness maps work on Bezier curves (symbolic or numeric) where the
result is again a Bezier curve, and on sampled time grids where a quotient
appears (tilt angles, torques).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.optimize import minimize_scalar

from .bezier import BezierCurve, add, derivative, elevate_to, mul
from .sympoly import PolyExpr, as_fraction

__all__ = [
    "QuadParams",
    "QuadrotorReference",
    "SampledSeries",
    "Sigmoid",
    "SingularityError",
    "VehicleParams",
    "gamma_limit",
    "quad_angle_refs",
    "quad_hover_torque_sym",
    "quad_thrust_curve",
    "quad_tilt_bound",
    "quad_torque_refs",
    "sigmoid_bounds",
    "sigmoid_constants",
    "sigmoid_eval",
    "vehicle_closed_loop_input",
    "vehicle_input_curve",
]


class SingularityError(ValueError):
    """The thrust ``m (z'' + g)`` can reach zero, so the angle map is undefined."""


# ---------------------------------------------------------------------------
# Vehicle


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle constants; defaults satisfy ``r M / T = 1`` and ``r Ca = 1``."""

    M: float = 2.5
    r: float = 0.4
    Ca: float = 2.5
    T: float = 1.0

    def __post_init__(self):
        for name in ("M", "r", "Ca", "T"):
            if not getattr(self, name) > 0:
                raise ValueError(f"VehicleParams.{name} must be positive")


def _ring_scalar(value, exact: bool):
    return as_fraction(value) if exact else float(value)


def _is_exact_curve(curve: BezierCurve) -> bool:
    return all(isinstance(c, (PolyExpr, Fraction, int)) for c in curve.control_points)


def vehicle_input_curve(vxr: BezierCurve, params: VehicleParams = VehicleParams()) -> BezierCurve:
    """Feedforward torque ``u_r = r (M dVxr/dt + Ca Vxr^2)`` as a Bezier curve.

    Works in whatever ring `vxr` lives in: with symbolic control points the
    result holds exact polynomials in them.  The time scale is the horizon
    of `vxr`.
    """
    N = vxr.degree
    if N < 2:
        raise ValueError(f"speed reference needs degree >= 2 for a continuous input, got {N}")
    exact = _is_exact_curve(vxr)
    rM = _ring_scalar(params.r, exact) * _ring_scalar(params.M, exact)
    rCa = _ring_scalar(params.r, exact) * _ring_scalar(params.Ca, exact)
    accel = elevate_to(derivative(vxr, 1), 2 * N)
    return add(accel * rM, mul(vxr, vxr) * rCa)


def vehicle_closed_loop_input(vx, vxr, vxr_dot, lam, params: VehicleParams = VehicleParams()):
    """Tracking law ``u = M r (dVxr/dt - lam (Vx - Vxr)) + r Ca Vx^2``."""
    return params.M * params.r * (vxr_dot - lam * (vx - vxr)) + params.r * params.Ca * vx**2


# ---------------------------------------------------------------------------
# Sigmoid altitude reference


@dataclass(frozen=True)
class Sigmoid:
    """``z(t) = C (1 + tanh(gamma (t - tm))) + Hi`` with ``C = (Hf - Hi) / 2``."""

    Hi: float = 0.0
    Hf: float = 2.0
    gamma: float = 2.0
    tm: float = 5.0

    def __post_init__(self):
        if self.Hf == self.Hi:
            raise ValueError("Hf must differ from Hi")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    @property
    def C(self) -> float:
        return (self.Hf - self.Hi) / 2.0


def sigmoid_eval(s: Sigmoid, t, order: int = 0):
    """Closed-form derivative of the sigmoid (orders 0 to 4).

    Uses ``dR/dt = gamma (1 - R^2)``.  The third derivative is
    ``-2 gamma^3 C (1 - R^2)(1 - 3 R^2)``, so its range is
    ``[-2, 2/3] gamma^3 C``: the constants 2/3 and 2 bound its magnitude on
    the positive and negative side respectively.
    """
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"order must be in 0..4, got {order}")
    R = np.tanh(s.gamma * (np.asarray(t, dtype=float) - s.tm))
    g, C = s.gamma, s.C
    if order == 0:
        out = C * (1 + R) + s.Hi
    elif order == 1:
        out = g * C * (1 - R**2)
    elif order == 2:
        out = -2 * g**2 * C * R * (1 - R**2)
    elif order == 3:
        out = -2 * g**3 * C * (1 - R**2) * (1 - 3 * R**2)
    else:
        out = 8 * g**4 * C * R * (3 * R**4 - 5 * R**2 + 2)
    return float(out) if np.ndim(out) == 0 else out


@lru_cache(maxsize=None)
def sigmoid_constants() -> dict:
    """Bounds of the normalized derivatives ``z^(k) / (gamma^k C)``.

    ``b1``, ``b2`` and the two ``b3`` values are closed forms; ``b4`` comes
    from a bounded 1-D maximization over ``R = tanh(.)``.
    """
    res = minimize_scalar(
        lambda R: -8 * abs(R * (3 * R**4 - 5 * R**2 + 2)),
        bounds=(0.0, 1.0),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return {
        "b1": 1.0,
        "b2": 4 * math.sqrt(3) / 9,
        "b3_lo": 2.0 / 3.0,  # magnitude of the positive peak
        "b3_hi": 2.0,  # magnitude of the negative peak
        "b4": float(-res.fun),
    }


def sigmoid_bounds(s: Sigmoid, order: int) -> tuple[float, float]:
    """Tight (lower, upper) bounds of a sigmoid derivative over all t."""
    k = sigmoid_constants()
    if order == 0:
        return min(s.Hi, s.Hf), max(s.Hi, s.Hf)
    unit = {1: (0.0, k["b1"]), 2: (-k["b2"], k["b2"]), 3: (-k["b3_hi"], k["b3_lo"]), 4: (-k["b4"], k["b4"])}
    if order not in unit:
        raise ValueError(f"order must be in 0..4, got {order}")
    scale = s.gamma**order * s.C
    a, b = unit[order][0] * scale, unit[order][1] * scale
    return (min(a, b), max(a, b))


# ---------------------------------------------------------------------------
# Quadrotor


@dataclass(frozen=True)
class QuadParams:
    m: float = 0.53
    g: float = 9.8
    Ix: float = 6.22e-3
    Iy: float = 6.22e-3
    Iz: float = 1.12e-2
    U1max: float | None = None
    theta_max: float = 0.25
    phi_max: float = 0.25
    U2max: float = 0.3
    U3max: float = 0.3
    U4max: float = 0.5

    def __post_init__(self):
        for name in ("m", "g", "Ix", "Iy", "Iz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"QuadParams.{name} must be positive")
        if self.U1max is None:
            object.__setattr__(self, "U1max", 4 * self.m * self.g)


@dataclass
class SampledSeries:
    """Time-sampled signals with per-signal limit flags."""

    t: np.ndarray
    values: dict
    bounds: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[name]

    @property
    def violated(self) -> bool:
        return any(np.any(f) for f in self.flags.values())


def gamma_limit(s: Sigmoid, q: QuadParams = QuadParams()) -> float:
    """Largest ``gamma`` keeping ``0 < u1 < U1max`` for the sigmoid's C."""
    b2 = sigmoid_constants()["b2"]
    lim = min((q.U1max / q.m - q.g) / b2, q.g / b2)
    return math.sqrt(lim / abs(s.C))


def quad_thrust_curve(s: Sigmoid, q: QuadParams, tgrid) -> SampledSeries:
    """Thrust reference ``u1 = m (z'' + g)`` sampled on `tgrid`.

    Samples outside ``0 < u1 <= U1max`` are flagged; the attached bounds are
    the worst case ``m (g -/+ b2 gamma^2 |C|)`` over all t.
    """
    t = np.asarray(tgrid, dtype=float)
    u1 = q.m * (sigmoid_eval(s, t, 2) + q.g)
    zlo, zhi = sigmoid_bounds(s, 2)
    flags = (u1 <= 0) | (u1 > q.U1max)
    return SampledSeries(
        t, {"u1": u1}, {"u1": (q.m * (zlo + q.g), q.m * (zhi + q.g))}, {"u1": flags}
    )


def quad_tilt_bound(s: Sigmoid, q: QuadParams = QuadParams(), conservative: bool = False):
    """Acceleration window ``(Xmin, Xmax)`` for the pitch limit.

    The default is the standard construction
    ``Xmax = (g - b2 gamma^2 C) theta_max`` and ``Xmin = -(g + b2 gamma^2 C) theta_max``.
    `Xmin` pairs the most negative acceleration with the largest thrust, so
    it only bounds the angle when the two extremes coincide in time;
    ``conservative=True`` returns the pointwise-safe window ``(-Xmax, Xmax)``.
    """
    b2g2c = sigmoid_constants()["b2"] * s.gamma**2 * abs(s.C)
    if b2g2c >= q.g:
        raise SingularityError(
            f"b2 gamma^2 C = {b2g2c:.4g} >= g = {q.g}: thrust can vanish"
        )
    xmax = (q.g - b2g2c) * q.theta_max
    if conservative:
        return (-xmax, xmax)
    return (-(q.g + b2g2c) * q.theta_max, xmax)


def _check_thrust(s: Sigmoid, q: QuadParams):
    zlo, _ = sigmoid_bounds(s, 2)
    if zlo + q.g <= 0:
        raise SingularityError(f"z'' + g can reach {zlo + q.g:.4g} <= 0")


class _CurveDerivs:
    """Float derivative curves of a Bezier reference, evaluated at physical time."""

    def __init__(self, curve: BezierCurve | None, max_order: int):
        self.curves = []
        if curve is None:
            curve = BezierCurve([0.0])
        self.horizon = float(curve.horizon)
        curve = curve.to_float()
        for k in range(max_order + 1):
            self.curves.append(derivative(curve, k) if k <= curve.degree else None)

    def __call__(self, t, k):
        c = self.curves[k]
        tau = np.clip(np.asarray(t, dtype=float) / self.horizon, 0.0, 1.0)
        if c is None:
            return np.zeros_like(tau) if np.ndim(tau) else 0.0
        return c(tau)


class QuadrotorReference:
    """Flat reference ``(x_r, y_r, z_r, psi_r)`` and its flatness map.

    `x_r`, `y_r` and `psi_r` are Bezier curves on the same horizon, `z`
    is a `Sigmoid` in physical time.  ``psi_r=None`` means zero yaw.
    """

    def __init__(self, x_r: BezierCurve, y_r: BezierCurve, z: Sigmoid,
                 psi_r: BezierCurve | None = None, params: QuadParams = QuadParams()):
        self.x = _CurveDerivs(x_r, 4)
        self.y = _CurveDerivs(y_r, 4)
        self.psi = _CurveDerivs(psi_r, 2)
        self.z = z
        self.params = params
        self.horizon = float(x_r.horizon)
        # with no horizontal acceleration the tilt angles vanish identically,
        # so a thrust that crosses zero only breaks the thrust limit
        self.vertical_only = all(
            c is None or not any(c.control_points)
            for c in (self.x.curves[2], self.y.curves[2])
        )
        if not self.vertical_only:
            _check_thrust(z, params)

    def flat_flag(self, t) -> dict:
        """Derivatives 0..4 of x, y, z and 0..2 of psi."""
        return {
            "x": [self.x(t, k) for k in range(5)],
            "y": [self.y(t, k) for k in range(5)],
            "z": [sigmoid_eval(self.z, t, k) for k in range(5)],
            "psi": [self.psi(t, k) for k in range(3)],
        }

    def angles(self, t, flag=None):
        """Pitch and roll references and their first two derivatives."""
        f = flag or self.flat_flag(t)
        if self.vertical_only:
            zero = np.zeros_like(np.asarray(f["z"][2], dtype=float))
            return {"theta": (zero, zero, zero), "phi": (zero, zero, zero)}
        g = self.params.g
        x, y, z = f["x"], f["y"], f["z"]
        W = z[2] + g
        W1, W2 = z[3], z[4]
        out = {}
        for name, num, sign in (("theta", x, 1.0), ("phi", y, -1.0)):
            N0, N1, N2 = num[2], num[3], num[4]
            a0 = N0 / W
            a1 = (N1 * W - N0 * W1) / W**2
            # second derivative of N/W by the quotient rule
            a2 = N2 / W - 2 * N1 * W1 / W**2 - N0 * W2 / W**2 + 2 * N0 * W1**2 / W**3
            out[name] = (sign * a0, sign * a1, sign * a2)
        return out

    def inputs(self, t) -> dict:
        f = self.flat_flag(t)
        q = self.params
        ang = self.angles(t, f)
        return {
            "u1": q.m * (f["z"][2] + q.g),
            "u2": q.Ix * ang["theta"][2],
            "u3": q.Iy * ang["phi"][2],
            "u4": q.Iz * f["psi"][2],
        }

    def state(self, t) -> np.ndarray:
        """State ``(x, vx, y, vy, z, vz, theta, dtheta, phi, dphi, psi, dpsi)``."""
        f = self.flat_flag(t)
        ang = self.angles(t, f)
        return np.array([
            f["x"][0], f["x"][1], f["y"][0], f["y"][1], f["z"][0], f["z"][1],
            ang["theta"][0], ang["theta"][1], ang["phi"][0], ang["phi"][1],
            f["psi"][0], f["psi"][1],
        ], dtype=float)


def quad_angle_refs(x_r: BezierCurve, y_r: BezierCurve, s: Sigmoid, tgrid,
                    q: QuadParams = QuadParams()) -> SampledSeries:
    """Tilt references ``theta = x''/(z''+g)``, ``phi = -y''/(z''+g)`` on a grid."""
    _check_thrust(s, q)
    ref = QuadrotorReference(x_r, y_r, s, None, q)
    t = np.asarray(tgrid, dtype=float)
    ang = ref.angles(t)
    theta, phi = ang["theta"][0], ang["phi"][0]
    return SampledSeries(
        t,
        {"theta": theta, "phi": phi},
        {"theta": (-q.theta_max, q.theta_max), "phi": (-q.phi_max, q.phi_max)},
        {"theta": np.abs(theta) > q.theta_max, "phi": np.abs(phi) > q.phi_max},
    )


def quad_torque_refs(x_r: BezierCurve, y_r: BezierCurve, psi_r: BezierCurve | None,
                     s: Sigmoid, q: QuadParams, tgrid) -> SampledSeries:
    """Torque references from closed-form derivatives (no finite differences)."""
    if x_r.degree < 4 or y_r.degree < 4:
        raise ValueError("torque references need x_r and y_r of degree >= 4")
    ref = QuadrotorReference(x_r, y_r, s, psi_r, q)
    t = np.asarray(tgrid, dtype=float)
    u = ref.inputs(t)
    u2, u3 = np.broadcast_to(u["u2"], t.shape), np.broadcast_to(u["u3"], t.shape)
    u4 = np.broadcast_to(u["u4"], t.shape)
    return SampledSeries(
        t,
        {"u2": u2, "u3": u3, "u4": u4},
        {"u2": (-q.U2max, q.U2max), "u3": (-q.U3max, q.U3max), "u4": (-q.U4max, q.U4max)},
        {"u2": np.abs(u2) > q.U2max, "u3": np.abs(u3) > q.U3max, "u4": np.abs(u4) > q.U4max},
    )


def quad_hover_torque_sym(x_r: BezierCurve, q: QuadParams = QuadParams(), axis: str = "x") -> BezierCurve:
    """Hover-mode torque curve ``(I/g) x^(4)`` (``-(I/g) y^(4)`` for axis "y").

    The result has exact polynomial control points, linear in the free
    control points of `x_r`.
    """
    if x_r.degree < 4:
        raise ValueError("hover torque needs a reference of degree >= 4")
    inertia = q.Ix if axis == "x" else q.Iy
    sign = 1 if axis == "x" else -1
    gain = sign * as_fraction(inertia) / as_fraction(q.g)
    return derivative(x_r, 4) * gain
