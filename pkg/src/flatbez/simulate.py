"""Fixed-step RK4 simulation of the built-in models with limit auditing.

A simulation combines a plant (right-hand side ``f(t, x, u)``) with a
control law.  Laws split into a time-only reference part, evaluated in one
vectorized call at every RK4 stage time, and a cheap state-feedback part.
References therefore come from the analytic Bezier/sigmoid expressions at
the exact stage times; nothing is interpolated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .bezier import BezierCurve, derivative
from .models import (
    QuadParams,
    QuadrotorReference,
    VehicleParams,
    sigmoid_eval,
    vehicle_input_curve,
)

__all__ = [
    "DEFAULT_QUAD_GAINS",
    "AuditReport",
    "ControlLaw",
    "DoubleIntegrator",
    "Limit",
    "QuadrotorPlant",
    "SimulationError",
    "Trajectory",
    "UnstableGainsError",
    "VehiclePlant",
    "audit",
    "check_gains",
    "double_integrator_law",
    "integrate",
    "quad_closed_loop",
    "quad_limits",
    "quad_open_loop",
    "rk4_step",
    "vehicle_closed_loop",
    "vehicle_limits",
    "vehicle_open_loop",
]

# (s + 3)^4 per translational axis, (s + 3)^2 for yaw; lowest order first
DEFAULT_QUAD_GAINS = {
    "x": (81.0, 108.0, 54.0, 12.0),
    "y": (81.0, 108.0, 54.0, 12.0),
    "z": (81.0, 108.0, 54.0, 12.0),
    "psi": (9.0, 6.0),
}


class SimulationError(RuntimeError):
    def __init__(self, step: int, t: float, message: str = "non-finite state"):
        self.step = step
        self.t = t
        super().__init__(f"{message} at step {step} (t={t:.6g})")


class UnstableGainsError(ValueError):
    """Error polynomial has a root with non-negative real part."""


def check_gains(gains: Sequence[float], name: str = "gains") -> np.ndarray:
    """Roots of ``s^n + g[n-1] s^(n-1) + ... + g[0]``; raise unless all are
    strictly in the left half-plane."""
    g = [float(v) for v in gains]
    if not g:
        raise UnstableGainsError(f"{name}: empty gain list")
    roots = np.roots([1.0] + g[::-1])
    if np.any(roots.real >= 0):
        raise UnstableGainsError(f"{name}: error dynamics not Hurwitz, roots {roots}")
    return roots


# ---------------------------------------------------------------------------
# Plants


class DoubleIntegrator:
    state_names = ("y", "dy")
    input_names = ("u",)

    def rhs(self, t, x, u):
        return np.array([x[1], u[0]])


@dataclass(frozen=True)
class VehiclePlant:
    """``M dV/dt = u / r - Ca V^2``."""

    params: VehicleParams = VehicleParams()
    state_names = ("vx",)
    input_names = ("u",)

    def rhs(self, t, x, u):
        p = self.params
        return np.array([(u[0] / p.r - p.Ca * x[0] ** 2) / p.M])


@dataclass(frozen=True)
class QuadrotorPlant:
    """Simplified quadrotor; `extended` adds thrust and its rate as states.

    With the dynamic extension the inputs are ``(w, u2, u3, u4)`` where
    ``w`` is the second derivative of the thrust; the recorded inputs are
    still ``u1..u4``.
    """

    params: QuadParams = QuadParams()
    extended: bool = False

    @property
    def state_names(self):
        base = ("x", "vx", "y", "vy", "z", "vz", "theta", "dtheta", "phi", "dphi", "psi", "dpsi")
        return base + (("u1", "du1") if self.extended else ())

    input_names = ("u1", "u2", "u3", "u4")

    def rhs(self, t, x, u):
        p = self.params
        u1 = x[12] if self.extended else u[0]
        d = np.array([
            x[1], x[6] * u1 / p.m,
            x[3], -x[8] * u1 / p.m,
            x[5], u1 / p.m - p.g,
            x[7], u[1] / p.Ix,
            x[9], u[2] / p.Iy,
            x[11], u[3] / p.Iz,
        ])
        if self.extended:
            d = np.concatenate([d, [x[13], u[0]]])
        return d

    def recorded_inputs(self, x, u):
        if self.extended:
            return np.array([x[12], u[1], u[2], u[3]])
        return u


# ---------------------------------------------------------------------------
# Control laws


@dataclass
class ControlLaw:
    """``reference(times) -> (n, k)`` array and ``control(t, x, ref_row) -> u``."""

    reference: Callable
    control: Callable
    name: str = ""
    gains: dict = field(default_factory=dict)


def double_integrator_law(u: float = 0.0) -> ControlLaw:
    return ControlLaw(lambda t: np.zeros((len(t), 0)), lambda t, x, r: np.array([u]),
                      "constant")


def _vehicle_refs(vxr: BezierCurve, params: VehicleParams):
    vf = vxr.to_float()
    dv = derivative(vf, 1)
    ur = vehicle_input_curve(vf, params)
    T = float(vf.horizon)

    def ref(t):
        tau = np.clip(np.asarray(t, dtype=float) / T, 0.0, 1.0)
        return np.column_stack([vf(tau), dv(tau), ur(tau)])
    return ref


def vehicle_open_loop(vxr: BezierCurve, params: VehicleParams = VehicleParams()) -> ControlLaw:
    """Feedforward ``u_r(t)`` from the flatness map."""
    return ControlLaw(_vehicle_refs(vxr, params), lambda t, x, r: r[2:3], "open_loop")


def vehicle_closed_loop(vxr: BezierCurve, params: VehicleParams = VehicleParams(),
                        lam: float = 9.0) -> ControlLaw:
    """``u = M r (dVxr/dt - lam e) + r Ca Vx^2``, giving ``de/dt = -lam e``."""
    check_gains([lam], "lambda")
    p = params

    def control(t, x, r):
        return np.array([p.M * p.r * (r[1] - lam * (x[0] - r[0])) + p.r * p.Ca * x[0] ** 2])
    return ControlLaw(_vehicle_refs(vxr, params), control, "closed_loop", {"lambda": lam})


def _quad_ref_array(ref: QuadrotorReference):
    q = ref.params

    def fn(t):
        t = np.asarray(t, dtype=float)
        f = ref.flat_flag(t)
        ang = ref.angles(t, f)
        cols = [np.broadcast_to(np.asarray(c, dtype=float), t.shape) for c in (
            q.m * (f["z"][2] + q.g),
            q.Ix * ang["theta"][2],
            q.Iy * ang["phi"][2],
            q.Iz * f["psi"][2],
            *f["x"], *f["y"], *f["z"], *f["psi"],
        )]
        return np.column_stack(cols)
    return fn


def quad_open_loop(ref: QuadrotorReference) -> ControlLaw:
    return ControlLaw(_quad_ref_array(ref), lambda t, x, r: r[:4], "open_loop")


def quad_closed_loop(ref: QuadrotorReference, gains: Mapping | None = None) -> ControlLaw:
    """Exact linearization by dynamic extension plus linear error feedback.

    Use with ``QuadrotorPlant(extended=True)``.  Each translational axis
    gets ``e'''' + k3 e''' + k2 e'' + k1 e' + k0 e = 0`` and yaw
    ``e'' + k1 e' + k0 e = 0``; `gains` maps "x", "y", "z", "psi" to the
    lowest-order-first coefficient lists.
    """
    k = {**DEFAULT_QUAD_GAINS, **(gains or {})}
    for axis, n in (("x", 4), ("y", 4), ("z", 4), ("psi", 2)):
        if len(k[axis]) != n:
            raise ValueError(f"gains[{axis!r}] needs {n} coefficients")
        check_gains(k[axis], f"gains[{axis!r}]")
    kx, ky, kz, kp = (np.asarray(k[a], dtype=float) for a in ("x", "y", "z", "psi"))
    q = ref.params

    def control(t, s, r):
        u1, du1 = s[12], s[13]
        th, dth, ph, dph = s[6], s[7], s[8], s[9]
        xr, yr, zr, pr = r[4:9], r[9:14], r[14:19], r[19:22]
        x = (s[0], s[1], th * u1 / q.m, (dth * u1 + th * du1) / q.m)
        y = (s[2], s[3], -ph * u1 / q.m, -(dph * u1 + ph * du1) / q.m)
        z = (s[4], s[5], u1 / q.m - q.g, du1 / q.m)
        vx = xr[4] - sum(kx[i] * (x[i] - xr[i]) for i in range(4))
        vy = yr[4] - sum(ky[i] * (y[i] - yr[i]) for i in range(4))
        vz = zr[4] - sum(kz[i] * (z[i] - zr[i]) for i in range(4))
        vp = pr[2] - kp[0] * (s[10] - pr[0]) - kp[1] * (s[11] - pr[1])
        w = q.m * vz
        ddth = (q.m * vx - 2 * dth * du1 - th * w) / u1
        ddph = (-q.m * vy - 2 * dph * du1 - ph * w) / u1
        return np.array([w, q.Ix * ddth, q.Iy * ddph, q.Iz * vp])

    return ControlLaw(_quad_ref_array(ref), control, "closed_loop",
                      {a: list(map(float, k[a])) for a in ("x", "y", "z", "psi")})


def quad_initial_state(ref: QuadrotorReference, extended: bool = False, t0: float = 0.0):
    x = ref.state(t0)
    if extended:
        q = ref.params
        x = np.concatenate([x, [q.m * (sigmoid_eval(ref.z, t0, 2) + q.g),
                                q.m * sigmoid_eval(ref.z, t0, 3)]])
    return x


__all__.append("quad_initial_state")


# ---------------------------------------------------------------------------
# Limits and integration


@dataclass(frozen=True)
class Limit:
    """Named bound ``lo < signal < hi`` (``<=`` when not strict)."""

    name: str
    signal: str
    lo: float = -math.inf
    hi: float = math.inf
    strict: bool = True

    def slack(self, v: np.ndarray) -> np.ndarray:
        return np.minimum(v - self.lo, self.hi - v)

    def violated(self, v: np.ndarray) -> np.ndarray:
        s = self.slack(v)
        return s <= 0 if self.strict else s < 0


def vehicle_limits(lo: float = 0.0, hi: float = 10.0) -> list:
    return [Limit("u_range", "u", lo, hi, True)]


def quad_limits(q: QuadParams = QuadParams()) -> list:
    return [
        Limit("u1_range", "u1", 0.0, q.U1max, True),
        Limit("theta_max", "theta", -q.theta_max, q.theta_max, False),
        Limit("phi_max", "phi", -q.phi_max, q.phi_max, False),
        Limit("u2_max", "u2", -q.U2max, q.U2max, False),
        Limit("u3_max", "u3", -q.U3max, q.U3max, False),
        Limit("u4_max", "u4", -q.U4max, q.U4max, False),
    ]


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    state_names: tuple
    input_names: tuple
    limits: tuple = ()
    flags: np.ndarray | None = None  # (n_times, n_limits) booleans

    def __post_init__(self):
        n = len(self.times)
        if self.states.shape[0] != n or self.inputs.shape[0] != n:
            raise ValueError("states/inputs do not match the time grid")
        for a in (self.times, self.states, self.inputs):
            a.setflags(write=False)
        if self.flags is None:
            object.__setattr__(self, "flags", np.zeros((n, 0), dtype=bool))

    def signal(self, name: str) -> np.ndarray:
        if name in self.state_names:
            return self.states[:, self.state_names.index(name)]
        if name in self.input_names:
            return self.inputs[:, self.input_names.index(name)]
        raise KeyError(f"unknown signal {name!r}")

    @property
    def violations(self) -> list:
        """Per sample, names of the violated limits."""
        names = [lim.name for lim in self.limits]
        return [[names[j] for j in np.flatnonzero(row)] for row in self.flags]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *self.state_names, *self.input_names,
                    *[f"viol_{lim.name}" for lim in self.limits]])
        for i, t in enumerate(self.times):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in self.states[i]),
                        *(repr(float(v)) for v in self.inputs[i]),
                        *(int(f) for f in self.flags[i])])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "t0": float(self.times[0]),
            "tf": float(self.times[-1]),
            "samples": len(self.times),
            "final_state": dict(zip(self.state_names, map(float, self.states[-1]))),
            "input_range": {
                n: [float(self.inputs[:, i].min()), float(self.inputs[:, i].max())]
                for i, n in enumerate(self.input_names)
            },
        }


def rk4_step(f, t, x, h):
    k1 = f(t, x, 0)
    k2 = f(t + h / 2, x + h / 2 * k1, 1)
    k3 = f(t + h / 2, x + h / 2 * k2, 1)
    k4 = f(t + h, x + h * k3, 2)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(plant, law: ControlLaw, x0, t_final: float, h: float = 1e-3, t0: float = 0.0,
              limits: Sequence[Limit] = ()) -> Trajectory:
    """Classical RK4 on the uniform grid ``t0 + k h`` up to `t_final`.

    Raises `SimulationError` with the step index when the state stops being
    finite.  Limits are checked at every grid sample.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    n = int(round((t_final - t0) / h))
    if n < 1 or not math.isclose(t0 + n * h, t_final, rel_tol=0, abs_tol=1e-9 * max(1.0, abs(t_final))):
        raise ValueError("t_final - t0 must be a positive multiple of h")
    times = t0 + h * np.arange(n + 1)
    mids = times[:-1] + h / 2
    ref_grid = law.reference(times)
    ref_mid = law.reference(mids)
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (len(plant.state_names),):
        raise ValueError(f"x0 needs {len(plant.state_names)} entries")
    record = getattr(plant, "recorded_inputs", lambda s, u: u)
    states = np.empty((n + 1, len(x)))
    inputs = np.empty((n + 1, len(plant.input_names)))

    for k in range(n + 1):
        states[k] = x
        inputs[k] = record(x, law.control(times[k], x, ref_grid[k]))
        if k == n:
            break
        rows = (ref_grid[k], ref_mid[k], ref_grid[k + 1])

        def f(t, s, stage):
            return plant.rhs(t, s, law.control(t, s, rows[stage]))

        x = rk4_step(f, times[k], x, h)
        if not np.all(np.isfinite(x)):
            raise SimulationError(k + 1, float(times[k + 1]))

    traj = Trajectory(times, states, inputs, tuple(plant.state_names), tuple(plant.input_names))
    return attach_limits(traj, limits)


def attach_limits(traj: Trajectory, limits: Sequence[Limit]) -> Trajectory:
    names = set(traj.state_names) | set(traj.input_names)
    for lim in limits:
        if lim.signal not in names:
            raise KeyError(f"limit {lim.name!r} refers to unknown signal {lim.signal!r}")
    flags = np.column_stack([lim.violated(traj.signal(lim.signal)) for lim in limits]) \
        if limits else np.zeros((len(traj.times), 0), dtype=bool)
    return Trajectory(traj.times, traj.states, traj.inputs, traj.state_names,
                      traj.input_names, tuple(limits), flags)


__all__.append("attach_limits")


@dataclass
class AuditReport:
    entries: list

    def __bool__(self):
        return bool(self.entries)

    def __len__(self):
        return len(self.entries)

    @property
    def compliant(self) -> bool:
        return not self.entries

    def to_dict(self) -> dict:
        return {"schema": "flatbez.audit/1", "compliant": self.compliant,
                "violations": self.entries}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def audit(traj: Trajectory, limits: Sequence[Limit] | None = None) -> AuditReport:
    """First violation time, worst slack and duration per violated limit.

    Without `limits` the limits attached to the trajectory are used.
    """
    if limits is not None:
        traj = attach_limits(traj, limits)
    h = float(traj.times[1] - traj.times[0]) if len(traj.times) > 1 else 0.0
    entries = []
    for j, lim in enumerate(traj.limits):
        bad = traj.flags[:, j]
        if not bad.any():
            continue
        slack = lim.slack(traj.signal(lim.signal))
        worst = int(np.argmin(slack))
        entries.append({
            "limit": lim.name,
            "signal": lim.signal,
            "bounds": [v if math.isfinite(v) else None for v in (lim.lo, lim.hi)],
            "first_violation_t": float(traj.times[np.argmax(bad)]),
            "worst_slack": float(slack[worst]),
            "worst_t": float(traj.times[worst]),
            "samples": int(bad.sum()),
            "duration": float(bad.sum() * h),
        })
    return AuditReport(entries)
