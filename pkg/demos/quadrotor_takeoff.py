"""
Quadrotor take-off: sigmoid altitude, Bezier ground track
=========================================================

The altitude follows ``z = C (1 + tanh(gamma (t - tm))) + Hi``; its
derivative bounds give the thrust range and a window on the horizontal
acceleration that keeps the pitch below its limit.
"""

from importlib.resources import files

import numpy as np

from flatbez.bezier import BezierCurve, elevate_to
from flatbez.config import load_project
from flatbez.envelope import build_envelope, obstacle_clear
from flatbez.models import (
    QuadParams,
    QuadrotorReference,
    Sigmoid,
    gamma_limit,
    quad_thrust_curve,
    quad_tilt_bound,
    sigmoid_constants,
)
from flatbez.region import sample_oracle
from flatbez.simulate import (
    QuadrotorPlant,
    audit,
    integrate,
    quad_closed_loop,
    quad_initial_state,
    quad_limits,
    quad_open_loop,
)

print({k: round(v, 6) for k, v in sigmoid_constants().items()})

q = QuadParams()
t = np.linspace(0, 10, 10_001)
for gamma in (2, 7):
    s = Sigmoid(Hi=0, Hf=2, gamma=gamma, tm=5)
    series = quad_thrust_curve(s, q, t)
    print(f"gamma={gamma}: u1 in [{series['u1'].min():.3f}, {series['u1'].max():.3f}] N,"
          f" worst case {series.bounds['u1'][1]:.2f} N, limit {q.U1max:.2f} N,"
          f" flagged={series.violated}")
print(f"largest safe gamma for C=1: {gamma_limit(Sigmoid()):.3f}")

s = Sigmoid(Hi=0, Hf=2, gamma=2, tm=5)
print("acceleration window", quad_tilt_bound(s, q), "conservative", quad_tilt_bound(s, q, True))

# Scenario 1: three free control points of x, 17 bound groups after elevation
configs = files("flatbez") / "data" / "configs"
proj = load_project(str(configs / "quad_scenario1.json"))
system = proj.system()
oracle = sample_oracle(system, 50_000, seed=0, keep=5)
print(f"scenario 1: {proj.emitted_groups} groups, feasible fraction of the box {oracle.fraction:.4f}")
for alpha in oracle.feasible:
    c = proj.numeric_curves(proj.bind(list(alpha), system))
    ref = QuadrotorReference(c["x"].to_float(), c["y"].to_float(), s)
    print(np.round(alpha, 3), "max |theta| =", round(float(np.abs(ref.angles(t)["theta"][0]).max()), 4))

# Scenario 2: open and closed loop on fixed curves, then envelopes around x(t), y(t)
x = BezierCurve([0, 0, 0, 8, 12.5, 9, 2, 2, 2], 10.0)
y = BezierCurve([0, 0, 0, 4, 2.5, 2, 2, 2, 2], 10.0)
ref = QuadrotorReference(x, y, s)
ol = integrate(QuadrotorPlant(), quad_open_loop(ref), quad_initial_state(ref), 10.0, limits=quad_limits())
x0 = quad_initial_state(ref, extended=True)
x0[0] += 0.2
cl = integrate(QuadrotorPlant(extended=True), quad_closed_loop(ref), x0, 10.0, limits=quad_limits())
print("open loop final x", ol.signal("x")[-1], "audit", audit(ol).entries)
print("closed loop final x error", cl.signal("x")[-1] - 2.0)

for degree in (8, 16, 32):
    ex, ey = build_envelope(elevate_to(x, degree)), build_envelope(elevate_to(y, degree))
    print(f"degree {degree}: gap {ex.dmax:.3f}, obstacle [3,4]x[0,0.5] clear:",
          obstacle_clear(ex, ey, (3, 4, 0, 0.5)))
