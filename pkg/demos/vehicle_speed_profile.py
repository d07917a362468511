"""
Vehicle speed profile: from control points to a certified region
=================================================================

The longitudinal model ``M dV/dt = u / r - Ca V^2`` is flat in the speed.
A Bezier speed profile therefore fixes the drive torque exactly, and the
torque's Bernstein coefficients are polynomials in the free control points.
"""

from fractions import Fraction

import numpy as np

from flatbez.bezier import BezierCurve, symbolic_curve
from flatbez.constraints import bound_curve, compile_system
from flatbez.models import VehicleParams, vehicle_input_curve
from flatbez.region import branch_and_prune, membership, sample_oracle
from flatbez.simulate import VehiclePlant, audit, integrate, vehicle_closed_loop, vehicle_limits

# With rM/T = rCa = 1 the torque control points come out with exact rationals
unit = VehicleParams(M=1.0, r=1.0, Ca=1.0, T=1.0)
u = vehicle_input_curve(symbolic_curve([0, "a1", "a2", "a3", 1]), unit)
for j, c in enumerate(u.control_points):
    print(f"U{j} = {c}")

# Keeping every coefficient inside (0, 10) keeps the whole torque inside
system = compile_system(bound_curve(u, 0, 10, name="u"),
                        {"a1": (0, 2.5), "a2": (-1, 2.5), "a3": (-1.25, 1.5)})
print(len(system.relations), "relations over", system.parameters)

# Exact membership: the first point fails on U8, the second is fine
for point in [(2, Fraction(23, 10), Fraction(13, 10)), (2, Fraction(3, 2), Fraction(6, 5))]:
    rep = membership(system, point)
    print(point, "feasible" if rep.feasible else [r["name"] for r in rep.violated()])

# Two free points: certified inner boxes against a plain Monte-Carlo estimate
u2 = vehicle_input_curve(symbolic_curve([0, "a1", "a2", 1]))
sys2 = compile_system(bound_curve(u2, 0, 10, name="u"), {"a1": (0, 2), "a2": (-0.5, 1.5)})
approx = branch_and_prune(sys2, 1e-2)
mc = sample_oracle(sys2, 100_000, seed=0)
print(f"certified inside {approx.stats['inside_fraction']:.4f}, "
      f"outer {approx.stats['outer_fraction']:.4f}, sampled {mc.fraction:.4f}")
print("(0.05, 0.5) is", approx.locate((0.05, 0.5)))

# Simulate a feasible and an infeasible choice with a 10 cm/s start error
for a1 in (2.0, 5.5):
    vxr = BezierCurve([0.0, a1, 1.5, 1.2, 1.0])
    traj = integrate(VehiclePlant(), vehicle_closed_loop(vxr, lam=9.0), [0.1], 1.0,
                     limits=vehicle_limits())
    err = traj.signal("vx")[-1] - vxr(1.0)
    report = audit(traj)
    print(f"a1={a1}: terminal error {err:.3e} (0.1 e^-9 = {0.1 * np.exp(-9):.3e}),",
          "compliant" if report.compliant else f"worst slack {report.entries[0]['worst_slack']:.3f}")
