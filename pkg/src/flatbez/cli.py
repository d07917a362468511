"""Command-line front end.

Subcommands::

    flatbez compile  --config C [--out-dir D]
    flatbez region   --system S [--config C] [--min-width W] [--budget B] [--seed N] [--out-dir D]
    flatbez check    --system S --point P
    flatbez simulate --config C [--point P] [--strict] [--out-dir D]
    flatbez envelope --config C [--point P] [--out-dir D]

Exit codes: 0 success (or feasible point), 1 infeasible point / audit
violations under ``--strict``, 2 usage or input errors, 3 model errors
(singular references, diverging simulation).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .config import ConfigError, Project, load_project, parse_point
from .bezier import elevate_to
from .constraints import ConstraintSystem, InfeasibleError
from .envelope import EnvelopeRefinementError, build_envelope, envelope_csv, obstacle_clear, refine_envelope
from .models import QuadrotorReference, SingularityError
from .region import branch_and_prune, membership, sample_oracle
from .simulate import (
    Limit,
    QuadrotorPlant,
    SimulationError,
    UnstableGainsError,
    VehiclePlant,
    audit,
    integrate,
    quad_closed_loop,
    quad_initial_state,
    quad_limits,
    quad_open_loop,
    vehicle_closed_loop,
    vehicle_open_loop,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_MODEL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text)
    return path


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, Fraction):
        return float(v)
    if isinstance(v, np.generic):
        return v.item()
    raise TypeError(f"not serializable: {type(v)}")


def _load_system(path: str) -> ConstraintSystem:
    try:
        return ConstraintSystem.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read system {path}: {exc}") from None


def _point(text: str | None):
    if text is None:
        return None
    try:
        return parse_point(text)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise UsageError(f"malformed --point {text!r}: {exc}") from None


# ---------------------------------------------------------------------------


def cmd_compile(args) -> int:
    proj = load_project(args.config)
    system = proj.system()
    path = _write(Path(args.out_dir), "system.json", system.to_json())
    kept = len(system.groups)
    dropped_groups = proj.emitted_groups - kept
    print(f"compiled {proj.emitted_groups} constraint groups "
          f"({len(system.relations)} relations kept, {len(system.dropped)} constant relations dropped)")
    if dropped_groups:
        print(f"{dropped_groups} groups hold identically and were removed")
    print(f"parameters: {', '.join(system.parameters) or '(none)'}")
    if system.fixed:
        print("fixed: " + ", ".join(f"{k}={v}" for k, v in system.fixed.items()))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_region(args) -> int:
    system = _load_system(args.system)
    settings = load_project(args.config).region_settings if args.config else {
        "min_width": 1e-2, "budget": 1_000_000, "seed": 0, "samples": 10_000}
    for key in ("min_width", "budget", "seed", "samples"):
        if getattr(args, key) is not None:
            settings[key] = getattr(args, key)
    if not system.is_finite():
        raise UsageError("region needs a finite parameter box")
    if not settings["min_width"] > 0:
        raise UsageError("--min-width must be positive")
    approx = branch_and_prune(system, settings["min_width"], settings["budget"])
    stats = dict(approx.stats)
    if settings["samples"] > 0:
        o = sample_oracle(system, settings["samples"], settings["seed"])
        stats["oracle"] = {"fraction": o.fraction, "stderr": o.stderr,
                           "samples": o.n, "seed": settings["seed"]}
    out = Path(args.out_dir)
    _write(out, "region.json", approx.to_json())
    _write(out, "region.csv", approx.to_csv())
    _write(out, "region_stats.json", _json(stats))
    print(f"inside {stats['n_inside']}  outside {stats['n_outside']}  boundary {stats['n_boundary']}"
          f"  pending {stats['n_pending']}")
    print(f"certified inside fraction {stats['inside_fraction']:.6f}"
          f"  outer fraction {stats['outer_fraction']:.6f}")
    if "oracle" in stats:
        print(f"sampled feasible fraction {stats['oracle']['fraction']:.6f}"
              f" +- {stats['oracle']['stderr']:.2g}")
    if stats["partial"]:
        print("budget exhausted: partial result")
    print(f"wrote {out / 'region.json'}, {out / 'region.csv'}, {out / 'region_stats.json'}")
    return EXIT_OK


def cmd_check(args) -> int:
    system = _load_system(args.system)
    point = _point(args.point)
    try:
        report = membership(system, point)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    width = max([len(r["name"]) for r in report.rows] + [8])
    for row in report.rows:
        mark = "ok  " if row["ok"] else "FAIL"
        print(f"{mark} {row['name']:<{width}} value {float(row['value']):+.9g} {row['op']} 0"
              f"  slack {float(row['slack']):+.9g}")
    for p in report.box_violations:
        lo, hi = system.box[p]
        print(f"FAIL box {p} outside [{lo}, {hi}]")
    print("feasible" if report.feasible else
          f"infeasible: {len(report.violated()) + len(report.box_violations)} violation(s)")
    return EXIT_OK if report.feasible else EXIT_FAIL


def _limits(proj: Project, spec) -> list:
    if spec is not None:
        return [Limit(l["name"], l["signal"],
                      -math.inf if l.get("lo") is None else float(l["lo"]),
                      math.inf if l.get("hi") is None else float(l["hi"]),
                      bool(l.get("strict", True))) for l in spec]
    if proj.model == "quadrotor":
        return quad_limits(proj.quad)
    out = []
    for c in proj.raw.get("constraints", []):
        if c.get("signal") == "u" and not c.get("derivative"):
            s = c.get("strict", True)
            out.append(Limit(c.get("name", "u") + "_range", "u",
                             -math.inf if c.get("lo") is None else float(Fraction(str(c["lo"]))),
                             math.inf if c.get("hi") is None else float(Fraction(str(c["hi"]))),
                             bool(s if isinstance(s, bool) else all(s))))
    return out


def cmd_simulate(args) -> int:
    proj = load_project(args.config)
    if proj.model == "polynomial":
        raise UsageError("the polynomial model has no dynamics to simulate")
    sim = proj.simulation
    system = proj.system()
    bindings = proj.bind(_point(args.point), system)
    curves = {k: c.to_float() for k, c in proj.numeric_curves(bindings).items()}
    h = float(sim.get("step", 1e-3))
    offsets = sim.get("initial_offset", {})
    limits = _limits(proj, sim.get("limits"))
    laws = sim.get("laws", ["open_loop", "closed_loop"])
    out = Path(args.out_dir)
    summary = {"schema": "flatbez.simulation/1", "point": {k: float(v) for k, v in bindings.items()},
               "runs": {}}
    violated = False
    for law_name in laws:
        if proj.model == "vehicle":
            vx = curves["vx"]
            t_final = float(sim.get("t_final", vx.horizon))
            plant = VehiclePlant(proj.vehicle)
            if law_name == "open_loop":
                law = vehicle_open_loop(vx, proj.vehicle)
            elif law_name == "closed_loop":
                law = vehicle_closed_loop(vx, proj.vehicle, float(sim.get("lambda", 9.0)))
            else:
                raise ConfigError("simulation.laws", f"unknown law {law_name!r}")
            x0 = np.array([float(vx(0.0))])
        else:
            ref = QuadrotorReference(curves["x"], curves["y"], proj.sigmoid, curves.get("psi"), proj.quad)
            t_final = float(sim.get("t_final", curves["x"].horizon))
            if law_name == "open_loop":
                plant, law = QuadrotorPlant(proj.quad), quad_open_loop(ref)
            elif law_name == "closed_loop":
                plant = QuadrotorPlant(proj.quad, extended=True)
                law = quad_closed_loop(ref, sim.get("gains"))
            else:
                raise ConfigError("simulation.laws", f"unknown law {law_name!r}")
            x0 = quad_initial_state(ref, plant.extended)
        names = list(plant.state_names)
        for k, dv in offsets.items():
            if k not in names:
                raise ConfigError(f"simulation.initial_offset.{k}", f"unknown state; have {names}")
            x0[names.index(k)] += float(dv)
        traj = integrate(plant, law, x0, t_final, h, limits=limits)
        report = audit(traj)
        violated |= not report.compliant
        _write(out, f"trajectory_{law_name}.csv", traj.to_csv())
        _write(out, f"audit_{law_name}.json", report.to_json())
        summary["runs"][law_name] = {**traj.summary(), "audit": report.to_dict()}
        status = "compliant" if report.compliant else \
            "violations: " + ", ".join(e["limit"] for e in report.entries)
        print(f"{law_name}: {len(traj.times)} samples, {status}")
    if "envelope" in proj.raw:
        _envelope_outputs(proj, curves, out, summary)
    _write(out, "summary.json", _json(summary))
    print(f"wrote outputs to {out}")
    return EXIT_FAIL if (violated and args.strict) else EXIT_OK


def _envelope_outputs(proj: Project, curves: dict, out: Path, summary: dict) -> dict:
    spec = proj.raw.get("envelope", {})
    names = spec.get("curves", sorted(curves))
    envs = {}
    for name in names:
        if name not in curves:
            raise ConfigError("envelope.curves", f"unknown curve {name!r}")
        c = curves[name]
        gap = spec.get("target_gap")
        if spec.get("elevate"):
            c = elevate_to(c, int(spec["elevate"]))
        env = refine_envelope(c, float(gap)) if gap else build_envelope(c)
        envs[name] = env
        _write(out, f"envelope_{name}.csv", envelope_csv(env, int(spec.get("samples", 201))))
    info = {n: {"degree": e.degree, "dmax": e.dmax} for n, e in envs.items()}
    if "obstacle" in spec:
        px, py = spec.get("pair", ["x", "y"])
        clear = obstacle_clear(envs[px], envs[py], spec["obstacle"], tuple(spec.get("window", (0.0, 1.0))))
        info["obstacle"] = {"box": spec["obstacle"], "clear": clear}
    summary["envelope"] = info
    return info


def cmd_envelope(args) -> int:
    proj = load_project(args.config)
    system = proj.system()
    bindings = proj.bind(_point(args.point), system)
    curves = {k: c.to_float() for k, c in proj.numeric_curves(bindings).items()}
    out = Path(args.out_dir)
    summary: dict = {}
    info = _envelope_outputs(proj, curves, out, summary)
    _write(out, "envelope.json", _json(info))
    for name, v in info.items():
        if name == "obstacle":
            print(f"obstacle {v['box']}: {'clear' if v['clear'] else 'envelope overlaps'}")
        else:
            print(f"{name}: degree {v['degree']}, dmax {v['dmax']:.6g}")
    print(f"wrote outputs to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flatbez", description="Constrained flat trajectories with Bezier curves.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="compile a config into a constraint system")
    c.add_argument("--config", required=True)
    c.add_argument("--out-dir", default=".")
    c.set_defaults(func=cmd_compile)

    r = sub.add_parser("region", help="inner/outer box approximation of the feasible set")
    r.add_argument("--system", required=True)
    r.add_argument("--config")
    r.add_argument("--min-width", dest="min_width", type=float)
    r.add_argument("--budget", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--samples", type=int, help="Monte-Carlo samples for the oracle estimate (0 disables)")
    r.add_argument("--out-dir", default=".")
    r.set_defaults(func=cmd_region)

    k = sub.add_parser("check", help="exact membership test of one point")
    k.add_argument("--system", required=True)
    k.add_argument("--point", required=True)
    k.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="simulate the model on a chosen point and audit limits")
    s.add_argument("--config", required=True)
    s.add_argument("--point")
    s.add_argument("--strict", action="store_true", help="exit 1 when the audit reports violations")
    s.add_argument("--out-dir", default=".")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("envelope", help="export quantitative envelopes of the curves")
    e.add_argument("--config", required=True)
    e.add_argument("--point")
    e.add_argument("--out-dir", default=".")
    e.set_defaults(func=cmd_envelope)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, InfeasibleError, UnstableGainsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularityError, SimulationError, EnvelopeRefinementError) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
