"""Project configuration: one JSON document with a versioned schema.

The layout is documented in ``docs/formats.md``.  `load_project` validates
the document and reports problems with a dotted field path, e.g.
``curves.vx.control_points: vehicle speed curve needs degree >= 2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

from .bezier import BezierCurve, derivative, symbolic_curve
from .constraints import (
    ConstraintSystem,
    Relation,
    bound_curve,
    compile_system,
    endpoint_conditions,
)
from .models import (
    QuadParams,
    Sigmoid,
    VehicleParams,
    quad_hover_torque_sym,
    quad_tilt_bound,
    vehicle_input_curve,
)
from .sympoly import PolyExpr, as_fraction, parse_poly

__all__ = ["SCHEMA", "ConfigError", "Project", "load_project", "parse_point"]

SCHEMA = "flatbez.config/1"

MODELS = ("vehicle", "quadrotor", "polynomial")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _get(d: Mapping, key: str, path: str, default=..., kind=None):
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}".lstrip("."), "required field missing")
        return default
    v = d[key]
    if kind is not None and not isinstance(v, kind):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected {_kind_name(kind)}")
    return v


def _kind_name(kind) -> str:
    names = {dict: "object", list: "array", str: "string", bool: "boolean"}
    if isinstance(kind, tuple):
        return " or ".join(names.get(k, k.__name__) for k in kind)
    return names.get(kind, kind.__name__)


def _number(v, path: str):
    if isinstance(v, bool):
        raise ConfigError(path, "expected a number")
    if isinstance(v, str) and v.strip() in ("inf", "+inf", "-inf"):
        return -math.inf if v.strip().startswith("-") else math.inf
    try:
        return as_fraction(v)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ConfigError(path, f"expected a number, got {v!r}") from None


def _params(cls, raw: Mapping, path: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(path, f"unknown parameters {sorted(unknown)}")
    try:
        return cls(**{k: (None if v is None else float(v)) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def parse_point(text: str) -> list | dict:
    """``"2,2.3,1.2"``, ``"[2, 2.3, 1.2]"`` or ``'{"a1": 2, ...}'``."""
    text = text.strip()
    if not text:
        raise ValueError("empty point")
    if text[0] in "[{":
        value = json.loads(text)
    else:
        value = [s.strip() for s in text.split(",")]
    items = value.values() if isinstance(value, dict) else value
    for v in items:
        as_fraction(v)  # raises on malformed entries
    if isinstance(value, dict):
        return {k: as_fraction(v) for k, v in value.items()}
    return [as_fraction(v) for v in value]


@dataclass
class Project:
    raw: dict
    name: str
    model: str
    curves: dict
    vehicle: VehicleParams | None = None
    quad: QuadParams | None = None
    sigmoid: Sigmoid | None = None
    fixed: dict = field(default_factory=dict)
    relations: list = field(default_factory=list)
    emitted_groups: int = 0
    box: dict = field(default_factory=dict)

    # -- pipeline ---------------------------------------------------------

    def system(self) -> ConstraintSystem:
        try:
            return compile_system(self.relations, self.box, self.fixed)
        except ValueError as exc:
            if type(exc) is ValueError:
                raise ConfigError("box", str(exc)) from None
            raise

    @property
    def region_settings(self) -> dict:
        r = self.raw.get("region", {})
        return {
            "min_width": float(r.get("min_width", 1e-2)),
            "budget": int(r.get("budget", 1_000_000)),
            "seed": int(r.get("seed", 0)),
            "samples": int(r.get("samples", 10_000)),
        }

    @property
    def simulation(self) -> dict:
        return dict(self.raw.get("simulation", {}))

    def bind(self, point, system: ConstraintSystem | None = None) -> dict:
        """Map a point (sequence in parameter order, or mapping) to bindings."""
        system = system or self.system()
        params = system.parameters
        if point is None:
            point = self.simulation.get("point", [])
        if isinstance(point, Mapping):
            missing = [p for p in params if p not in point]
            if missing:
                raise ConfigError("simulation.point", f"missing parameters {missing}")
            vals = {p: as_fraction(point[p]) for p in params}
        else:
            point = list(point)
            if len(point) != len(params):
                raise ConfigError(
                    "simulation.point",
                    f"{len(point)} values given for {len(params)} parameters {list(params)}",
                )
            vals = {p: as_fraction(v) for p, v in zip(params, point)}
        return {**system.fixed, **vals}

    def numeric_curves(self, bindings: Mapping) -> dict:
        out = {}
        for name, c in self.curves.items():
            b = c.subs(bindings)
            left = [p for p in b.control_points if isinstance(p, PolyExpr)]
            if left:
                raise ConfigError(f"curves.{name}", f"unbound parameters {sorted(set().union(*(p.names for p in left)))}")
            out[name] = b
        return out


# ---------------------------------------------------------------------------


def _curve(raw, path, default_horizon):
    if not isinstance(raw, Mapping):
        raise ConfigError(path, "expected an object with control_points")
    pts = _get(raw, "control_points", path, kind=list)
    if not pts:
        raise ConfigError(f"{path}.control_points", "needs at least one control point")
    for i, p in enumerate(pts):
        if isinstance(p, bool) or not isinstance(p, (int, float, str)):
            raise ConfigError(f"{path}.control_points[{i}]", "expected a number or parameter name")
    horizon = _number(raw.get("horizon", default_horizon), f"{path}.horizon")
    if not horizon > 0:
        raise ConfigError(f"{path}.horizon", "must be positive")
    try:
        return symbolic_curve(pts, horizon)
    except ValueError as exc:
        raise ConfigError(f"{path}.control_points", str(exc)) from None


def _named_bound(v, proj: Project, path: str):
    if v is None:
        return None
    if isinstance(v, str):
        key = v.strip()
        neg = key.startswith("-")
        key = key.lstrip("-")
        if key in ("tilt_min", "tilt_max", "tilt_min_conservative"):
            if proj.model != "quadrotor":
                raise ConfigError(path, f"{key!r} is only defined for the quadrotor")
            lo, hi = quad_tilt_bound(proj.sigmoid, proj.quad, conservative=key.endswith("conservative"))
            val = as_fraction(lo if key.startswith("tilt_min") else hi)
            return -val if neg else val
        if key.startswith("params."):
            src = proj.quad if proj.model == "quadrotor" else proj.vehicle
            attr = key[len("params."):]
            if src is None or not hasattr(src, attr):
                raise ConfigError(path, f"unknown parameter reference {v!r}")
            val = as_fraction(getattr(src, attr))
            return -val if neg else val
    n = _number(v, path)
    return None if isinstance(n, float) and math.isinf(n) else n


def _signal_curve(proj: Project, sig: str, order: int, path: str) -> BezierCurve:
    if proj.model == "vehicle" and sig == "u":
        base = vehicle_input_curve(proj.curves["vx"], proj.vehicle)
    elif proj.model == "quadrotor" and sig in ("u2_hover", "u3_hover"):
        src = "x" if sig == "u2_hover" else "y"
        c = proj.curves[src]
        if c.degree < 4:
            raise ConfigError(f"curves.{src}.control_points", "torque constraints need degree >= 4")
        base = quad_hover_torque_sym(c, proj.quad, axis=src)
    elif proj.model == "quadrotor" and sig == "u4":
        if "psi" not in proj.curves:
            raise ConfigError(path, "u4 needs a psi curve")
        c = proj.curves["psi"]
        if c.degree < 2:
            raise ConfigError("curves.psi.control_points", "u4 needs degree >= 2")
        base = derivative(c, 2) * as_fraction(proj.quad.Iz)
    elif sig in proj.curves:
        base = proj.curves[sig]
    else:
        raise ConfigError(path, f"unknown signal {sig!r} for model {proj.model}")
    if order:
        if order > base.degree:
            raise ConfigError(path, f"derivative {order} exceeds curve degree {base.degree}")
        base = derivative(base, order)
    return base


def load_project(source) -> Project:
    """Validate a config (path, JSON text or dict) and build the project."""
    if isinstance(source, Mapping):
        raw = dict(source)
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("", "config must be a JSON object")
    if raw.get("schema") != SCHEMA:
        raise ConfigError("schema", f"expected {SCHEMA!r}, got {raw.get('schema')!r}")
    m = _get(raw, "model", "", kind=dict)
    mtype = _get(m, "type", "model", kind=str)
    if mtype not in MODELS:
        raise ConfigError("model.type", f"expected one of {list(MODELS)}")
    proj = Project(raw, str(raw.get("name", "")), mtype, {})
    params = _get(m, "params", "model", {}, dict)

    if mtype == "vehicle":
        proj.vehicle = _params(VehicleParams, params, "model.params")
    elif mtype == "quadrotor":
        proj.quad = _params(QuadParams, params, "model.params")
        proj.sigmoid = _params(Sigmoid, _get(m, "sigmoid", "model", {}, dict), "model.sigmoid")

    horizon = proj.vehicle.T if proj.vehicle else 1
    for name, c in _get(raw, "curves", "", {}, dict).items():
        proj.curves[name] = _curve(c, f"curves.{name}", horizon)

    if mtype == "vehicle":
        if "vx" not in proj.curves:
            raise ConfigError("curves.vx", "vehicle model needs a vx curve")
        if proj.curves["vx"].degree < 2:
            raise ConfigError("curves.vx.control_points", "vehicle speed curve needs degree >= 2")
    elif mtype == "quadrotor":
        for name in ("x", "y"):
            if name not in proj.curves:
                raise ConfigError(f"curves.{name}", "quadrotor model needs x and y curves")
        hs = {c.horizon for c in proj.curves.values()}
        if len(hs) > 1:
            raise ConfigError("curves", "all quadrotor curves must share one horizon")

    # endpoint conditions and explicitly fixed parameters
    for i, ep in enumerate(_get(raw, "endpoints", "", [], list)):
        path = f"endpoints[{i}]"
        cname = _get(ep, "curve", path, kind=str)
        if cname not in proj.curves:
            raise ConfigError(f"{path}.curve", f"unknown curve {cname!r}")
        try:
            pins = endpoint_conditions(proj.curves[cname], int(_get(ep, "order", path)),
                                       _get(ep, "start", path, kind=list), _get(ep, "end", path, kind=list))
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
        proj.fixed.update(pins)
    for k, v in _get(raw, "fixed", "", {}, dict).items():
        proj.fixed[k] = _number(v, f"fixed.{k}")

    # relations
    groups = 0
    for i, c in enumerate(_get(raw, "constraints", "", [], list)):
        path = f"constraints[{i}]"
        if not isinstance(c, Mapping):
            raise ConfigError(path, "expected an object")
        sig = _get(c, "signal", path, kind=str)
        order = int(c.get("derivative", 0))
        curve = _signal_curve(proj, sig, order, f"{path}.signal")
        lo = _named_bound(c.get("lo"), proj, f"{path}.lo")
        hi = _named_bound(c.get("hi"), proj, f"{path}.hi")
        if lo is None and hi is None:
            raise ConfigError(path, "needs lo, hi or both")
        strict = c.get("strict", True)
        if isinstance(strict, list):
            strict = tuple(bool(s) for s in strict)
        name = c.get("name") or (sig if not order else f"{sig}_d{order}")
        try:
            rels = bound_curve(curve, lo, hi, strict, name, c.get("elevate"))
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
        proj.relations.extend(rels)
        groups += len({r.group for r in rels})
    for i, r in enumerate(_get(raw, "relations", "", [], list)):
        path = f"relations[{i}]"
        try:
            poly = parse_poly(_get(r, "poly", path, kind=str))
            rel = Relation(poly, _get(r, "op", path, kind=str), r.get("name", f"r{i}"),
                           r.get("group", r.get("name", f"r{i}")))
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(path, str(exc)) from None
        proj.relations.append(rel)
        groups += 1
    proj.emitted_groups = groups

    box = _get(raw, "box", "", {}, dict)
    for k, v in box.items():
        if not isinstance(v, list) or len(v) != 2:
            raise ConfigError(f"box.{k}", "expected [lo, hi]")
        proj.box[k] = (_number(v[0], f"box.{k}[0]"), _number(v[1], f"box.{k}[1]"))
    free = set()
    for c in proj.curves.values():
        for p in c.control_points:
            if isinstance(p, PolyExpr):
                free.update(p.names)
    for r in proj.relations:
        free.update(r.poly.names)
    missing = sorted(free - set(proj.box) - set(proj.fixed))
    if missing:
        raise ConfigError("box", f"no interval for parameters {missing}")
    return proj
