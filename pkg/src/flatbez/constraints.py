"""Compile bound requirements on symbolic curves into semialgebraic systems.

Every control point of a symbolic Bezier curve is a polynomial in the free
control points of the flat outputs.  Bounding all control points bounds the
whole curve (convex hull), so ``lo <= u(t) <= hi`` turns into one pair of
polynomial inequalities per control point.  The result is a
`ConstraintSystem`: relations ``p(alpha) op 0`` over a parameter box, with
endpoint conditions already substituted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .bezier import BezierCurve, binomial, elevate_to
from .sympoly import PolyExpr, _natural_key, as_fraction, parse_poly

__all__ = [
    "OPS",
    "ConstraintSystem",
    "InfeasibleError",
    "Relation",
    "bound_curve",
    "compile_system",
    "endpoint_conditions",
]

SCHEMA = "flatbez.constraint-system/1"

OPS = ("<", "<=", ">", ">=", "==", "!=")

_CMP = {
    "<": lambda v: v < 0,
    "<=": lambda v: v <= 0,
    ">": lambda v: v > 0,
    ">=": lambda v: v >= 0,
    "==": lambda v: v == 0,
    "!=": lambda v: v != 0,
}


class InfeasibleError(ValueError):
    """A relation with constant sign is violated, so the system is empty."""

    def __init__(self, relations):
        self.relations = list(relations)
        desc = "; ".join(f"{r.name}: {r.poly} {r.op} 0" for r in self.relations)
        super().__init__(f"infeasible at compile time: {desc}")


@dataclass(frozen=True)
class Relation:
    """``poly op 0``; `group` ties the two sides of a double inequality."""

    poly: PolyExpr
    op: str
    name: str = ""
    group: str = ""

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown relation operator {self.op!r}")

    @property
    def strict(self) -> bool:
        return self.op in ("<", ">", "!=")

    def holds(self, value) -> bool:
        return bool(_CMP[self.op](value))

    def slack(self, value):
        """Signed margin, positive when satisfied."""
        if self.op in ("<", "<="):
            return -value
        if self.op in (">", ">="):
            return value
        if self.op == "==":
            return -abs(value)
        return abs(value)

    def subs(self, bindings) -> "Relation":
        return Relation(self.poly.subs(bindings), self.op, self.name, self.group)


def _as_bound(value):
    if value is None:
        return None
    if isinstance(value, float) and math.isinf(value):
        return None
    return as_fraction(value)


def bound_curve(curve: BezierCurve, lo=None, hi=None, strict=True, name: str = "c",
                elevate: int | None = None) -> list[Relation]:
    """Relations ``lo * C_j * hi`` for every control point ``C_j``.

    `lo`/`hi` may be None or infinite for a one-sided bound.  `strict` is a
    bool or a pair (lower, upper).  With `elevate` the curve is first
    raised to that degree, which tightens the certificate.
    """
    lo, hi = _as_bound(lo), _as_bound(hi)
    if lo is not None and hi is not None and not lo < hi:
        raise ValueError(f"empty bound interval [{lo}, {hi}]")
    s_lo, s_hi = (strict, strict) if isinstance(strict, bool) else strict
    if elevate is not None:
        curve = elevate_to(curve, elevate)
    out = []
    for j, c in enumerate(curve.control_points):
        p = c if isinstance(c, PolyExpr) else PolyExpr.constant(c)
        group = f"{name}[{j}]"
        if lo is not None:
            out.append(Relation(p - lo, ">" if s_lo else ">=", f"{group}>lo", group))
        if hi is not None:
            out.append(Relation(p - hi, "<" if s_hi else "<=", f"{group}<hi", group))
    return out


def _single_var(c, where: str) -> str:
    if isinstance(c, PolyExpr) and len(c.names) == 1 and c == PolyExpr.variable(c.names[0]):
        return c.names[0]
    raise ValueError(f"control point {where} is {c}, not a free parameter")


def endpoint_conditions(curve: BezierCurve, order: int, t0_values: Sequence,
                        tf_values: Sequence) -> dict:
    """Pin leading and trailing control points from boundary derivatives.

    ``t0_values[i]`` and ``tf_values[i]`` are the i-th time derivatives of
    the flat output at the start and end, for ``i = 0..order``.  Returns
    ``{parameter: Fraction}``; apply it with ``curve.subs`` or pass it to
    `compile_system` as `fixed`.
    """
    N = curve.degree
    q = order
    if len(t0_values) != q + 1 or len(tf_values) != q + 1:
        raise ValueError(f"need {q + 1} boundary values on each side")
    if 2 * (q + 1) > N + 1:
        raise ValueError(f"degree {N} too low for {q + 1} conditions per endpoint")
    T = as_fraction(curve.horizon)
    c = curve.control_points
    fixed: dict = {}
    start: list = []
    end: list = []
    for i in range(q + 1):
        # i-th derivative at 0 is N!/(N-i)!/T^i * forward difference of order i
        scale = Fraction(math.factorial(N - i), math.factorial(N)) * T**i
        acc = as_fraction(t0_values[i]) * scale
        for k in range(i):
            acc -= (-1) ** (i - k) * binomial(i, k) * start[k]
        start.append(acc)
        fixed[_single_var(c[i], f"{i}")] = acc
        acc = as_fraction(tf_values[i]) * scale
        for k in range(i):
            acc -= (-1) ** k * binomial(i, k) * end[k]
        end.append(acc * (-1) ** i)
        fixed[_single_var(c[N - i], f"{N - i}")] = end[-1]
    return fixed


@dataclass
class ConstraintSystem:
    """Conjunction of relations over a parameter box.

    `box` maps each free parameter to ``(lo, hi)`` (Fractions, or +-inf);
    `fixed` records parameters pinned by endpoint conditions; `dropped`
    names relations that became tautologies after substitution.
    """

    relations: tuple
    box: dict
    fixed: dict = field(default_factory=dict)
    dropped: tuple = ()

    @property
    def parameters(self) -> tuple:
        return tuple(sorted(self.box, key=_natural_key))

    @property
    def groups(self) -> tuple:
        seen = []
        for r in self.relations:
            if r.group not in seen:
                seen.append(r.group)
        return tuple(seen)

    def is_finite(self) -> bool:
        return all(math.isfinite(lo) and math.isfinite(hi) for lo, hi in self.box.values())

    def bounds(self) -> list[tuple[float, float]]:
        return [(float(self.box[p][0]), float(self.box[p][1])) for p in self.parameters]

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "parameters": list(self.parameters),
            "box": [[_enc(self.box[p][0]), _enc(self.box[p][1])] for p in self.parameters],
            "fixed": {k: _enc(v) for k, v in sorted(self.fixed.items(), key=lambda kv: _natural_key(kv[0]))},
            "relations": [
                {"name": r.name, "group": r.group, "poly": str(r.poly), "op": r.op}
                for r in self.relations
            ],
            "dropped": list(self.dropped),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConstraintSystem":
        if data.get("schema") != SCHEMA:
            raise ValueError(f"unsupported schema {data.get('schema')!r}, expected {SCHEMA}")
        params = list(data["parameters"])
        if len(params) != len(data["box"]):
            raise ValueError("box and parameters differ in length")
        box = {p: (_dec(lo), _dec(hi)) for p, (lo, hi) in zip(params, data["box"])}
        rels = tuple(
            Relation(parse_poly(r["poly"]), r["op"], r.get("name", ""), r.get("group", ""))
            for r in data["relations"]
        )
        fixed = {k: _dec(v) for k, v in data.get("fixed", {}).items()}
        return cls(rels, box, fixed, tuple(data.get("dropped", ())))

    @classmethod
    def from_json(cls, text: str) -> "ConstraintSystem":
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, ConstraintSystem):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def _enc(v) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    f = as_fraction(v)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def _dec(s):
    if isinstance(s, str) and s.strip() in ("inf", "+inf", "-inf"):
        return math.inf if not s.strip().startswith("-") else -math.inf
    return as_fraction(s)


def compile_system(relations: Iterable[Relation], box: Mapping[str, tuple],
                   fixed: Mapping[str, object] | None = None) -> ConstraintSystem:
    """Substitute pinned parameters, drop tautologies, and validate.

    Raises `InfeasibleError` when a relation has become a false constant
    and `ValueError` when a relation uses a parameter missing from `box`.
    """
    fixed = {k: as_fraction(v) for k, v in (fixed or {}).items()}
    cbox = {}
    for name, (lo, hi) in box.items():
        if name in fixed:
            continue
        lo = -math.inf if lo is None else (_dec(lo) if isinstance(lo, str) else lo)
        hi = math.inf if hi is None else (_dec(hi) if isinstance(hi, str) else hi)
        lo = lo if isinstance(lo, float) and math.isinf(lo) else as_fraction(lo)
        hi = hi if isinstance(hi, float) and math.isinf(hi) else as_fraction(hi)
        if not lo < hi:
            raise ValueError(f"box for {name} is empty: [{lo}, {hi}]")
        cbox[name] = (lo, hi)
    kept, dropped, broken = [], [], []
    for r in relations:
        r = r.subs(fixed) if fixed else r
        if r.poly.is_constant():
            (dropped if r.holds(r.poly.constant_value()) else broken).append(r)
            continue
        undeclared = [n for n in r.poly.names if n not in cbox]
        if undeclared:
            raise ValueError(f"relation {r.name!r} uses undeclared parameters {undeclared}")
        kept.append(r)
    if broken:
        raise InfeasibleError(broken)
    return ConstraintSystem(tuple(kept), cbox, fixed, tuple(r.name for r in dropped))
