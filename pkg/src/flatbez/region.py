"""Certified box approximations of feasible control-point regions.

`branch_and_prune` bisects the parameter box and labels each sub-box with
interval enclosures of the relation polynomials:

* ``inside``: every relation holds on the whole box (strict relations are
  certified as their closed counterparts);
* ``outside``: some relation fails on the whole box;
* ``boundary``: undecided at the minimum width.

Boxes are dyadic sub-boxes of the parameter box, split along the widest
dimension relative to the box extent (ties to the lowest index).  The
split sequence does not depend on `min_width`, so refining never loses
certified volume.

Also here: exact membership checks, a seeded Monte-Carlo oracle, and the
closed-form region descriptions used as reference fixtures.
"""

from __future__ import annotations

import ast
import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .constraints import ConstraintSystem, Relation
from .sympoly import IntervalPoly, as_fraction

__all__ = [
    "Cell",
    "Fixture",
    "MembershipReport",
    "OracleResult",
    "RegionApprox",
    "branch_and_prune",
    "cad_fixture_check",
    "classify_box",
    "load_fixture",
    "membership",
    "sample_oracle",
]

INSIDE, OUTSIDE, UNKNOWN = "inside", "outside", "unknown"


# ---------------------------------------------------------------------------
# Box classification


def _compile(sys: ConstraintSystem):
    names = sys.parameters
    return [IntervalPoly(r.poly, names) for r in sys.relations]


def _verdict(rel: Relation, lo: float, hi: float) -> str:
    op = rel.op
    if op in ("<", "<="):
        if hi <= 0:
            return INSIDE
        if lo > 0 or (op == "<" and lo >= 0):
            return OUTSIDE
    elif op in (">", ">="):
        if lo >= 0:
            return INSIDE
        if hi < 0 or (op == ">" and hi <= 0):
            return OUTSIDE
    elif op == "==":
        if lo == hi == 0:
            return INSIDE
        if lo > 0 or hi < 0:
            return OUTSIDE
    else:
        if lo > 0 or hi < 0:
            return INSIDE
        if lo == hi == 0:
            return OUTSIDE
    return UNKNOWN


def _touches(rel: Relation, lo: float, hi: float) -> bool:
    return rel.strict and (hi == 0 if rel.op == "<" else lo == 0)


def _classify(sys, compiled, box, active):
    """Returns (status, still-active indices, violated index, closure flag)."""
    pending = []
    closure = False
    for i in active:
        lo, hi = compiled[i].enclose(box)
        v = _verdict(sys.relations[i], lo, hi)
        if v == OUTSIDE:
            return OUTSIDE, (), i, False
        if v == UNKNOWN:
            pending.append(i)
        elif _touches(sys.relations[i], lo, hi):
            closure = True
    if pending:
        return UNKNOWN, tuple(pending), None, False
    return INSIDE, (), None, closure


def _as_box(sys: ConstraintSystem, box) -> list:
    if isinstance(box, Mapping):
        box = [box[p] for p in sys.parameters]
    out = [(float(lo), float(hi)) for lo, hi in box]
    if len(out) != len(sys.parameters):
        raise ValueError("box dimension does not match the system")
    return out


def classify_box(sys: ConstraintSystem, box) -> str:
    """``"inside"``, ``"outside"`` or ``"unknown"`` for one box.

    `box` is a sequence of (lo, hi) in parameter order or a mapping.
    """
    b = _as_box(sys, box)
    status, *_ = _classify(sys, _compile(sys), b, range(len(sys.relations)))
    return status


# ---------------------------------------------------------------------------
# Branch and prune


@dataclass(frozen=True)
class Cell:
    bounds: tuple
    depth: int
    closure: bool = False
    violated: str | None = None

    @property
    def volume(self) -> float:
        return math.prod(hi - lo for lo, hi in self.bounds)

    def contains(self, point) -> bool:
        return all(lo <= x <= hi for x, (lo, hi) in zip(point, self.bounds))


@dataclass
class RegionApprox:
    parameters: tuple
    domain: tuple
    inside: list = field(default_factory=list)
    outside: list = field(default_factory=list)
    boundary: list = field(default_factory=list)
    pending: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def locate(self, point) -> str | None:
        """Status of the cell holding `point` (first match on shared faces)."""
        for status in ("inside", "outside", "boundary", "pending"):
            for c in getattr(self, status):
                if c.contains(point):
                    return status
        return None

    def inside_volume(self) -> float:
        return math.fsum(c.volume for c in self.inside)

    def to_dict(self) -> dict:
        def cells(lst, status):
            return [
                {"status": status, "bounds": [[lo, hi] for lo, hi in c.bounds], "depth": c.depth,
                 "closure": c.closure, "violated": c.violated}
                for c in lst
            ]
        return {
            "schema": "flatbez.region/1",
            "parameters": list(self.parameters),
            "domain": [list(b) for b in self.domain],
            "stats": self.stats,
            "boxes": cells(self.inside, "inside") + cells(self.outside, "outside")
            + cells(self.boundary, "boundary") + cells(self.pending, "pending"),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["status", "depth", "closure", "violated"]
        for p in self.parameters:
            head += [f"{p}_lo", f"{p}_hi"]
        w.writerow(head)
        for status in ("inside", "outside", "boundary", "pending"):
            for c in getattr(self, status):
                row = [status, c.depth, int(c.closure), c.violated or ""]
                for lo, hi in c.bounds:
                    row += [repr(lo), repr(hi)]
                w.writerow(row)
        return buf.getvalue()


def _split_dim(box, extent) -> int:
    best, best_w = 0, -1.0
    for i, ((lo, hi), e) in enumerate(zip(box, extent)):
        w = (hi - lo) / e
        if w > best_w:
            best, best_w = i, w
    return best


def branch_and_prune(sys: ConstraintSystem, min_width: float, budget: int = 1_000_000,
                     box=None) -> RegionApprox:
    """Inner/outer box approximation of the feasible set of `sys`.

    Parameters
    ----------
    sys : ConstraintSystem
        System with a finite box (or pass `box` explicitly).
    min_width : float
        Boxes whose widest side is at most this are not split further.
    budget : int
        Maximum number of boxes examined; on exhaustion the unexplored
        boxes are returned in ``pending`` and ``stats["partial"]`` is set.
    """
    if not min_width > 0:
        raise ValueError("min_width must be positive")
    root = _as_box(sys, box if box is not None else sys.bounds())
    if not all(math.isfinite(v) for b in root for v in b):
        raise ValueError("branch and prune needs a finite parameter box")
    extent = [hi - lo for lo, hi in root]
    compiled = _compile(sys)
    out = RegionApprox(tuple(sys.parameters), tuple(tuple(b) for b in root))
    stack = [(tuple(root), tuple(range(len(sys.relations))), 0)]
    examined = 0
    max_depth = 0
    while stack:
        if examined >= budget:
            break
        box, active, depth = stack.pop()
        examined += 1
        max_depth = max(max_depth, depth)
        status, active, bad, closure = _classify(sys, compiled, box, active)
        if status == INSIDE:
            out.inside.append(Cell(box, depth, closure))
        elif status == OUTSIDE:
            out.outside.append(Cell(box, depth, violated=sys.relations[bad].name))
        elif max(hi - lo for lo, hi in box) <= min_width:
            out.boundary.append(Cell(box, depth))
        else:
            d = _split_dim(box, extent)
            lo, hi = box[d]
            mid = 0.5 * (lo + hi)
            left = box[:d] + ((lo, mid),) + box[d + 1:]
            right = box[:d] + ((mid, hi),) + box[d + 1:]
            stack.append((right, active, depth + 1))
            stack.append((left, active, depth + 1))
    out.pending = [Cell(b, d) for b, _, d in stack]
    for lst in (out.inside, out.outside, out.boundary, out.pending):
        lst.sort(key=lambda c: c.bounds)
    total = math.prod(extent)
    vol = {k: math.fsum(c.volume for c in getattr(out, k))
           for k in ("inside", "outside", "boundary", "pending")}
    out.stats = {
        "n_inside": len(out.inside),
        "n_outside": len(out.outside),
        "n_boundary": len(out.boundary),
        "n_pending": len(out.pending),
        "inside_volume": vol["inside"],
        "outside_volume": vol["outside"],
        "boundary_volume": vol["boundary"],
        "pending_volume": vol["pending"],
        "total_volume": total,
        "inside_fraction": vol["inside"] / total,
        "outer_fraction": (total - vol["outside"]) / total,
        "max_depth": max_depth,
        "boxes_examined": examined,
        "min_width": min_width,
        "partial": bool(stack),
    }
    return out


# ---------------------------------------------------------------------------
# Point checks and sampling


@dataclass
class MembershipReport:
    feasible: bool
    rows: list
    box_violations: list

    def violated(self) -> list:
        return [r for r in self.rows if not r["ok"]]


def _point_map(sys: ConstraintSystem, point) -> dict:
    if isinstance(point, Mapping):
        missing = [p for p in sys.parameters if p not in point]
        if missing:
            raise ValueError(f"point is missing {missing}")
        return {p: as_fraction(point[p]) for p in sys.parameters}
    point = list(point)
    if len(point) != len(sys.parameters):
        raise ValueError(
            f"point has {len(point)} coordinates, system has {len(sys.parameters)} parameters"
        )
    return {p: as_fraction(v) for p, v in zip(sys.parameters, point)}


def membership(sys: ConstraintSystem, point) -> MembershipReport:
    """Exact rational check of every relation and of the box."""
    vals = _point_map(sys, point)
    box_bad = [
        p for p in sys.parameters
        if not (sys.box[p][0] <= vals[p] <= sys.box[p][1])
    ]
    rows = []
    for r in sys.relations:
        v = r.poly.substitute(vals)
        rows.append({"name": r.name, "group": r.group, "op": r.op, "value": v,
                     "slack": r.slack(v), "ok": r.holds(v)})
    ok = not box_bad and all(row["ok"] for row in rows)
    return MembershipReport(ok, rows, box_bad)


_NP_CMP = {
    "<": np.less, "<=": np.less_equal, ">": np.greater,
    ">=": np.greater_equal, "==": np.equal, "!=": np.not_equal,
}


def feasible_mask(sys: ConstraintSystem, points: np.ndarray) -> np.ndarray:
    """Float evaluation of all relations at rows of `points`."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    env = {p: points[:, i] for i, p in enumerate(sys.parameters)}
    mask = np.ones(len(points), dtype=bool)
    for r in sys.relations:
        mask &= _NP_CMP[r.op](np.broadcast_to(r.poly.evaluate(env), mask.shape), 0.0)
    return mask


@dataclass
class OracleResult:
    fraction: float
    n: int
    stderr: float
    feasible: np.ndarray
    infeasible: np.ndarray


def sample_oracle(sys: ConstraintSystem, n: int, seed: int = 0, keep: int = 10) -> OracleResult:
    """Uniform Monte-Carlo estimate of the feasible fraction of the box."""
    if not sys.is_finite():
        raise ValueError("sampling needs a finite parameter box")
    rng = np.random.default_rng(seed)
    b = np.array(sys.bounds())
    pts = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((n, len(b)))
    mask = feasible_mask(sys, pts) if sys.relations else np.ones(n, dtype=bool)
    frac = float(mask.mean()) if n else 0.0
    se = math.sqrt(frac * (1 - frac) / n) if n else 0.0
    return OracleResult(frac, n, se, pts[mask][:keep], pts[~mask][:keep])


# ---------------------------------------------------------------------------
# Closed-form region fixtures
#
# A fixture is JSON:
#   {"name": ..., "variables": ["a1", "a2"], "box": [[lo, hi], ...],
#    "any": [["0 < a1 <= 0.115563", "-a1 < a2 < 1.33333"], ...]}
# The region is the union of the listed clauses; each clause is a
# conjunction of (possibly chained) comparisons.  Expressions use
# + - * / ** (or ^), unary minus, numbers, variable names and sqrt().

_BIN = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
        ast.Div: np.divide, ast.Pow: np.power}
_CMPOPS = {ast.Lt: np.less, ast.LtE: np.less_equal, ast.Gt: np.greater,
           ast.GtE: np.greater_equal, ast.Eq: np.equal, ast.NotEq: np.not_equal}
_FUNCS = {"sqrt": np.sqrt}


def _num(node, env):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name):
        if node.id not in env:
            raise KeyError(f"unknown variable {node.id!r} in fixture")
        return env[node.id]
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _num(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BIN:
        return _BIN[type(node.op)](_num(node.left, env), _num(node.right, env))
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS and len(node.args) == 1):
        return _FUNCS[node.func.id](_num(node.args[0], env))
    raise ValueError(f"unsupported fixture syntax: {ast.dump(node)}")


class _Atom:
    """One chained comparison such as ``0 < a1 <= 0.115563``."""

    def __init__(self, text: str):
        tree = ast.parse(text.replace("^", "**"), mode="eval").body
        if not isinstance(tree, ast.Compare):
            raise ValueError(f"fixture atom is not a comparison: {text!r}")
        for op in tree.ops:
            if type(op) not in _CMPOPS:
                raise ValueError(f"unsupported comparison in {text!r}")
        self.text = text
        self.tree = tree

    def eval(self, env):
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = [_num(self.tree.left, env)] + [_num(c, env) for c in self.tree.comparators]
            ok = True
            gap = np.inf
            for op, a, b in zip(self.tree.ops, vals[:-1], vals[1:]):
                ok = ok & _CMPOPS[type(op)](a, b)
                d = np.abs(np.asarray(a) - np.asarray(b))
                gap = np.fmin(gap, np.where(np.isnan(d), np.inf, d))
        return ok, gap


@dataclass
class Fixture:
    name: str
    variables: tuple
    box: tuple
    clauses: list
    source: str = ""

    @classmethod
    def from_dict(cls, data: Mapping) -> "Fixture":
        clauses = [[_Atom(a) for a in clause] for clause in data["any"]]
        return cls(data.get("name", ""), tuple(data["variables"]),
                   tuple(tuple(float(v) for v in b) for b in data["box"]),
                   clauses, data.get("source", ""))

    def evaluate(self, points: np.ndarray):
        """Membership and distance to the nearest atom boundary per point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        env = {v: points[:, i] for i, v in enumerate(self.variables)}
        inside = np.zeros(len(points), dtype=bool)
        gap = np.full(len(points), np.inf)
        for clause in self.clauses:
            ok = np.ones(len(points), dtype=bool)
            for atom in clause:
                a_ok, a_gap = atom.eval(env)
                ok &= np.broadcast_to(a_ok, ok.shape)
                gap = np.fmin(gap, np.broadcast_to(a_gap, gap.shape))
            inside |= ok
        return inside, gap

    def contains(self, point) -> bool:
        return bool(self.evaluate(np.asarray(point, dtype=float))[0][0])


def load_fixture(name_or_path: str) -> Fixture:
    """Load a fixture by bundled name (e.g. ``"vehicle_deg3"``) or file path."""
    if name_or_path.endswith(".json"):
        with open(name_or_path) as fh:
            return Fixture.from_dict(json.load(fh))
    ref = resources.files("flatbez") / "data" / "fixtures" / f"{name_or_path}.json"
    return Fixture.from_dict(json.loads(ref.read_text()))


@dataclass
class FixtureAgreement:
    ratio: float
    compared: int
    excluded: int
    disagreements: np.ndarray


def cad_fixture_check(fixture: Fixture, sys: ConstraintSystem, n: int = 10_000,
                      seed: int = 0, tol: float = 1e-6) -> FixtureAgreement:
    """Compare fixture membership with direct relation evaluation.

    Points are drawn uniformly from the fixture box; points within `tol`
    of any fixture comparison boundary are left out of the ratio.
    """
    rng = np.random.default_rng(seed)
    b = np.array(fixture.box)
    pts = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((n, len(b)))
    order = [fixture.variables.index(p) for p in sys.parameters]
    fx, gap = fixture.evaluate(pts)
    direct = feasible_mask(sys, pts[:, order]) if sys.relations else np.ones(n, dtype=bool)
    keep = gap > tol
    agree = (fx == direct) & keep
    compared = int(keep.sum())
    ratio = float(agree.sum() / compared) if compared else 1.0
    return FixtureAgreement(ratio, compared, n - compared, pts[keep & (fx != direct)])
