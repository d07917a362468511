"""Exact multivariate polynomials over named design parameters.

`PolyExpr` is the coefficient ring used for symbolic Bezier curves: control
points of state and input curves become closed-form polynomials in the
free control points of the flat outputs.  Coefficients are always
`fractions.Fraction`; floats are rejected so that symbolic results stay
coefficient-exact.

Polynomials render to a canonical text form such as
``4/7*a1^2 - 5/7*a1 + 12/7*a2 + 1/14`` which `parse_poly` reads back.
"""

from __future__ import annotations

import ast
import math
import re
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "PolyExpr",
    "UnboundParameterError",
    "as_fraction",
    "interval_pow",
    "parse_poly",
    "var",
    "variables",
]


class UnboundParameterError(KeyError):
    """Raised when an evaluation is missing values for some parameters."""

    def __init__(self, missing):
        self.missing = tuple(missing)
        super().__init__(f"unbound parameters: {', '.join(self.missing)}")

    def __str__(self):
        return self.args[0]


def _natural_key(name: str):
    return [int(tok) if tok.isdigit() else tok for tok in re.split(r"(\d+)", name)]


def as_fraction(value) -> Fraction:
    """Convert a number to an exact Fraction.

    Floats are read through their shortest decimal representation, so
    ``1.3`` becomes ``13/10`` rather than the nearest binary fraction.
    Strings such as ``"3/7"`` or ``"1e-3"`` are accepted as well.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (bool, np.bool_)):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, (int, np.integer, Rational)):
        return Fraction(int(value)) if isinstance(value, (int, np.integer)) else Fraction(value)
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"cannot convert {value!r} to an exact rational")
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} to Fraction")


class PolyExpr:
    """Sparse polynomial with rational coefficients.

    Terms are stored as a mapping from dense exponent tuples (one entry per
    name in `names`) to non-zero `Fraction` coefficients.  Instances are
    immutable and hashable.
    """

    __slots__ = ("_names", "_terms", "_hash")

    def __init__(self, terms: Mapping[tuple, Fraction] | None = None, names: Iterable[str] = ()):
        names = tuple(names)
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        canon = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != len(names):
                raise ValueError("exponent vector does not match parameter names")
            if any(e < 0 for e in exps):
                raise ValueError("negative exponent")
            coef = _coerce_coef(coef)
            if coef:
                canon[exps] = canon.get(exps, Fraction(0)) + coef
                if not canon[exps]:
                    del canon[exps]
        # drop names that never appear, keep natural order
        used = [i for i in range(len(names)) if any(e[i] for e in canon)]
        order = sorted(used, key=lambda i: _natural_key(names[i]))
        self._names = tuple(names[i] for i in order)
        self._terms = {tuple(e[i] for i in order): c for e, c in canon.items()}
        self._hash = None

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, value) -> "PolyExpr":
        return cls({(): as_fraction(value)})

    @classmethod
    def variable(cls, name: str) -> "PolyExpr":
        return cls({(1,): Fraction(1)}, (name,))

    # -- basic accessors ----------------------------------------------

    @property
    def names(self) -> tuple:
        """Parameters that actually occur in the polynomial."""
        return self._names

    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def is_constant(self) -> bool:
        return not self._names

    def constant_value(self) -> Fraction:
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return self._terms.get((), Fraction(0))

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(e) for e in self._terms)

    def coefficient(self, monomial: Mapping[str, int]) -> Fraction:
        """Coefficient of the monomial given as ``{name: exponent}``."""
        if any(n not in self._names for n, e in monomial.items() if e):
            return Fraction(0)
        exps = tuple(monomial.get(n, 0) for n in self._names)
        return self._terms.get(exps, Fraction(0))

    # -- ring operations ----------------------------------------------

    def _aligned(self, other: "PolyExpr"):
        names = tuple(sorted(set(self._names) | set(other._names), key=_natural_key))
        return names, _remap(self, names), _remap(other, names)

    def __add__(self, other):
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        names, a, b = self._aligned(other)
        out = dict(a)
        for e, c in b.items():
            out[e] = out.get(e, Fraction(0)) + c
        return PolyExpr(out, names)

    __radd__ = __add__

    def __neg__(self):
        return PolyExpr({e: -c for e, c in self._terms.items()}, self._names)

    def __pos__(self):
        return self

    def __sub__(self, other):
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        names, a, b = self._aligned(other)
        out: dict = {}
        for ea, ca in a.items():
            for eb, cb in b.items():
                e = tuple(x + y for x, y in zip(ea, eb))
                out[e] = out.get(e, Fraction(0)) + ca * cb
        return PolyExpr(out, names)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, PolyExpr):
            if not other.is_constant():
                raise TypeError("division by a non-constant polynomial")
            other = other.constant_value()
        d = _coerce_coef(other)
        if d == 0:
            raise ZeroDivisionError("polynomial division by zero")
        return PolyExpr({e: c / d for e, c in self._terms.items()}, self._names)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        out = PolyExpr.constant(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other):
        other = _lift(other)
        if other is NotImplemented:
            return NotImplemented
        return self._names == other._names and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self._names, frozenset(self._terms.items())))
        return self._hash

    def __bool__(self):
        return bool(self._terms)

    # -- evaluation -----------------------------------------------------

    def subs(self, bindings: Mapping[str, object]) -> "PolyExpr":
        """Partially substitute exact values; returns a polynomial."""
        vals = {n: as_fraction(v) for n, v in bindings.items() if n in self._names}
        keep = [n for n in self._names if n not in vals]
        keep_idx = [self._names.index(n) for n in keep]
        out: dict = {}
        for e, c in self._terms.items():
            for i, n in enumerate(self._names):
                if n in vals and e[i]:
                    c = c * vals[n] ** e[i]
            key = tuple(e[i] for i in keep_idx)
            out[key] = out.get(key, Fraction(0)) + c
        return PolyExpr(out, keep)

    def substitute(self, bindings: Mapping[str, object]) -> Fraction:
        """Evaluate exactly; every parameter must be bound."""
        missing = [n for n in self._names if n not in bindings]
        if missing:
            raise UnboundParameterError(missing)
        return self.subs(bindings).constant_value()

    def evaluate(self, bindings: Mapping[str, object]):
        """Floating-point evaluation; values may be numpy arrays."""
        missing = [n for n in self._names if n not in bindings]
        if missing:
            raise UnboundParameterError(missing)
        vals = [np.asarray(bindings[n], dtype=float) for n in self._names]
        total = 0.0
        for e, c in self._terms.items():
            term = float(c)
            for v, k in zip(vals, e):
                if k:
                    term = term * v**k
            total = total + term
        return total

    def interval_eval(self, box: Mapping[str, tuple]) -> tuple[float, float]:
        """Sound enclosure of the range of the polynomial over a box.

        Each monomial is enclosed exactly per variable (even powers over
        an interval straddling zero start at 0), the per-variable ranges
        are multiplied, and terms are summed.  All float operations are
        rounded outward, so the result always contains the true range.
        """
        missing = [n for n in self._names if n not in box]
        if missing:
            raise UnboundParameterError(missing)
        ivs = []
        for n in self._names:
            lo, hi = box[n]
            lo, hi = float(lo), float(hi)
            if lo > hi:
                raise ValueError(f"empty interval for {n}: [{lo}, {hi}]")
            ivs.append((lo, hi))
        return IntervalPoly(self).enclose(ivs)

    # -- rendering ------------------------------------------------------

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for e in sorted(self._terms, key=lambda e: (-sum(e), tuple(-x for x in e))):
            c = self._terms[e]
            mono = "*".join(
                n if k == 1 else f"{n}^{k}" for n, k in zip(self._names, e) if k
            )
            mag = abs(c)
            if mono and mag == 1:
                body = mono
            elif mono:
                body = f"{_fmt_frac(mag)}*{mono}"
            else:
                body = _fmt_frac(mag)
            if not parts:
                parts.append(("-" if c < 0 else "") + body)
            else:
                parts.append((" - " if c < 0 else " + ") + body)
        return "".join(parts)

    def __repr__(self):
        return f"PolyExpr({str(self)!r})"


def _fmt_frac(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def _coerce_coef(value) -> Fraction:
    if isinstance(value, (float, np.floating)):
        raise TypeError("floats cannot enter an exact polynomial; convert with as_fraction()")
    return as_fraction(value)


def _lift(value):
    if isinstance(value, PolyExpr):
        return value
    if isinstance(value, (float, np.floating)):
        raise TypeError("floats cannot enter an exact polynomial; convert with as_fraction()")
    if isinstance(value, (int, np.integer, Rational)) and not isinstance(value, bool):
        return PolyExpr.constant(value)
    return NotImplemented


def _remap(p: PolyExpr, names: tuple) -> dict:
    idx = [names.index(n) for n in p.names]
    out = {}
    for e, c in p._terms.items():
        full = [0] * len(names)
        for i, k in zip(idx, e):
            full[i] = k
        out[tuple(full)] = c
    return out


def var(name: str) -> PolyExpr:
    return PolyExpr.variable(name)


def variables(*names: str) -> tuple:
    """Create several variables at once: ``a1, a2 = variables("a1", "a2")``."""
    return tuple(PolyExpr.variable(n) for n in names)


# ---------------------------------------------------------------------------
# Outward-rounded interval arithmetic

_EPS = 2.0**-52


def _down(x: float) -> float:
    return math.nextafter(x, -math.inf)


def _up(x: float) -> float:
    return math.nextafter(x, math.inf)


def interval_pow(lo: float, hi: float, k: int) -> tuple[float, float]:
    """Exact range of ``x**k`` for x in [lo, hi], widened for rounding."""
    if k == 0:
        return 1.0, 1.0
    if k == 1:
        return lo, hi
    a, b = lo**k, hi**k
    if k % 2 == 0:
        if lo >= 0:
            r = (a, b)
        elif hi <= 0:
            r = (b, a)
        else:
            r = (0.0, max(a, b))
    else:
        r = (a, b)
    # k-1 roundings of relative size eps/2 each
    slack = k * _EPS
    rlo = r[0] - abs(r[0]) * slack
    rhi = r[1] + abs(r[1]) * slack
    if r[0] == 0.0:
        rlo = 0.0
    return _down(rlo), _up(rhi)


def _imul(a: tuple, b: tuple) -> tuple:
    p = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return _down(min(p)), _up(max(p))


class IntervalPoly:
    """A polynomial precompiled for repeated box enclosures.

    The enclosure takes intervals in the order of `names`.
    """

    __slots__ = ("names", "_terms")

    def __init__(self, poly: PolyExpr, names: Iterable[str] | None = None):
        self.names = tuple(names) if names is not None else poly.names
        pos = {n: i for i, n in enumerate(self.names)}
        missing = [n for n in poly.names if n not in pos]
        if missing:
            raise UnboundParameterError(missing)
        terms = []
        for e, c in poly.terms.items():
            cf = float(c)
            clo = cf if Fraction(cf) == c else _down(cf)
            chi = cf if Fraction(cf) == c else _up(cf)
            powers = tuple((pos[n], k) for n, k in zip(poly.names, e) if k)
            terms.append((clo, chi, powers))
        self._terms = terms

    def enclose(self, ivs) -> tuple[float, float]:
        lo = hi = 0.0
        for clo, chi, powers in self._terms:
            t = (clo, chi)
            for i, k in powers:
                t = _imul(t, interval_pow(ivs[i][0], ivs[i][1], k))
            lo = _down(lo + t[0])
            hi = _up(hi + t[1])
        return lo, hi


# ---------------------------------------------------------------------------
# Parsing the canonical text form (and ordinary arithmetic expressions)

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)


def parse_poly(text: str) -> PolyExpr:
    """Parse a polynomial written with ``+ - * / ^`` (``**`` also works).

    Division is only allowed by constants; numeric literals are read
    exactly, so ``0.1`` means ``1/10``.
    """
    tree = ast.parse(text.replace("^", "**"), mode="eval")
    return _build(tree.body)


def _build(node) -> PolyExpr:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return PolyExpr.constant(as_fraction(node.value) if isinstance(node.value, int)
                                 else Fraction(repr(node.value)))
    if isinstance(node, ast.Name):
        return PolyExpr.variable(node.id)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _build(node.operand)
        return -inner if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
        left = _build(node.left)
        if isinstance(node.op, ast.Pow):
            right = _build(node.right)
            k = right.constant_value()
            if k.denominator != 1 or k < 0:
                raise ValueError("exponents must be non-negative integers")
            return left ** int(k)
        right = _build(node.right)
        if isinstance(node.op, ast.Add):
            return left + right
        if isinstance(node.op, ast.Sub):
            return left - right
        if isinstance(node.op, ast.Mult):
            return left * right
        if not right.is_constant():
            raise ValueError("division is only allowed by constants")
        return left / right
    raise ValueError(f"unsupported syntax in polynomial: {ast.dump(node)}")
