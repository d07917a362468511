"""Bezier curves in the Bernstein basis over a generic coefficient ring.

A `BezierCurve` holds ``N + 1`` control points and a horizon ``T``.  The
curve is a function of physical time ``t = T * tau`` with ``tau`` in
[0, 1].  Control points may be Fractions (exact work), floats
(simulation) or `PolyExpr` (symbolic control points); every operation
here only uses ``+``, ``-`` and ``*`` on them, plus multiplication by
exact rationals.

The derivative applies the ``1/T`` factor once per order, so derivative
curves are derivatives with respect to physical time.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any, Sequence

import numpy as np

from .sympoly import PolyExpr, as_fraction

__all__ = [
    "MAX_DEGREE",
    "BezierCurve",
    "add",
    "bernstein",
    "bernstein_sum",
    "binomial",
    "degree_elevate",
    "derivative",
    "elevate_to",
    "eval_curve",
    "minmax_bounds",
    "mul",
    "second_differences",
    "sub",
]

MAX_DEGREE = 64


@lru_cache(maxsize=None)
def _pascal() -> tuple:
    rows = [(1,)]
    for n in range(1, MAX_DEGREE + 1):
        prev = rows[-1]
        rows.append(tuple([1] + [prev[k - 1] + prev[k] for k in range(1, n)] + [1]))
    return tuple(rows)


def binomial(n: int, k: int) -> int:
    """Binomial coefficient from Pascal's triangle, ``n <= 64``."""
    if n < 0 or n > MAX_DEGREE:
        raise ValueError(f"degree {n} outside supported range [0, {MAX_DEGREE}]")
    if k < 0 or k > n:
        return 0
    return _pascal()[n][k]


def _exact_horizon(T):
    if isinstance(T, (int, np.integer)) and not isinstance(T, bool):
        return Fraction(int(T))
    return T


def _is_exact(x) -> bool:
    return isinstance(x, (Fraction, PolyExpr, int)) and not isinstance(x, bool)


@dataclass(frozen=True)
class BezierCurve:
    """Scalar Bezier curve ``sum_j c_j B_{j,N}(t / T)``.

    Parameters
    ----------
    control_points : sequence
        The ``N + 1`` control points, in any ring supporting ``+``, ``-``
        and ``*``.
    horizon : positive number, optional
        Time span ``T`` of the curve, default 1.
    """

    control_points: tuple
    horizon: Any = Fraction(1)

    def __init__(self, control_points: Sequence, horizon=Fraction(1)):
        pts = tuple(control_points)
        if not pts:
            raise ValueError("a Bezier curve needs at least one control point")
        if len(pts) - 1 > MAX_DEGREE:
            raise ValueError(f"degree {len(pts) - 1} exceeds {MAX_DEGREE}")
        horizon = _exact_horizon(horizon)
        if not horizon > 0:
            raise ValueError(f"horizon must be positive, got {horizon!r}")
        object.__setattr__(self, "control_points", pts)
        object.__setattr__(self, "horizon", horizon)

    @property
    def degree(self) -> int:
        return len(self.control_points) - 1

    def __len__(self):
        return len(self.control_points)

    def __getitem__(self, j):
        return self.control_points[j]

    def __call__(self, tau):
        return eval_curve(self, tau)

    def at_time(self, t):
        """Evaluate at physical time ``t`` in [0, T]."""
        return eval_curve(self, np.asarray(t, dtype=float) / float(self.horizon)
                          if not _is_exact(t) else Fraction(t) / self.horizon)

    def map(self, fn) -> "BezierCurve":
        """Apply `fn` to every control point (e.g. substitution)."""
        return BezierCurve([fn(c) for c in self.control_points], self.horizon)

    def subs(self, bindings) -> "BezierCurve":
        """Bind symbolic parameters; fully bound points become Fractions."""
        def one(c):
            if isinstance(c, PolyExpr):
                p = c.subs(bindings)
                return p.constant_value() if p.is_constant() else p
            return c
        return self.map(one)

    def to_float(self) -> "BezierCurve":
        def one(c):
            if isinstance(c, PolyExpr):
                return float(c.constant_value())
            return float(c)
        return BezierCurve([one(c) for c in self.control_points], float(self.horizon))

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, BezierCurve):
            return mul(self, other)
        return self.map(lambda c: c * other)

    __rmul__ = __mul__

    def __neg__(self):
        return self.map(lambda c: -c)


def bernstein(j: int, N: int, tau):
    """Bernstein basis polynomial ``B_{j,N}(tau)``."""
    if not 0 <= j <= N:
        return 0 * tau
    return binomial(N, j) * (1 - tau) ** (N - j) * tau**j


def _check_tau(tau):
    if isinstance(tau, (Fraction, int)) and not isinstance(tau, bool):
        if not 0 <= tau <= 1:
            raise ValueError(f"tau={tau} outside [0, 1]")
        return tau
    arr = np.asarray(tau, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or np.any(np.isnan(arr)):
        raise ValueError("tau outside [0, 1]")
    return arr if arr.ndim else float(arr)


def eval_curve(curve: BezierCurve, tau):
    """De Casteljau evaluation at ``tau`` (scalar or numpy array)."""
    tau = _check_tau(tau)
    pts = list(curve.control_points)
    if isinstance(tau, np.ndarray):
        if any(isinstance(p, PolyExpr) for p in pts):
            raise TypeError("array evaluation needs numeric control points")
        pts = [np.full(tau.shape, float(p)) for p in pts]
    s = 1 - tau
    for r in range(curve.degree):
        pts = [s * pts[j] + tau * pts[j + 1] for j in range(curve.degree - r)]
    return pts[0]


def bernstein_sum(curve: BezierCurve, tau):
    """Direct evaluation ``sum_j c_j B_{j,N}(tau)``; an independent check on
    de Casteljau."""
    tau = _check_tau(tau)
    N = curve.degree
    total = 0
    for j, c in enumerate(curve.control_points):
        total = total + c * bernstein(j, N, tau)
    return total


def degree_elevate(curve: BezierCurve, r: int = 1) -> BezierCurve:
    """Raise the degree by ``r`` without changing the function."""
    if r < 1:
        raise ValueError("elevation amount must be >= 1")
    n = curve.degree
    if n + r > MAX_DEGREE:
        raise ValueError(f"elevated degree {n + r} exceeds {MAX_DEGREE}")
    c = curve.control_points
    out = []
    for j in range(n + r + 1):
        acc = 0
        denom = binomial(n + r, j)
        for i in range(max(0, j - r), min(n, j) + 1):
            acc = acc + Fraction(binomial(n, i) * binomial(r, j - i), denom) * c[i]
        out.append(acc)
    return BezierCurve(out, curve.horizon)


def elevate_to(curve: BezierCurve, degree: int) -> BezierCurve:
    if degree < curve.degree:
        raise ValueError(f"cannot lower degree {curve.degree} to {degree}")
    if degree == curve.degree:
        return curve
    return degree_elevate(curve, degree - curve.degree)


def _same_horizon(f: BezierCurve, g: BezierCurve):
    if f.horizon != g.horizon:
        raise ValueError(f"horizon mismatch: {f.horizon} vs {g.horizon}")


def add(f: BezierCurve, g: BezierCurve) -> BezierCurve:
    _same_horizon(f, g)
    n = max(f.degree, g.degree)
    f, g = elevate_to(f, n), elevate_to(g, n)
    return BezierCurve([a + b for a, b in zip(f.control_points, g.control_points)], f.horizon)


def sub(f: BezierCurve, g: BezierCurve) -> BezierCurve:
    return add(f, -g)


def mul(f: BezierCurve, g: BezierCurve) -> BezierCurve:
    """Product curve of degree ``m + n``."""
    _same_horizon(f, g)
    m, n = f.degree, g.degree
    if m + n > MAX_DEGREE:
        raise ValueError(f"product degree {m + n} exceeds {MAX_DEGREE}")
    fc, gc = f.control_points, g.control_points
    out = []
    for j in range(m + n + 1):
        acc = 0
        denom = binomial(m + n, j)
        for i in range(max(0, j - n), min(m, j) + 1):
            acc = acc + Fraction(binomial(m, i) * binomial(n, j - i), denom) * (fc[i] * gc[j - i])
        out.append(acc)
    return BezierCurve(out, f.horizon)


def derivative(curve: BezierCurve, q: int = 1) -> BezierCurve:
    """Derivative of order ``q`` with respect to physical time."""
    if q < 0:
        raise ValueError("derivative order must be non-negative")
    if q > curve.degree:
        raise ValueError(f"derivative order {q} exceeds degree {curve.degree}")
    pts = list(curve.control_points)
    T = curve.horizon
    N = curve.degree
    for k in range(1, q + 1):
        factor = Fraction(N - k + 1) / T if _is_exact(T) else (N - k + 1) / T
        pts = [factor * (pts[j + 1] - pts[j]) for j in range(len(pts) - 1)]
    return BezierCurve(pts, T)


def second_differences(curve: BezierCurve) -> list:
    c = curve.control_points
    if curve.degree < 2:
        raise ValueError("second differences need degree >= 2")
    return [c[j - 1] - 2 * c[j] + c[j + 1] for j in range(1, curve.degree)]


def minmax_bounds(curve: BezierCurve) -> tuple:
    """Min-max bounding interval from the convex hull of control points."""
    pts = curve.control_points
    if any(isinstance(p, PolyExpr) for p in pts):
        raise TypeError("min-max bounds need numeric control points")
    return min(pts), max(pts)


def symbolic_curve(spec: Sequence, horizon=1) -> BezierCurve:
    """Curve from a template such as ``[0, "a1", "a2", "a3", 1]``.

    Strings that parse as numbers become exact constants, other strings
    become parameters.
    """
    pts = []
    for item in spec:
        if isinstance(item, PolyExpr):
            pts.append(item)
            continue
        if isinstance(item, str):
            try:
                pts.append(PolyExpr.constant(as_fraction(item)))
                continue
            except (ValueError, ZeroDivisionError):
                pts.append(PolyExpr.variable(item.strip()))
                continue
        pts.append(PolyExpr.constant(as_fraction(item)))
    return BezierCurve(pts, as_fraction(horizon))


__all__.append("symbolic_curve")
