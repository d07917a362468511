"""Control polygons and quantitative envelopes of scalar Bezier curves.

The envelope of a curve is a pair of piecewise-linear functions on the
Greville abscissae ``j / N`` that bracket the curve.  Their offset from the
control polygon is the sharp curve-to-polygon distance bound
``mu(N) * max |second difference|`` with ``mu(N) = floor(N/2) ceil(N/2) / (2N)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .bezier import MAX_DEGREE, BezierCurve, degree_elevate, second_differences

__all__ = [
    "ControlPolygon",
    "Envelope",
    "EnvelopeRefinementError",
    "build_envelope",
    "dmax",
    "envelope_csv",
    "mu_inf",
    "obstacle_clear",
    "refine_envelope",
]


class EnvelopeRefinementError(RuntimeError):
    def __init__(self, achieved: float, degree: int):
        self.achieved = achieved
        self.degree = degree
        super().__init__(f"degree cap {degree} reached with gap {achieved:.6g}")


@dataclass(frozen=True)
class ControlPolygon:
    """Piecewise-linear function through ``(j/N, values[j])``."""

    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def abscissae(self) -> np.ndarray:
        n = len(self.values) - 1
        if n == 0:
            return np.array([0.0])
        return np.arange(n + 1) / n

    def __call__(self, tau):
        if len(self.values) == 1:
            return np.full(np.shape(tau), self.values[0]) if np.ndim(tau) else self.values[0]
        return np.interp(tau, self.abscissae, self.values)


@dataclass(frozen=True)
class Envelope:
    lower: ControlPolygon
    upper: ControlPolygon
    dmax: float

    @property
    def degree(self) -> int:
        return len(self.lower.values) - 1

    def contains(self, tau, value) -> np.ndarray:
        return (self.lower(tau) <= value) & (value <= self.upper(tau))


def mu_inf(N: int) -> float:
    if N < 1:
        return 0.0
    return (N // 2) * ((N + 1) // 2) / (2 * N)


def dmax(curve: BezierCurve) -> float:
    """Bound on the sup-distance between a curve and its control polygon."""
    if curve.degree < 2:
        return 0.0
    d2 = second_differences(curve.to_float())
    return mu_inf(curve.degree) * max(abs(v) for v in d2)


def polygon(curve: BezierCurve) -> ControlPolygon:
    return ControlPolygon(curve.to_float().control_points)


def build_envelope(curve: BezierCurve) -> Envelope:
    c = [float(v) for v in curve.to_float().control_points]
    d = dmax(curve)
    lo = [v - d for v in c]
    hi = [v + d for v in c]
    lo[0] = hi[0] = c[0]
    lo[-1] = hi[-1] = c[-1]
    cmin, cmax = min(c), max(c)
    lo = [max(v, cmin) for v in lo]
    hi = [min(v, cmax) for v in hi]
    return Envelope(ControlPolygon(lo), ControlPolygon(hi), d)


def refine_envelope(curve: BezierCurve, target_gap: float, max_degree: int = MAX_DEGREE) -> Envelope:
    """Elevate the degree until the distance bound drops to `target_gap`."""
    if not target_gap > 0:
        raise ValueError("target_gap must be positive")
    cur = curve.to_float()
    while dmax(cur) > target_gap:
        if cur.degree >= max_degree:
            raise EnvelopeRefinementError(dmax(cur), cur.degree)
        cur = degree_elevate(cur, 1)
    return build_envelope(cur)


def _window_breaks(env_x: Envelope, env_y: Envelope, t1: float, t2: float) -> np.ndarray:
    pts = np.concatenate([env_x.lower.abscissae, env_y.lower.abscissae, [t1, t2]])
    pts = pts[(pts >= t1) & (pts <= t2)]
    return np.unique(pts)


def _linear_feasible(a0, a1, bound, t0, t1, lo, hi, sense):
    """Restrict [lo, hi] to where the segment from a0 (at t0) to a1 (at t1)
    satisfies ``value <= bound`` (sense=+1) or ``value >= bound`` (sense=-1)."""
    # value(s) = a0 + (a1 - a0) * s, s in [0, 1] mapped from [t0, t1]
    g0, g1 = sense * (a0 - bound), sense * (a1 - bound)  # need g <= 0
    if g0 <= 0 and g1 <= 0:
        return lo, hi
    if g0 > 0 and g1 > 0:
        return 1.0, 0.0
    s = g0 / (g0 - g1)
    if g0 > 0:
        return max(lo, s), hi
    return lo, min(hi, s)


def obstacle_clear(env_x: Envelope, env_y: Envelope, obstacle, window=(0.0, 1.0)) -> bool:
    """True when the envelope region over `window` misses the obstacle.

    `obstacle` is ``(xmin, xmax, ymin, ymax)``.  The envelopes are piecewise
    linear, so the test is exact per linear piece: it looks for a common
    parameter where the x-slab and the y-slab both overlap the rectangle.
    """
    xmin, xmax, ymin, ymax = (float(v) for v in obstacle)
    t1, t2 = (float(v) for v in window)
    if not 0 <= t1 < t2 <= 1:
        raise ValueError("window must satisfy 0 <= t1 < t2 <= 1")
    br = _window_breaks(env_x, env_y, t1, t2)
    for a, b in zip(br[:-1], br[1:]):
        lo, hi = 0.0, 1.0
        # overlap in x: lower_x <= xmax and upper_x >= xmin, same for y
        for poly, bound, sense in (
            (env_x.lower, xmax, +1),
            (env_x.upper, xmin, -1),
            (env_y.lower, ymax, +1),
            (env_y.upper, ymin, -1),
        ):
            lo, hi = _linear_feasible(float(poly(a)), float(poly(b)), bound, a, b, lo, hi, sense)
            if lo > hi:
                break
        if lo <= hi:
            return False
    return True


def envelope_csv(env: Envelope, samples: int = 201) -> str:
    """CSV text with columns tau, lower, upper."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "lower", "upper"])
    taus = np.unique(np.concatenate([np.linspace(0.0, 1.0, samples), env.lower.abscissae]))
    for t in taus:
        w.writerow([repr(float(t)), repr(float(env.lower(t))), repr(float(env.upper(t)))])
    return buf.getvalue()
