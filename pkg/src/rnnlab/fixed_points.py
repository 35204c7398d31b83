"""Fixed points of parameterized sigmoid/tanh maps f(x) = act(w*x + b):
numeric location, stability classification, region sweeps, and the
critical weight at which one fixed point becomes three.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Kind(enum.Enum):
    SIGMOID = "sigmoid"
    TANH = "tanh"


class Stability(enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


@dataclass(frozen=True)
class ActivationParams:
    kind: Kind
    w: float
    b: float

    def __call__(self, x):
        z = self.w * x + self.b
        if self.kind is Kind.TANH:
            return np.tanh(z)
        return 1.0 / (1.0 + np.exp(-z))

    def derivative_at_fixed_point(self, xi: float) -> float:
        # at a fixed point act(w*xi+b) == xi, so act' has a closed form in xi
        if self.kind is Kind.TANH:
            return self.w * (1.0 - xi * xi)
        return self.w * xi * (1.0 - xi)


@dataclass(frozen=True)
class FixedPoint:
    xi: float
    derivative_magnitude: float
    stability: Stability


@dataclass(frozen=True)
class FixedPointReport:
    points: tuple  # sorted ascending by xi
    count: int


_MARGINAL_BAND = 1e-8
_RESIDUAL_TOL = 1e-10
_BISECT_TOL = 1e-12
_GRID = 10_000
_PAD = 0.5


def _bracket(kind: Kind):
    if kind is Kind.TANH:
        return -1.0 - _PAD, 1.0 + _PAD
    return 0.0 - _PAD, 1.0 + _PAD


def _classify(a: ActivationParams, xi: float) -> FixedPoint:
    d = abs(a.derivative_at_fixed_point(xi))
    if d < 1.0 - _MARGINAL_BAND:
        s = Stability.STABLE
    elif d > 1.0 + _MARGINAL_BAND:
        s = Stability.UNSTABLE
    else:
        s = Stability.MARGINAL
    return FixedPoint(xi, d, s)


def _bisect_root(g, lo, hi):
    flo = g(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = g(mid)
        if abs(fm) < _BISECT_TOL or hi - lo < 1e-15:
            return mid
        if (fm < 0) == (flo < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_fixed_points(a: ActivationParams) -> FixedPointReport:
    """All real solutions of act(w*x+b) = x, with stability labels.

    Sign-change bracketing on a padded co-domain interval, refined by
    bisection; tangent (marginal) roots that do not change sign are picked
    up from near-zero local minima of |f(x)-x|.
    """
    lo, hi = _bracket(a.kind)
    xs = np.linspace(lo, hi, _GRID + 1)
    g = lambda x: a(x) - x
    vals = np.asarray(g(xs))
    roots = []
    sign = np.sign(vals)
    for i in range(_GRID):
        if vals[i] == 0.0:
            roots.append(xs[i])
        elif sign[i] * sign[i + 1] < 0:
            roots.append(_bisect_root(g, xs[i], xs[i + 1]))
    if vals[-1] == 0.0:
        roots.append(xs[-1])
    # tangency roots: local minima of |g| that refine to ~zero residual
    absvals = np.abs(vals)
    for i in range(1, _GRID):
        if (absvals[i] <= absvals[i - 1] and absvals[i] <= absvals[i + 1]
                and absvals[i] < 1e-4):
            x0, x1 = xs[i - 1], xs[i + 1]
            for _ in range(100):  # golden-section on |g|
                m1 = x0 + 0.381966 * (x1 - x0)
                m2 = x1 - 0.381966 * (x1 - x0)
                if abs(g(m1)) < abs(g(m2)):
                    x1 = m2
                else:
                    x0 = m1
            xm = 0.5 * (x0 + x1)
            if abs(g(xm)) < _RESIDUAL_TOL:
                roots.append(xm)
    # dedupe
    roots.sort()
    uniq = []
    for r in roots:
        if not uniq or r - uniq[-1] > 1e-6:
            uniq.append(r)
    points = tuple(_classify(a, r) for r in uniq)
    for pt in points:  # independent residual re-check at report time
        assert abs(a(pt.xi) - pt.xi) < _RESIDUAL_TOL
    return FixedPointReport(points, len(points))


def count_fixed_points(kind: Kind, w: float, b: float) -> int:
    return find_fixed_points(ActivationParams(kind, w, b)).count


def count_region_sweep(kind: Kind, w_values, b_values) -> np.ndarray:
    """Fixed-point count at each (w, b) grid cell; rows index w."""
    grid = np.zeros((len(w_values), len(b_values)), dtype=int)
    for i, w in enumerate(w_values):
        for j, b in enumerate(b_values):
            grid[i, j] = count_fixed_points(kind, float(w), float(b))
    return grid


def sweep_to_csv(path, kind: Kind, w_values, b_values, grid: np.ndarray):
    with open(path, "w") as fh:
        fh.write("w,b,count\n")
        for i, w in enumerate(w_values):
            for j, b in enumerate(b_values):
                fh.write(f"{w},{b},{grid[i, j]}\n")


def report_to_csv(path, report: FixedPointReport):
    with open(path, "w") as fh:
        fh.write("xi,deriv,stability\n")
        for p in report.points:
            fh.write(f"{p.xi!r},{p.derivative_magnitude!r},"
                     f"{p.stability.value}\n")


_W_CEILING = 1e3


def critical_weight(kind: Kind, b: float, tol: float = 1e-6) -> float:
    """Smallest w at which the count transitions 1 -> 3 for the given b;
    +inf if no transition below w = 1e3."""
    lo = 1e-3
    hi = None
    w = 1.0
    while w <= _W_CEILING:
        if count_fixed_points(kind, w, b) >= 3:
            hi = w
            break
        lo = w
        w *= 2.0
    if hi is None:
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if count_fixed_points(kind, mid, b) >= 2:
            hi = mid
        else:
            lo = mid
    return hi


def iterate_to_fixed_point(a: ActivationParams, x0: float,
                           max_iters: int = 10_000):
    """Iterate x <- f(x); returns (x_final, iterations, converged)."""
    x = float(x0)
    for it in range(1, max_iters + 1):
        nxt = float(a(x))
        if abs(nxt - x) < 1e-12:
            return nxt, it, True
        x = nxt
    return x, max_iters, False
