"""Barrier functions gamma, theta and the extremal tail laws mu_+/mu_-.

For ``lam > 0`` the plus-side quantities come from the chord slope

    f(x) = (c(lam) - c(-x)) / (lam + x),   x > 0,

with ``gamma_+`` its smallest minimiser and ``theta_+ = -inf f``.  Because
``c`` is concave on each half-line, ``f`` is quasi-convex, so the minimum
sits at a negative breakpoint of the measure or at an interior stationary
point of a density segment.  When ``f`` decreases all the way to its limit
the minimiser does not exist: ``gamma_+ = inf`` and ``theta_+ = 0``.

Minus-side quantities are obtained from the reflected measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .measure import INF, TargetMeasure

TIE_RTOL = 1e-13


class IdentityViolation(AssertionError):
    """A barrier identity failed; carries the offending ``lam`` and residual."""

    def __init__(self, name: str, lam: float, residual: float):
        super().__init__(f"{name} violated at lambda={lam!r}: residual {residual!r}")
        self.name = name
        self.lam = lam
        self.residual = residual


def _chord(mu: TargetMeasure, cl: float, lam: float, x: float) -> float:
    return (cl - mu.c(-x)) / (lam + x)


def _stationary(mu: TargetMeasure, cl: float, lam: float, a: float, b: float) -> float | None:
    """Stationary point of ``f`` on a density segment ``x in (a, b)``.

    The sign of ``f'`` is that of ``N(x) = c'(-x)(lam + x) + c(-x) - c(lam)``,
    which is nondecreasing.  One-sided derivatives at the segment ends are
    taken from inside the segment.
    """

    def numer(x, d):
        return d * (lam + x) + mu.c(-x) - cl

    na = numer(a, mu.c_left(-a))
    if na >= 0:
        return None
    if b == INF:
        hi = max(2.0 * a, a + 1.0)
        while True:
            nh = numer(hi, mu.c_right(-hi))
            if nh > 0:
                break
            if hi > 1e300:
                return None
            hi *= 2.0
        b = hi
    else:
        nb = numer(b, mu.c_right(-b))
        if nb <= 0:
            return None
    g = lambda x: numer(x, mu.c_right(-x))
    return optimize.brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def gamma_theta_plus(mu: TargetMeasure, lam: float) -> tuple[float, float]:
    """``(gamma_+(lam), theta_+(lam))``; ``gamma`` may be ``inf``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    cl = mu.c(lam)
    neg_mean = mu.tail_means()[1]
    lower = mu.support_lower
    tol = TIE_RTOL * (1.0 + abs(cl))
    if neg_mean < INF:
        if cl > neg_mean + tol or (cl >= neg_mean - tol and lower == -INF):
            return INF, 0.0

    xs = sorted({-b for b in mu.breakpoints() if b < 0})
    cands = [(x, _chord(mu, cl, lam, x)) for x in xs]
    edges = [0.0] + xs + ([INF] if lower == -INF else [])
    for a, b in zip(edges[:-1], edges[1:]):
        if mu.has_density(-b, -a):
            x = _stationary(mu, cl, lam, a, b)
            if x is not None and x > 0:
                cands.append((x, _chord(mu, cl, lam, x)))
    if not cands:
        # no mass below zero: f = c(lam) / (lam + x) decreases to 0
        return INF, 0.0
    fmin = min(v for _, v in cands)
    if fmin > tol or (fmin >= -tol and lower == -INF):
        return INF, 0.0
    x_best = min(x for x, v in cands if v <= fmin + TIE_RTOL * (1.0 + abs(fmin)))
    return x_best, max(0.0, -fmin)


def gamma_theta_minus(mu: TargetMeasure, lam: float) -> tuple[float, float]:
    return gamma_theta_plus(mu.reflect(), lam)


def mu_plus(mu: TargetMeasure, lam: float) -> float:
    return gamma_theta_plus(mu, lam)[1] + mu.mass_above(lam, inclusive=True)


def mu_minus(mu: TargetMeasure, lam: float) -> float:
    return mu.mass_below(-lam, inclusive=True) + gamma_theta_minus(mu, lam)[1]


# -- alternative characterisation, used only as an independent check --


def _sup_true(pred, points: Sequence[float], mu: TargetMeasure, outward: float) -> float | None:
    """Supremum of ``{y : pred(y)}`` for a predicate true on a down-set.

    ``points`` are increasing test points; ``outward`` < points[0] extends the
    search to the left when the measure is unbounded below.
    """
    pts = list(points)
    vals = [pred(y) for y in pts]
    if not any(vals):
        if outward is None:
            return None
        y = outward
        while not pred(y):
            if y < -1e300:
                return None
            y *= 2.0
        lo, hi = y, pts[0] if pts else 0.0
    else:
        k = max(i for i, v in enumerate(vals) if v)
        if k == len(pts) - 1:
            return pts[k]
        lo, hi = pts[k], pts[k + 1]
        if not mu.has_density(lo, hi):
            # c is affine on (lo, hi): the predicate keeps its value up to hi
            return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _test_points(mu: TargetMeasure, side: int) -> list[float]:
    bps = sorted(b for b in mu.breakpoints() if side * b > 0)
    pts = set(bps)
    for a, b in zip(bps[:-1], bps[1:]):
        pts.add(0.5 * (a + b))
    if bps:
        inner = bps[-1] if side < 0 else bps[0]
        pts.add(0.5 * inner)
        outer = bps[0] if side < 0 else bps[-1]
        pts.add(outer - 1.0 if side < 0 else outer + 1.0)
        pts.add(2.0 * outer)
    return sorted(pts)


def gamma_theta_plus_alternative(mu: TargetMeasure, lam: float, tol: float = 1e-14) -> tuple[float, float]:
    """``gamma_+ = -sup{y < 0 : (c(lam) - c(y)) / (lam - y) <= c'(y)_+}``."""
    cl = mu.c(lam)

    def pred(y):
        return cl - mu.c(y) <= mu.c_right(y) * (lam - y) + tol * (1.0 + abs(cl))

    pts = _test_points(mu, -1)
    outward = -1.0 if mu.support_lower == -INF else None
    if outward is not None and pts:
        outward = min(pts) * 2.0
    y = _sup_true(pred, pts, mu, outward)
    if y is None:
        return INF, 0.0
    g = -y
    return g, -(cl - mu.c(y)) / (lam + g)


def gamma_theta_minus_alternative(mu: TargetMeasure, lam: float, tol: float = 1e-14) -> tuple[float, float]:
    """``gamma_- = inf{x > 0 : (c(x) - c(-lam)) / (x + lam) >= c'(x)_-}``, on ``mu`` itself."""
    cm = mu.c(-lam)

    def pred(y):
        # y = -x < 0; the set {x : ...} is an up-set in x
        x = -y
        return mu.c(x) - cm >= mu.c_left(x) * (x + lam) - tol * (1.0 + abs(cm))

    pts = [-x for x in reversed(_test_points(mu, +1))]
    outward = -1.0 if mu.support_upper == INF else None
    if outward is not None and pts:
        outward = min(pts) * 2.0
    y = _sup_true(pred, pts, mu.reflect(), outward)
    if y is None:
        return INF, 0.0
    g = -y
    return g, (mu.c(g) - cm) / (g + lam)


def brute_force_gamma_theta_plus(mu: TargetMeasure, lam: float, grid: Iterable[float]) -> tuple[float, float]:
    """Exhaustive chord search over positive ``grid`` points.

    The limit slope as ``x -> inf`` is 0, so a grid minimum that is not
    strictly negative is reported as ``gamma = inf`` unless the support is
    bounded below and 0 is attained on the grid.
    """
    cl = mu.c(lam)
    xs = np.asarray(sorted(x for x in grid if x > 0), dtype=float)
    fs = (cl - mu.c_many(-xs)) / (lam + xs)
    vals = list(zip(xs.tolist(), fs.tolist()))
    fmin = min(v for _, v in vals)
    tol = TIE_RTOL * (1.0 + abs(fmin))
    if fmin > tol or (fmin >= -tol and mu.support_lower == -INF):
        return INF, 0.0
    return min(x for x, v in vals if v <= fmin + tol), max(0.0, -fmin)


@dataclass(frozen=True)
class BarrierSet:
    """Evaluators for the barrier quantities of a fixed target measure."""

    measure: TargetMeasure
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @cached_property
    def reflected(self) -> TargetMeasure:
        return self.measure.reflect()

    def plus(self, lam: float) -> tuple[float, float]:
        key = ("+", float(lam))
        if key not in self._cache:
            self._cache[key] = gamma_theta_plus(self.measure, lam)
        return self._cache[key]

    def minus(self, lam: float) -> tuple[float, float]:
        key = ("-", float(lam))
        if key not in self._cache:
            self._cache[key] = gamma_theta_plus(self.reflected, lam)
        return self._cache[key]

    def gamma_plus(self, lam: float) -> float:
        return self.plus(lam)[0]

    def gamma_minus(self, lam: float) -> float:
        return self.minus(lam)[0]

    def theta_plus(self, lam: float) -> float:
        return self.plus(lam)[1]

    def theta_minus(self, lam: float) -> float:
        return self.minus(lam)[1]

    def mu_plus(self, lam: float) -> float:
        return self.theta_plus(lam) + self.measure.mass_above(lam, inclusive=True)

    def mu_minus(self, lam: float) -> float:
        return self.measure.mass_below(-lam, inclusive=True) + self.theta_minus(lam)

    def row(self, lam: float) -> tuple[float, ...]:
        gp, tp = self.plus(lam)
        gm, tm = self.minus(lam)
        return (lam, gp, tp, self.mu_plus(lam), gm, tm, self.mu_minus(lam))

    def table(self, lams: Iterable[float]) -> np.ndarray:
        return np.array([self.row(l) for l in lams], dtype=float)


COLUMNS = ("lambda", "gamma_plus", "theta_plus", "mu_plus", "gamma_minus", "theta_minus", "mu_minus")


@dataclass
class IdentityReport:
    rows: list[dict] = field(default_factory=list)
    max_residual: float = 0.0
    worst: tuple[str, float] | None = None

    def record(self, name: str, lam: float, residual: float):
        self.rows.append({"check": name, "lambda": lam, "residual": residual})
        if residual > self.max_residual:
            self.max_residual = residual
            self.worst = (name, lam)

    @property
    def ok(self) -> bool:
        return self.worst is None or self.max_residual <= self.tol

    tol: float = 1e-10


def _gap(a: float, b: float) -> float:
    if a == b:
        return 0.0
    if math.isinf(a) or math.isinf(b):
        return INF
    return abs(a - b) / max(1.0, abs(a))


def verify_barrier_identities(
    mu: TargetMeasure, lams: Iterable[float], tol: float = 1e-10, raise_on_fail: bool = True
) -> IdentityReport:
    """Check the chord identities, derivative sandwiches, agreement with the
    alternative characterisation, ``c(lam) <= c(-gamma_+)`` and reflection
    duality on every ``lam``.  Residuals are nonnegative violation sizes."""
    rep = IdentityReport(tol=tol)
    bs = BarrierSet(mu)
    rbs = BarrierSet(mu.reflect())
    for lam in lams:
        gp, tp = bs.plus(lam)
        gm, tm = bs.minus(lam)
        cl, cml = mu.c(lam), mu.c(-lam)
        if math.isfinite(gp):
            rep.record("chord_plus", lam, abs(cl - (mu.c(-gp) - (lam + gp) * tp)))
            rep.record("sandwich_plus", lam, max(0.0, -mu.c_left(-gp) - tp, tp + mu.c_right(-gp)))
            rep.record("c_order_plus", lam, max(0.0, cl - mu.c(-gp)))
        else:
            rep.record("theta_plus_zero", lam, abs(tp))
        if math.isfinite(gm):
            rep.record("chord_minus", lam, abs(cml - (mu.c(gm) - (lam + gm) * tm)))
            rep.record("sandwich_minus", lam, max(0.0, mu.c_right(gm) - tm, tm - mu.c_left(gm)))
            rep.record("c_order_minus", lam, max(0.0, cml - mu.c(gm)))
        else:
            rep.record("theta_minus_zero", lam, abs(tm))
        agp, atp = gamma_theta_plus_alternative(mu, lam)
        agm, atm = gamma_theta_minus_alternative(mu, lam)
        rep.record("alt_gamma_plus", lam, _gap(gp, agp))
        rep.record("alt_theta_plus", lam, abs(tp - atp))
        rep.record("alt_gamma_minus", lam, _gap(gm, agm))
        rep.record("alt_theta_minus", lam, abs(tm - atm))
        rep.record("reflect_mu_minus", lam, abs(bs.mu_minus(lam) - rbs.mu_plus(lam)))
        rep.record("reflect_mu_plus", lam, abs(bs.mu_plus(lam) - rbs.mu_minus(lam)))
        if raise_on_fail and rep.max_residual > tol:
            name, where = rep.worst
            raise IdentityViolation(name, where, rep.max_residual)
    return rep
