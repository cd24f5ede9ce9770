"""Target laws on the real line and their barycentre function.

A :class:`TargetMeasure` is a finite list of atoms plus a handful of
density pieces whose mass and first moment have closed forms, so that the
barycentre function

    c(x) = E[min(x, U); U >= 0]          for x >= 0
    c(x) = E[min(|x|, |U|); U < 0]       for x < 0

and everything built on it can be evaluated exactly, piece by piece.
Neither integrability nor centring is assumed.
"""

from __future__ import annotations

import bisect
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, optimize, special

INF = math.inf
FAMILIES = ("uniform", "power", "exponential", "logpower")
MASS_TOL = 1e-12


class MeasureError(ValueError):
    """Invalid target measure."""


class TruncationInfeasible(MeasureError):
    """The centred truncation cannot be built for this ``n``."""


def _pow_int(t0: float, t1: float, e: float) -> float:
    """Integral of ``t**e`` over ``[t0, t1]`` with ``0 <= t0 <= t1 <= inf``."""
    if t1 <= t0:
        return 0.0
    if e == -1.0:
        if t0 == 0.0 or t1 == INF:
            return INF
        return math.log(t1) - math.log(t0)
    if t1 == INF:
        return -(t0 ** (e + 1.0)) / (e + 1.0) if e < -1.0 else INF
    if t0 == 0.0:
        return t1 ** (e + 1.0) / (e + 1.0) if e > -1.0 else INF
    return (t1 ** (e + 1.0) - t0 ** (e + 1.0)) / (e + 1.0)


def _logpow_anti(k: float, t: float) -> float:
    # antiderivative of exp(-k t) / t**2 in t > 0
    if t == INF:
        return 0.0 if k >= 0 else INF
    if k == 0.0:
        return -1.0 / t
    return -math.exp(-k * t) / t - k * special.expi(-k * t)


def _logpow_int(k: float, t0: float, t1: float) -> float:
    if t1 <= t0:
        return 0.0
    hi = _logpow_anti(k, t1)
    if hi == INF:
        return INF
    return hi - _logpow_anti(k, t0)


@dataclass(frozen=True)
class DensityPiece:
    """A density component on ``[lo, hi]`` carrying total mass ``weight``.

    Families (shape up to normalisation):

    * ``uniform``: constant on a finite interval.
    * ``power``: ``|u - pivot| ** (-beta - 1)``, pivot outside the open interval.
    * ``exponential``: ``exp(-beta * u)``, ``beta != 0``.
    * ``logpower``: ``|u| ** (-beta - 1) / log(|u|) ** 2`` with ``|u| > 1``.
    """

    family: str
    lo: float
    hi: float
    weight: float
    beta: float = 0.0
    pivot: float = 0.0
    _norm: float = field(init=False, repr=False, compare=False, default=0.0)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise MeasureError(f"unknown density family {self.family!r}")
        if not self.lo < self.hi:
            raise MeasureError(f"empty interval [{self.lo}, {self.hi}]")
        if not self.weight > 0:
            raise MeasureError("density weight must be positive")
        if self.family == "uniform" and not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise MeasureError("uniform piece needs a finite interval")
        if self.family == "power" and self.lo < self.pivot < self.hi:
            raise MeasureError("power pivot must lie outside the open interval")
        if self.family == "exponential" and self.beta == 0.0:
            raise MeasureError("exponential rate must be nonzero")
        if self.family == "logpower" and not (self.lo >= 1.0 or self.hi <= -1.0):
            raise MeasureError("logpower piece needs |u| > 1 on its interval")
        z = self._raw_mass(self.lo, self.hi)
        if not (0.0 < z < INF):
            raise MeasureError(f"{self.family} piece on [{self.lo}, {self.hi}] is not normalisable")
        object.__setattr__(self, "_norm", z)

    # -- unnormalised shape integrals over [a, b] within [lo, hi] --

    def _side(self) -> float:
        ref = self.pivot if self.family == "power" else 0.0
        return 1.0 if self.lo >= ref else -1.0

    def _t_range(self, a: float, b: float) -> tuple[float, float]:
        sg = self._side()
        if self.family == "power":
            ta, tb = sg * (a - self.pivot), sg * (b - self.pivot)
        else:
            ta, tb = math.log(abs(a)), math.log(abs(b))
        return (ta, tb) if ta <= tb else (tb, ta)

    def _ref(self) -> float:
        return self.lo if math.isfinite(self.lo) else self.hi

    def _raw_mass(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        fam = self.family
        if fam == "uniform":
            return b - a
        if fam == "power":
            return _pow_int(*self._t_range(a, b), -self.beta - 1.0)
        if fam == "logpower":
            return _logpow_int(self.beta, *self._t_range(a, b))
        beta, r = self.beta, self._ref()
        return (self._exp_anti(a - r) - self._exp_anti(b - r)) / beta

    def _exp_anti(self, v: float) -> float:
        # exp(-beta v), with the decaying limit folded to zero
        x = -self.beta * v
        if x == -INF:
            return 0.0
        return math.exp(x)

    def _raw_moment(self, a: float, b: float) -> float:
        if b <= a:
            return 0.0
        fam = self.family
        if fam == "uniform":
            return 0.5 * (b - a) * (b + a)
        if fam == "power":
            t0, t1 = self._t_range(a, b)
            m0 = _pow_int(t0, t1, -self.beta - 1.0)
            m1 = _pow_int(t0, t1, -self.beta)
            base = self.pivot * m0 if self.pivot != 0.0 else 0.0
            return base + self._side() * m1
        if fam == "logpower":
            return self._side() * _logpow_int(self.beta - 1.0, *self._t_range(a, b))
        beta, r = self.beta, self._ref()

        def anti(v):
            if v in (INF, -INF):
                return 0.0
            return -math.exp(-beta * v) * (v / beta + 1.0 / beta**2)

        m0 = self._raw_mass(a, b)
        return r * m0 + anti(b - r) - anti(a - r)

    # -- normalised quantities --

    def _clip(self, a: float, b: float) -> tuple[float, float]:
        return max(a, self.lo), min(b, self.hi)

    def mass(self, a: float = -INF, b: float = INF) -> float:
        a, b = self._clip(a, b)
        if b <= a:
            return 0.0
        return self.weight * self._raw_mass(a, b) / self._norm

    def moment(self, a: float = -INF, b: float = INF) -> float:
        """``int_a^b u`` against this piece (may be infinite)."""
        a, b = self._clip(a, b)
        if b <= a:
            return 0.0
        return self.weight * self._raw_moment(a, b) / self._norm

    def pdf(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u >= self.lo) & (u <= self.hi)
        with np.errstate(all="ignore"):
            if self.family == "uniform":
                shape = np.ones_like(u)
            elif self.family == "power":
                shape = np.abs(u - self.pivot) ** (-self.beta - 1.0)
            elif self.family == "logpower":
                shape = np.abs(u) ** (-self.beta - 1.0) / np.log(np.abs(u)) ** 2
            else:
                shape = np.exp(-self.beta * (u - self._ref()))
        return np.where(inside, self.weight * shape / self._norm, 0.0)

    def abs_moment(self, q: float) -> float:
        """``int |u|**q`` against this piece, closed form where one exists."""
        fam = self.family
        if fam == "uniform":
            lo, hi = self.lo, self.hi
            if lo >= 0:
                raw = _pow_int(lo, hi, q)
            elif hi <= 0:
                raw = _pow_int(-hi, -lo, q)
            else:
                raw = _pow_int(0.0, hi, q) + _pow_int(0.0, -lo, q)
        elif fam == "power" and self.pivot == 0.0:
            raw = _pow_int(*self._t_range(self.lo, self.hi), q - self.beta - 1.0)
        elif fam == "logpower":
            raw = _logpow_int(self.beta - q, *self._t_range(self.lo, self.hi))
        elif fam == "exponential" and self._exp_gamma_ok():
            raw = self._exp_abs_moment(q)
        else:
            return self.abs_moment_quad(q)
        return self.weight * raw / self._norm

    def _exp_gamma_ok(self) -> bool:
        # decaying direction on one side of zero: regularised incomplete gamma applies
        w0, w1 = sorted((math.copysign(1.0, self.beta) * self.lo, math.copysign(1.0, self.beta) * self.hi))
        return w0 >= 0.0

    def _exp_abs_moment(self, q: float) -> float:
        b = abs(self.beta)
        sg = math.copysign(1.0, self.beta)
        w0, w1 = sorted((sg * self.lo, sg * self.hi))
        # shape exp(-beta (u - r)) = exp(b * sg * r) * exp(-b w)
        log_scale = b * sg * self._ref() + special.gammaln(q + 1.0) - (q + 1.0) * math.log(b)
        qa = special.gammaincc(q + 1.0, b * w0)
        qb = 0.0 if w1 == INF else special.gammaincc(q + 1.0, b * w1)
        return math.exp(log_scale) * (qa - qb)

    def abs_moment_quad(self, q: float) -> float:
        """Numerical ``int |u|**q`` against this piece (reference route)."""
        cuts = [self.lo, self.hi]
        if self.lo < 0 < self.hi:
            cuts.insert(1, 0.0)
        total = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            val, _ = integrate.quad(
                lambda u: abs(u) ** q * float(self.pdf(u)), a, b, epsabs=0.0, epsrel=1e-12, limit=500
            )
            total += val
        return total

    def reflect(self) -> "DensityPiece":
        beta = -self.beta if self.family == "exponential" else self.beta
        return DensityPiece(self.family, -self.hi, -self.lo, self.weight, beta, -self.pivot)

    def restrict(self, a: float, b: float) -> "DensityPiece | None":
        a, b = self._clip(a, b)
        w = self.mass(a, b)
        if b <= a or w <= 0.0:
            return None
        return DensityPiece(self.family, a, b, w, self.beta, self.pivot)

    def scaled(self, factor: float) -> "DensityPiece":
        return DensityPiece(self.family, self.lo, self.hi, self.weight * factor, self.beta, self.pivot)


@dataclass(frozen=True, eq=True)
class TargetMeasure:
    """Probability law on the reals: sorted atoms plus disjoint density pieces."""

    atoms: tuple[tuple[float, float], ...] = ()
    pieces: tuple[DensityPiece, ...] = ()
    _x: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _m: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _cm: np.ndarray = field(init=False, repr=False, compare=False, default=None)
    _cxm: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        atoms = tuple((float(x), float(m)) for x, m in self.atoms)
        pieces = tuple(sorted(self.pieces, key=lambda p: p.lo))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)
        xs = [x for x, _ in atoms]
        if any(not math.isfinite(x) for x in xs):
            raise MeasureError("atom locations must be finite")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise MeasureError("atom locations must be strictly increasing")
        if any(not m > 0 for _, m in atoms):
            raise MeasureError("atom masses must be positive")
        for p, q in zip(pieces, pieces[1:]):
            if q.lo < p.hi:
                raise MeasureError("density pieces overlap")
        total = sum(m for _, m in atoms) + sum(p.weight for p in pieces)
        if abs(total - 1.0) > MASS_TOL * max(1, len(atoms) + len(pieces)):
            raise MeasureError(f"total mass {total!r} differs from 1")
        x = np.array(xs, dtype=float)
        m = np.array([m for _, m in atoms], dtype=float)
        object.__setattr__(self, "_x", x)
        object.__setattr__(self, "_m", m)
        object.__setattr__(self, "_cm", np.concatenate(([0.0], np.cumsum(m))))
        object.__setattr__(self, "_cxm", np.concatenate(([0.0], np.cumsum(x * m))))

    # -- construction helpers --

    @classmethod
    def from_atoms(cls, atoms: Iterable[tuple[float, float]], pieces: Sequence[DensityPiece] = ()) -> "TargetMeasure":
        """Sort atoms and merge coincident locations."""
        merged: dict[float, float] = {}
        for x, m in atoms:
            if m > 0:
                merged[float(x)] = merged.get(float(x), 0.0) + float(m)
        return cls(tuple(sorted(merged.items())), tuple(pieces))

    @classmethod
    def point(cls, x: float) -> "TargetMeasure":
        return cls(((float(x), 1.0),))

    def normalized(self) -> "TargetMeasure":
        total = self.total_mass
        return TargetMeasure(
            tuple((x, m / total) for x, m in self.atoms), tuple(p.scaled(1.0 / total) for p in self.pieces)
        )

    # -- basic masses --

    @property
    def total_mass(self) -> float:
        return float(self._cm[-1]) + sum(p.weight for p in self.pieces)

    @property
    def is_atomic(self) -> bool:
        return not self.pieces

    def atom_mass(self, x: float) -> float:
        i = bisect.bisect_left(self.atoms, (x, -INF))
        if i < len(self.atoms) and self.atoms[i][0] == x:
            return self.atoms[i][1]
        return 0.0

    def mass_below(self, x: float, inclusive: bool = True) -> float:
        """``mu((-inf, x])`` or ``mu((-inf, x))``."""
        side = "right" if inclusive else "left"
        i = int(np.searchsorted(self._x, x, side=side))
        return float(self._cm[i]) + sum(p.mass(-INF, x) for p in self.pieces)

    def mass_above(self, x: float, inclusive: bool = True) -> float:
        """``mu([x, inf))`` or ``mu((x, inf))``."""
        side = "left" if inclusive else "right"
        i = int(np.searchsorted(self._x, x, side=side))
        return float(self._cm[-1] - self._cm[i]) + sum(p.mass(x, INF) for p in self.pieces)

    def mass_between(self, a: float, b: float, closed: tuple[bool, bool] = (False, False)) -> float:
        if b < a:
            return 0.0
        i = int(np.searchsorted(self._x, a, side="left" if closed[0] else "right"))
        j = int(np.searchsorted(self._x, b, side="right" if closed[1] else "left"))
        atoms = float(self._cm[j] - self._cm[i]) if j > i else 0.0
        return atoms + sum(p.mass(a, b) for p in self.pieces)

    def cdf(self, x: float) -> float:
        return self.mass_below(x, inclusive=True)

    def _moment(self, a: float, b: float) -> float:
        """``int u`` over atoms in ``[a, b)`` and pieces on ``[a, b]``."""
        i = int(np.searchsorted(self._x, a, side="left"))
        j = int(np.searchsorted(self._x, b, side="left"))
        atoms = float(self._cxm[j] - self._cxm[i]) if j > i else 0.0
        return atoms + sum(p.moment(a, b) for p in self.pieces)

    def _moment_open_closed(self, a: float, b: float) -> float:
        # atoms in (a, b)
        i = int(np.searchsorted(self._x, a, side="right"))
        j = int(np.searchsorted(self._x, b, side="left"))
        atoms = float(self._cxm[j] - self._cxm[i]) if j > i else 0.0
        return atoms + sum(p.moment(a, b) for p in self.pieces)

    # -- support --

    @property
    def support_lower(self) -> float:
        cands = [self.atoms[0][0]] if self.atoms else []
        cands += [p.lo for p in self.pieces]
        return min(cands)

    @property
    def support_upper(self) -> float:
        cands = [self.atoms[-1][0]] if self.atoms else []
        cands += [p.hi for p in self.pieces]
        return max(cands)

    def breakpoints(self) -> list[float]:
        pts = {x for x, _ in self.atoms}
        for p in self.pieces:
            pts.update(v for v in (p.lo, p.hi) if math.isfinite(v))
        return sorted(pts)

    def has_density(self, a: float, b: float) -> bool:
        """Whether some density piece puts mass strictly inside ``(a, b)``."""
        return any(p.lo < b and p.hi > a for p in self.pieces)

    # -- barycentre function --

    def c(self, x: float) -> float:
        if x >= 0:
            if x == INF:
                return self.tail_means()[0]
            return self._moment(0.0, x) + x * self.mass_above(x, inclusive=True)
        if x == -INF:
            return self.tail_means()[1]
        return -self._moment_open_closed(x, 0.0) + (-x) * self.mass_below(x, inclusive=True)

    def c_many(self, xs) -> np.ndarray:
        """``c`` on an array; vectorised for purely atomic measures."""
        xs = np.asarray(xs, dtype=float)
        if self.pieces:
            return np.array([self.c(float(x)) for x in xs.ravel()]).reshape(xs.shape)
        x, m = self._x, self._m
        pos, neg = x >= 0, x < 0
        xx = xs[..., None]
        up = np.where(pos, np.minimum(np.maximum(xx, 0.0), x), 0.0) @ m
        down = np.where(neg, np.minimum(np.maximum(-xx, 0.0), -x), 0.0) @ m
        return np.where(xs >= 0, up, down)

    def c_right(self, x: float) -> float:
        """Right derivative of ``c`` at ``x``."""
        if x >= 0:
            return self.mass_above(x, inclusive=False)
        return -self.mass_below(x, inclusive=True)

    def c_left(self, x: float) -> float:
        """Left derivative of ``c`` at ``x``."""
        if x > 0:
            return self.mass_above(x, inclusive=True)
        return -self.mass_below(x, inclusive=False)

    def tail_means(self) -> tuple[float, float]:
        pos = self._moment(0.0, INF)
        neg = -self._moment_open_closed(-INF, 0.0)
        # atoms are finite so infinities come only from pieces
        pos = pos if pos == pos else INF
        neg = neg if neg == neg else INF
        return pos, neg

    # -- derived measures --

    def reflect(self) -> "TargetMeasure":
        return TargetMeasure(tuple((-x, m) for x, m in reversed(self.atoms)), tuple(p.reflect() for p in self.pieces))

    def without_zero_atom(self) -> tuple[float, "TargetMeasure"]:
        """Split off ``mu({0})`` and return it with the conditional law on the rest."""
        p0 = self.atom_mass(0.0)
        if p0 == 0.0:
            return 0.0, self
        if p0 >= 1.0 - MASS_TOL:
            raise MeasureError("measure is concentrated at 0")
        rest = tuple((x, m / (1.0 - p0)) for x, m in self.atoms if x != 0.0)
        return p0, TargetMeasure(rest, tuple(p.scaled(1.0 / (1.0 - p0)) for p in self.pieces))

    def lp_moment(self, q: float) -> float:
        """``int |u|**q mu(du)``; infinite when the tails forbid it."""
        atoms = float(np.sum(np.abs(self._x) ** q * self._m)) if self.atoms else 0.0
        return atoms + sum(p.abs_moment(q) for p in self.pieces)

    def lp_moment_quad(self, q: float) -> float:
        atoms = float(np.sum(np.abs(self._x) ** q * self._m)) if self.atoms else 0.0
        return atoms + sum(p.abs_moment_quad(q) for p in self.pieces)

    def in_lp(self, q: float) -> bool:
        return math.isfinite(self.lp_moment(q))


def c_eval(mu: TargetMeasure, x: float) -> float:
    return mu.c(x)


def c_deriv(mu: TargetMeasure, x: float, side: str) -> float:
    if side == "left":
        return mu.c_left(x)
    if side == "right":
        return mu.c_right(x)
    raise ValueError(f"side must be 'left' or 'right', not {side!r}")


def tail_means(mu: TargetMeasure) -> tuple[float, float, float | None]:
    """One-sided first moments and the mean when both are finite."""
    pos, neg = mu.tail_means()
    mean = pos - neg if math.isfinite(pos) and math.isfinite(neg) else None
    return pos, neg, mean


def reflect(mu: TargetMeasure) -> TargetMeasure:
    return mu.reflect()


# -- centred truncation --


def _upper_quantile(mu: TargetMeasure, q: float) -> float:
    """``inf{x : mu([x, inf)) <= q}``."""
    pts = mu.breakpoints()
    lo_prev = -INF
    for b in pts + [INF]:
        if b == INF or mu.mass_above(b, inclusive=False) <= q:
            if b != INF and mu.mass_above(b, inclusive=True) > q:
                # crossing happens at the atom itself
                if not (lo_prev > -INF and mu.has_density(lo_prev, b)) or mu.mass_above(b, True) > q:
                    return b
            if not mu.has_density(lo_prev, b):
                return lo_prev
            a = lo_prev if lo_prev > -INF else _expand(mu, b, q, -1)
            top = b if b < INF else _expand(mu, a, q, +1)
            g = lambda x: mu.mass_above(x, inclusive=True) - q
            if g(top) > 0:
                return top
            return optimize.brentq(g, a, top, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        lo_prev = b
    raise TruncationInfeasible("upper quantile not found")


def _expand(mu: TargetMeasure, start: float, q: float, direction: int) -> float:
    step = max(1.0, abs(start)) if math.isfinite(start) else 1.0
    x = (start if math.isfinite(start) else 0.0) + direction * step
    for _ in range(2000):
        val = mu.mass_above(x, inclusive=True) - q
        if (direction < 0 and val > 0) or (direction > 0 and val <= 0):
            return x
        step *= 2.0
        x += direction * step
    raise TruncationInfeasible("could not bracket a quantile")


@dataclass(frozen=True)
class TruncatedMeasure:
    """Centred, integrable approximation of ``base`` used in the limit argument."""

    base: TargetMeasure
    n: int
    result: TargetMeasure
    xi_plus: float
    xi_minus: float
    psi: float
    tail_atoms: tuple[tuple[float, float], ...]

    def c_gap(self, x: float) -> float:
        return abs(self.result.c(x) - self.base.c(x))


def truncate_center(mu: TargetMeasure, n: int) -> TruncatedMeasure:
    """Keep ``mu`` on ``(xi-, xi+)``, trim the endpoint atoms to total mass
    ``(n-1)/n`` and place the remaining ``1/n`` as at most two atoms outside
    ``[min(-n, xi-), max(n, xi+)]`` so that the result has mean zero.

    Tail atoms start at ``+-2n`` (pushed to twice the quantile when ``2n``
    falls inside the forbidden interval) and one of them is moved further
    out only when a nonnegative mass solution needs it.
    """
    if int(n) != n or n < 2:
        raise TruncationInfeasible(f"n = {n} is below the feasibility threshold 2")
    n = int(n)
    q = 1.0 / (2 * n)
    xi_p = _upper_quantile(mu, q)
    xi_m = -_upper_quantile(mu.reflect(), q)
    if xi_m > xi_p:
        raise TruncationInfeasible(f"quantiles cross for n = {n}")

    body_atoms = [(x, m) for x, m in mu.atoms if xi_m < x < xi_p]
    body_pieces = [r for p in mu.pieces if (r := p.restrict(xi_m, xi_p)) is not None]
    inner = mu.mass_between(xi_m, xi_p, (False, False)) if xi_m < xi_p else 0.0
    deficit = (n - 1) / n - inner
    a_m, a_p = mu.atom_mass(xi_m), mu.atom_mass(xi_p)
    tol = 1e-12
    if xi_m == xi_p:
        avail = a_p
        if deficit < -tol or deficit > avail + tol:
            raise TruncationInfeasible("endpoint atom cannot carry the required mass")
        if deficit > 0:
            body_atoms.append((xi_p, deficit))
    else:
        avail = a_m + a_p
        if deficit < -tol or deficit > avail + tol:
            raise TruncationInfeasible("endpoint atoms cannot carry the required mass")
        if deficit > tol:
            share_m = deficit * a_m / avail
            share_p = deficit - share_m
            if share_m > 0:
                body_atoms.append((xi_m, share_m))
            if share_p > 0:
                body_atoms.append((xi_p, share_p))

    body_mean = math.fsum([x * m for x, m in body_atoms] + [p.moment() for p in body_pieces])
    r = 1.0 / n
    l_plus = 2.0 * n if 2.0 * n > xi_p else 2.0 * xi_p
    l_minus = 2.0 * n if -2.0 * n < xi_m else -2.0 * xi_m
    if body_mean > r * l_minus:
        l_minus = body_mean / r
    elif -body_mean > r * l_plus:
        l_plus = -body_mean / r
    # the balancing masses are solved in rational arithmetic and rounded once
    fr, fb = Fraction(1, n), Fraction(body_mean)
    fp, fm = Fraction(l_plus), Fraction(l_minus)
    exact_plus = (fr * fm - fb) / (fp + fm)
    m_plus, m_minus = float(exact_plus), float(fr - exact_plus)
    tails = tuple((x, m) for x, m in ((-l_minus, m_minus), (l_plus, m_plus)) if m > 0)
    result = TargetMeasure.from_atoms(body_atoms + list(tails), body_pieces)
    psi = result.mass_below(0.0, inclusive=False) - mu.mass_below(0.0, inclusive=False)
    return TruncatedMeasure(mu, n, result, xi_p, xi_m, psi, tails)


def check_truncation(tm: TruncatedMeasure, tol: float = 1e-12) -> dict[str, bool]:
    """Evaluate the five defining properties of a centred truncation."""
    mu, nu, n = tm.base, tm.result, tm.n
    lo, hi = tm.xi_minus, tm.xi_plus
    pts = [p for p in sorted(set(mu.breakpoints()) | {lo, hi}) if lo <= p <= hi]
    grid = sorted(set(pts + [0.5 * (a + b) for a, b in zip(pts, pts[1:])]))
    agree = True
    for i, a in enumerate(grid):
        for b in grid[i:]:
            if lo < a <= b < hi:
                agree &= abs(nu.mass_between(a, b) - mu.mass_between(a, b)) <= tol
    target = (n - 1) / n
    outer_lo, outer_hi = min(-n, lo), max(n, hi)
    prop_ii = (
        abs(nu.mass_between(lo, hi, (True, True)) - target) <= tol
        and abs(nu.mass_between(outer_lo, outer_hi, (True, True)) - target) <= tol
    )
    prop_iii = nu.atom_mass(hi) <= mu.atom_mass(hi) + tol and nu.atom_mass(lo) <= mu.atom_mass(lo) + tol
    pos, neg = nu.tail_means()
    return {
        "i": agree,
        "ii": prop_ii,
        "iii": prop_iii,
        "iv": math.isfinite(pos) and math.isfinite(neg) and abs(pos - neg) <= tol * max(1.0, pos),
        "v": math.isfinite(pos + neg),
    }


def c_approx_gap(mu: TargetMeasure, n: int, grid: Iterable[float]) -> float:
    """``max_x |c_n(x) - c(x)| - |x|/n`` over ``grid``; nonpositive when the bound holds."""
    tm = truncate_center(mu, n)
    return max(tm.c_gap(x) - abs(x) / n for x in grid)


# -- file format --


def _parse_endpoint(v) -> float:
    if v is None:
        raise MeasureError("interval endpoints must be numbers or 'inf'/'-inf'")
    return float(v)


def measure_from_dict(doc: dict, tol: float = 1e-9) -> TargetMeasure:
    """Build a measure from ``{"atoms": [[x, m], ...], "densities": [...]}``.

    Each density entry is ``{"family", "interval": [a, b], "params": {...},
    "weight"}`` with params ``beta`` and (power only) ``pivot``.  Masses
    summing to 1 within ``tol`` are renormalised; larger mismatches raise.
    """
    if not isinstance(doc, dict):
        raise MeasureError("measure document must be a mapping")
    unknown = set(doc) - {"atoms", "densities", "name", "description"}
    if unknown:
        raise MeasureError(f"unknown keys in measure document: {sorted(unknown)}")
    atoms = []
    for entry in doc.get("atoms", []):
        if len(entry) != 2:
            raise MeasureError(f"atom entry {entry!r} must be [location, mass]")
        atoms.append((float(entry[0]), float(entry[1])))
    pieces = []
    for d in doc.get("densities", []):
        params = dict(d.get("params", {}))
        a, b = (_parse_endpoint(v) for v in d["interval"])
        pieces.append(
            DensityPiece(
                d["family"], a, b, float(d["weight"]), float(params.get("beta", 0.0)), float(params.get("pivot", 0.0))
            )
        )
    total = sum(m for _, m in atoms) + sum(p.weight for p in pieces)
    if abs(total - 1.0) > tol:
        raise MeasureError(f"masses sum to {total!r}, not 1 (tolerance {tol})")
    merged: dict[float, float] = {}
    for x, m in atoms:
        if m <= 0:
            raise MeasureError("atom masses must be positive")
        merged[x] = merged.get(x, 0.0) + m
    return TargetMeasure(
        tuple((x, m / total) for x, m in sorted(merged.items())), tuple(p.scaled(1.0 / total) for p in pieces)
    )


def measure_to_dict(mu: TargetMeasure) -> dict:
    def num(v):
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf")

    dens = []
    for p in mu.pieces:
        params = {"beta": p.beta}
        if p.family == "power":
            params["pivot"] = p.pivot
        dens.append({"family": p.family, "interval": [num(p.lo), num(p.hi)], "params": params, "weight": p.weight})
    return {"atoms": [[x, m] for x, m in mu.atoms], "densities": dens}
