"""Integrability of the running maximum modulus of the embedding.

Every criterion reduces to the finiteness of a tail integral over
``[1, inf)`` plus a moment condition on ``nu``.  Integrals are evaluated on
doubling segments ``[2^i, 2^(i+1)]`` in the log variable; the sequence of
partial sums at cutoffs ``2^4 .. 2^20`` is then classified:

* Cauchy: the relative change over the last segment is below ``1e-8``;
* otherwise the segment increments ``d_k`` are fitted as ``d_k ~ k^-a``
  over the last eight points.  ``a <= 1.1`` is read as divergent (this
  catches ``int dy / (y log y)``, whose increments decay like ``1/k``),
  ``a >= 1.5`` as convergent, anything between as indeterminate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize, special

from .diffusion import (
    DiffusionTarget,
    NotEmbeddable,
    ScaleFunction,
    SymmetricBessel,
    rho_zeta_nu,
)
from .measure import INF, DensityPiece, TargetMeasure

CUTOFF_EXPONENTS = tuple(range(4, 21))
CAUCHY_RTOL = 1e-8
FIT_POINTS = 8
DIVERGE_MAX_EXPONENT = 1.1
CONVERGE_MIN_EXPONENT = 1.5


class WrongCase(ValueError):
    """The scale image is not of the shape this criterion handles."""


class BoundsUnverified(ValueError):
    """The supplied growth bounds on ``|s|`` fail a spot check."""


class Verdict(str, enum.Enum):
    SUFFICIENT_HOLDS = "Sufficient-holds"
    NECESSARY_FAILS = "Necessary-fails"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class TailIntegral:
    name: str
    cutoffs: tuple[float, ...]
    partials: tuple[float, ...]
    status: str  # convergent | divergent | indeterminate
    exponent: float | None = None
    geometric_rate: float | None = None
    reason: str = ""

    @property
    def value(self) -> float:
        return self.partials[-1] if self.status == "convergent" else INF

    @property
    def finite(self) -> bool | None:
        return {"convergent": True, "divergent": False}.get(self.status)

    def rows(self):
        for c, v in zip(self.cutoffs, self.partials):
            yield self.name, c, v


def _segment(f: Callable[[float], float], a: float, b: float) -> float:
    g = lambda t: f(math.exp(t)) * math.exp(t)
    val, _ = integrate.quad(g, math.log(a), math.log(b), epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def classify_partials(partials, cutoffs) -> tuple[str, float | None, float | None, str]:
    P = np.asarray(partials, dtype=float)
    if not np.all(np.isfinite(P)):
        return "divergent", None, None, "non-finite partial integral"
    d = np.diff(np.concatenate(([0.0], P)))[-FIT_POINTS:]
    k = np.log2(np.asarray(cutoffs, dtype=float))[-FIT_POINTS:]
    last = abs(P[-1] - P[-2])
    if last <= CAUCHY_RTOL * max(abs(P[-1]), 1e-300) or np.all(d == 0):
        return "convergent", None, None, f"Cauchy: last relative change {last / max(abs(P[-1]), 1e-300):.3g}"
    pos = d > 0
    if pos.sum() < 3:
        return "indeterminate", None, None, "too few positive increments to fit"
    lk, ld = np.log(k[pos]), np.log(d[pos])
    a = -np.polyfit(lk, ld, 1)[0]
    r = -np.polyfit(k[pos], ld, 1)[0]
    if a <= DIVERGE_MAX_EXPONENT:
        return "divergent", a, r, f"increments decay like k^-{a:.3g} (k = log2 cutoff)"
    if a >= CONVERGE_MIN_EXPONENT:
        return "convergent", a, r, f"increments decay like k^-{a:.3g}"
    return "indeterminate", a, r, f"increment exponent {a:.3g} between thresholds"


def tail_integral(name: str, f: Callable[[float], float], exponents=CUTOFF_EXPONENTS) -> TailIntegral:
    """Partial integrals of ``f`` over ``[1, 2^e]`` and their classification."""
    total = 0.0
    cutoffs, partials = [], []
    top = max(exponents)
    for i in range(top):
        total += _segment(f, 2.0**i, 2.0 ** (i + 1))
        if i + 1 in exponents:
            cutoffs.append(2.0 ** (i + 1))
            partials.append(total)
    status, a, r, why = classify_partials(partials, cutoffs)
    return TailIntegral(name, tuple(cutoffs), tuple(partials), status, a, r, why)


# -- reports --


@dataclass
class HpReport:
    p: float
    verdict: Verdict
    criterion: str
    case: str | None = None
    iff: bool = False
    nu_in_lp: bool | None = None
    m: float | None = None
    integrals: dict[str, TailIntegral] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "verdict": self.verdict.value,
            "criterion": self.criterion,
            "case": self.case,
            "iff": self.iff,
            "nu_in_Lp": self.nu_in_lp,
            "m": self.m,
            "integrals": {
                k: {"status": v.status, "last_partial": v.partials[-1], "exponent": v.exponent, "reason": v.reason}
                for k, v in self.integrals.items()
            },
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class HpQuery:
    p: float
    target: DiffusionTarget
    scale_bounds: tuple[float, float, float, float] | None = None  # k, K, r, q

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("p must be positive")
        if self.scale_bounds is not None:
            k, K, r, q = self.scale_bounds
            if not (k > 0 and K > 0 and q >= r >= 0):
                raise ValueError("need k, K > 0 and q >= r >= 0")


def _delta_c(t: DiffusionTarget) -> Callable[[float], float]:
    return lambda y: t.c_Y(y) - t.c_Y(-y)


def _require_line(t: DiffusionTarget):
    if t.scale.lo != -INF or t.scale.hi != INF:
        raise WrongCase("criterion needs the state space to be the whole line")


# -- bounds on the extremal tails --


def nu_bounds(t: DiffusionTarget, z: float) -> tuple[float, float, float, float]:
    """``(upperPlus, upperMinus, lowerPlus, lowerMinus)`` for ``nu_+(z)``, ``nu_-(z)``."""
    s = t.scale
    if not (s.contains(z) and s.contains(-z)):
        raise ValueError("need both z and -z inside the state space")
    sz, smz = s(z), abs(s(-z))
    cz, cmz = t.c_Y(z), t.c_Y(-z)
    abs_tail = t.nu_abs_tail(z)
    r = rho_zeta_nu(t.nu, s, z, t)
    up_p = max(0.0, cmz - cz - smz * t.nu.mass_below(-z, True)) / sz * (1.0 if z > r.rho_plus else 0.0) + abs_tail
    up_m = max(0.0, cz - cmz - sz * t.nu.mass_above(z, True)) / smz * (1.0 if z > r.rho_minus else 0.0) + abs_tail
    lo_p = max(0.0, cmz - cz) / (sz + smz) + t.nu.mass_above(z, True)
    lo_m = max(0.0, cz - cmz) / (sz + smz) + t.nu.mass_below(-z, True)
    return up_p, up_m, lo_p, lo_m


def sum_bounds(t: DiffusionTarget, z: float) -> tuple[float, float]:
    """Upper and lower bounds on ``nu_+(z) + nu_-(z)``."""
    s = t.scale
    sz, smz = s(z), abs(s(-z))
    dc = abs(t.c_Y(z) - t.c_Y(-z))
    tail = t.nu_abs_tail(z)
    return (1.0 / sz + 1.0 / smz) * dc + 2.0 * tail, dc / (sz + smz) + tail


# -- criteria --


def hp_condition_check(t: DiffusionTarget, p: float) -> HpReport:
    """Generic two-sided test: sufficient and necessary tail integrals plus ``nu in L^p``."""
    _require_line(t)
    s, dc = t.scale, _delta_c(t)
    lp = t.nu.in_lp(p)
    suff = tail_integral("sufficient", lambda y: y ** (p - 1) * (1.0 / s(y) + 1.0 / abs(s(-y))) * abs(dc(y)))
    nec = tail_integral("necessary", lambda y: y ** (p - 1) * abs(dc(y)) / (s(y) + abs(s(-y))))
    rep = HpReport(p, Verdict.INDETERMINATE, "two-sided", nu_in_lp=lp, m=t.m, integrals={"sufficient": suff, "necessary": nec})
    symmetric = all(abs(s(y) + s(-y)) <= 1e-12 * abs(s(y)) for y in (1.0, 3.0, 10.0, 1e3))
    rep.iff = symmetric
    if not lp or nec.finite is False:
        rep.verdict = Verdict.NECESSARY_FAILS
    elif suff.finite:
        rep.verdict = Verdict.SUFFICIENT_HOLDS
    else:
        rep.notes.append("sufficient integral not shown finite and necessary integral not shown infinite")
    return rep


@dataclass(frozen=True, eq=False)
class _Mirrored(ScaleFunction):
    base: ScaleFunction = None
    family = "mirrored"

    @property
    def lo(self):
        return -self.base.hi

    @property
    def hi(self):
        return -self.base.lo

    @property
    def y0(self):
        return -self.base.y0

    def raw(self, y):
        return -self.base.raw(-np.asarray(y, dtype=float))

    def raw_inverse(self, v):
        return -self.base.raw_inverse(-np.asarray(v, dtype=float))

    def _limit(self, y):
        return -self.base._limit(-y)


def transient_hp(t: DiffusionTarget, p: float) -> HpReport:
    """Exact criterion when the natural-scale image is a half-line."""
    lo, hi = t.scale.image
    if (lo == -INF) == (hi == INF):
        raise WrongCase("image is not a half-line")
    if lo != -INF:
        t = DiffusionTarget(t.nu.reflect(), _Mirrored(base=t.scale))
    cls = t.classification
    if not cls.embeddable:
        raise NotEmbeddable(cls.message)
    s = t.scale
    lp = t.nu.in_lp(p)
    rep = HpReport(p, Verdict.INDETERMINATE, "transient", iff=True, nu_in_lp=lp, m=cls.m)
    if s.lo != -INF:
        # the process never goes below a finite level: only the upper side matters
        rep.notes.append("state space bounded below; criterion reduces to nu in L^p")
        rep.verdict = Verdict.SUFFICIENT_HOLDS if lp else Verdict.NECESSARY_FAILS
        return rep
    cond1 = tail_integral("cond1", lambda z: z ** (p - 1) / abs(s(-z)))
    rep.integrals["cond1"] = cond1
    if cls.boundary:
        dc = _delta_c(t)
        cond2 = tail_integral("cond2", lambda z: z ** (p - 1) / abs(s(-z)) * abs(dc(z)))
        rep.integrals["cond2"] = cond2
        decisive = cond2
        rep.case = "m=0"
    else:
        decisive = cond1
        rep.case = "m>0"
    if not lp or decisive.finite is False:
        rep.verdict = Verdict.NECESSARY_FAILS
    elif decisive.finite:
        rep.verdict = Verdict.SUFFICIENT_HOLDS
    return rep


def finite_interval_hp(t: DiffusionTarget, p: float) -> HpReport:
    lo, hi = t.scale.image
    if lo == -INF or hi == INF:
        raise WrongCase("image is not bounded")
    if not t.classification.embeddable:
        raise NotEmbeddable(t.classification.message)
    lp = t.nu.in_lp(p)
    return HpReport(
        p,
        Verdict.SUFFICIENT_HOLDS if lp else Verdict.NECESSARY_FAILS,
        "bounded-image",
        iff=True,
        nu_in_lp=lp,
        m=t.m,
    )


def verify_scale_bounds(s: ScaleFunction, bounds, y_max: float = 1e6, n: int = 200) -> None:
    k, K, r, q = bounds
    ys = np.geomspace(1.0, y_max, n)
    for sign in (1.0, -1.0):
        pts = sign * ys
        inside = np.array([s.contains(y) for y in pts])
        if not inside.any():
            continue
        a = np.abs(np.asarray(s(pts[inside]), dtype=float))
        yy = ys[inside]
        if np.any(k * yy**r > a * (1 + 1e-12)) or np.any(a > K * yy**q * (1 + 1e-12)):
            raise BoundsUnverified(f"k|y|^r <= |s(y)| <= K|y|^q fails for bounds {bounds}")


def sbounds_classify(query: HpQuery) -> HpReport:
    """Growth-exponent criterion from ``k|y|^r <= |s(y)| <= K|y|^q`` on ``|y| >= 1``."""
    if query.scale_bounds is None:
        raise ValueError("scale bounds are required")
    t, p = query.target, query.p
    _require_line(t)
    verify_scale_bounds(t.scale, query.scale_bounds)
    _, _, r, q = query.scale_bounds
    iff = r == q
    lp = t.nu.in_lp(p)
    lp_hi = t.nu.in_lp(p + q - r)
    rep = HpReport(p, Verdict.INDETERMINATE, "growth-bounds", iff=iff, nu_in_lp=lp, m=t.m)
    if p > q:
        rep.case = "i"
        m0 = t.m is not None and abs(t.m) <= 1e-12 * max(1.0, *t.mu.tail_means())
        if m0 and lp_hi:
            rep.verdict = Verdict.SUFFICIENT_HOLDS
        elif not (m0 and lp):
            rep.verdict = Verdict.NECESSARY_FAILS
    elif p < r:
        rep.case = "ii"
        if lp_hi:
            rep.verdict = Verdict.SUFFICIENT_HOLDS
        elif not lp:
            rep.verdict = Verdict.NECESSARY_FAILS
    else:
        rep.case = "iii"
        dc = _delta_c(t)
        lower = tail_integral("implower", lambda y: y ** (p - r - 1) * abs(dc(y)))
        rep.integrals["implower"] = lower
        upper = lower
        if q != r:
            upper = tail_integral("impupper", lambda y: y ** (p - q - 1) * abs(dc(y)))
            rep.integrals["impupper"] = upper
        if lp and lower.finite:
            rep.verdict = Verdict.SUFFICIENT_HOLDS
        elif not lp or upper.finite is False:
            rep.verdict = Verdict.NECESSARY_FAILS
    return rep


def hp_check(t: DiffusionTarget, p: float, bounds=None) -> HpReport:
    """Pick the criterion matching the shape of the natural-scale image."""
    lo, hi = t.scale.image
    if lo == -INF and hi == INF:
        if bounds is not None:
            return sbounds_classify(HpQuery(p, t, tuple(bounds)))
        return hp_condition_check(t, p)
    if lo == -INF or hi == INF:
        return transient_hp(t, p)
    return finite_interval_hp(t, p)


# -- the logarithmic counterexample --


@dataclass(frozen=True)
class BesselCounterexample:
    alpha: float
    p: float
    density_mass: float
    b: float
    b_closed_form: float
    target: DiffusionTarget


def bessel_counterexample(alpha: float = 1.0) -> BesselCounterexample:
    """``nu(dy) = y^(-p-1) / (log y)^2 dy`` on ``[e, inf)`` with ``p = 1 - alpha/2``,
    remaining mass at ``-b`` chosen so that ``int s dnu = 0``."""
    s = SymmetricBessel(alpha)
    p = s.power
    md = math.exp(-p) - p * special.exp1(p)  # int_1^inf e^(-pt) / t^2 dt
    # the density contributes int_e^inf 1 / (y (log y)^2) dy = 1 to int s dnu
    balance = lambda b: 1.0 - (1.0 - md) * b**p
    lo, hi = 0.0, 1.0
    while balance(hi) > 0:
        hi *= 2.0
    while hi - lo > 1e-12 * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if balance(mid) > 0:
            lo = mid
        else:
            hi = mid
    b = 0.5 * (lo + hi)
    closed = (1.0 / (1.0 - md)) ** (1.0 / p)
    nu = TargetMeasure(((-b, 1.0 - md),), (DensityPiece("logpower", math.e, INF, md, p),))
    return BesselCounterexample(alpha, p, md, b, closed, DiffusionTarget(nu, s))
