"""Embedding in regular diffusions through their scale function.

A diffusion ``Y`` on an interval ``I`` with strictly increasing scale ``s``
(``s(y0) = 0`` at the starting point) becomes the local martingale
``M = s(Y)``.  The target law ``nu`` of ``Y_T`` is pushed to ``mu = nu o s^-1``,
the martingale construction is applied to ``mu``, and every path quantity
is carried back through ``s^-1``.  Running extremes commute with the
monotone map, so no time change or SDE solver is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

from .barrier import BarrierSet
from .measure import INF, DensityPiece, MeasureError, TargetMeasure
from .simulate import (
    SCALE_BOUNDARY,
    THRESH_FUDGE,
    SimulationResult,
    WalkConfig,
    simulate_embedding,
)

PUSH_BINS = 256
PUSH_TAIL = 1e-12


class SupportOutsideInterval(MeasureError):
    pass


class MeanUndefined(MeasureError):
    """``int |s| dnu`` is infinite where the classification needs the mean."""


class NotEmbeddable(MeasureError):
    pass


class ScaleBoundaryHit(RuntimeError):
    """A simulated path reached the edge of the natural-scale state space."""


# -- scale functions --


class ScaleFunction:
    """Strictly increasing ``s`` on the open interval ``(lo, hi)``, rebased so ``s(y0) = 0``."""

    family = "custom"
    lo: float = -INF
    hi: float = INF
    y0: float = 0.0

    def raw(self, y):
        raise NotImplementedError

    def raw_inverse(self, v):
        raise NotImplementedError

    @property
    def offset(self) -> float:
        return float(self.raw(self.y0))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = self.raw(y) - self.offset
        return float(out) if out.ndim == 0 else out

    def inverse(self, m):
        m = np.asarray(m, dtype=float)
        out = self.raw_inverse(m + self.offset)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def interval(self) -> tuple[float, float]:
        return self.lo, self.hi

    @property
    def image(self) -> tuple[float, float]:
        return self._limit(self.lo), self._limit(self.hi)

    def _limit(self, y: float) -> float:
        return self(y)

    def contains(self, y: float) -> bool:
        return self.lo < y < self.hi

    def affine_on(self, a: float, b: float):
        """``(A, B)`` when ``s(y) = A y + B`` on ``[a, b]``, else ``None``."""
        return None

    def knots(self) -> list[float]:
        return []

    def describe(self) -> dict:
        return {"family": self.family}


@dataclass(frozen=True, eq=False)
class Identity(ScaleFunction):
    family = "identity"

    def raw(self, y):
        return np.asarray(y, dtype=float)

    def raw_inverse(self, v):
        return np.asarray(v, dtype=float)

    def _limit(self, y):
        return y

    def affine_on(self, a, b):
        return 1.0, 0.0


@dataclass(frozen=True, eq=False)
class DriftingBM(ScaleFunction):
    """``B_t + kappa t``; with ``y0 = 0`` and ``kappa > 0``, ``s(y) = 1 - exp(-2 kappa y)``."""

    kappa: float = 1.0
    y0: float = 0.0
    family = "driftingBM"

    def __post_init__(self):
        if self.kappa == 0:
            raise ValueError("kappa must be nonzero (use the identity scale)")

    @property
    def _sign(self):
        return 1.0 if self.kappa > 0 else -1.0

    def raw(self, y):
        with np.errstate(over="ignore"):
            return -self._sign * np.exp(-2.0 * self.kappa * np.asarray(y, dtype=float))

    def raw_inverse(self, v):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -np.log(-self._sign * np.asarray(v, dtype=float)) / (2.0 * self.kappa)

    def _limit(self, y):
        if math.isinf(y):
            t = -2.0 * self.kappa * y
            e = INF if t > 0 else 0.0
            return -self._sign * e - self.offset
        return self(y)

    def describe(self):
        return {"family": self.family, "kappa": self.kappa, "y0": self.y0}


@dataclass(frozen=True, eq=False)
class Bessel3(ScaleFunction):
    """Three-dimensional Bessel process on ``(0, inf)``: raw scale ``-1/y``."""

    y0: float = 1.0
    lo: float = 0.0
    hi: float = INF
    family = "bessel3"

    def __post_init__(self):
        if not self.y0 > 0:
            raise ValueError("Bes(3) must start at a positive level")

    def raw(self, y):
        with np.errstate(divide="ignore"):
            return -1.0 / np.asarray(y, dtype=float)

    def raw_inverse(self, v):
        with np.errstate(divide="ignore"):
            return -1.0 / np.asarray(v, dtype=float)

    def _limit(self, y):
        if y == 0.0:
            return -INF
        if y == INF:
            return 1.0 / self.y0
        return self(y)

    def describe(self):
        return {"family": self.family, "y0": self.y0}


@dataclass(frozen=True, eq=False)
class SymmetricBessel(ScaleFunction):
    """``s(y) = sign(y) |y|**(1 - alpha/2)`` for ``alpha in (0, 2)``."""

    alpha: float = 1.0
    family = "symmetricBessel"

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")

    @property
    def power(self) -> float:
        return 1.0 - self.alpha / 2.0

    def raw(self, y):
        y = np.asarray(y, dtype=float)
        return np.sign(y) * np.abs(y) ** self.power

    def raw_inverse(self, v):
        v = np.asarray(v, dtype=float)
        return np.sign(v) * np.abs(v) ** (1.0 / self.power)

    def _limit(self, y):
        return y if math.isinf(y) else self(y)

    def describe(self):
        return {"family": self.family, "alpha": self.alpha}


@dataclass(frozen=True, eq=False)
class PiecewiseLinear(ScaleFunction):
    """Continuous piecewise-linear scale through strictly increasing knots.

    The state space is the open knot range, so the image is bounded.
    """

    ys: tuple[float, ...] = (-1.0, 1.0)
    ss: tuple[float, ...] = (-1.0, 1.0)
    y0: float = 0.0
    family = "userPiecewise"

    def __post_init__(self):
        ys, ss = np.asarray(self.ys, float), np.asarray(self.ss, float)
        if len(ys) < 2 or len(ys) != len(ss):
            raise ValueError("need at least two (y, s) knots")
        if np.any(np.diff(ys) <= 0) or np.any(np.diff(ss) <= 0):
            raise ValueError("knots must be strictly increasing in both coordinates")
        if not np.all(np.isfinite(ys)) or not np.all(np.isfinite(ss)):
            raise ValueError("knots must be finite")
        if not ys[0] < self.y0 < ys[-1]:
            raise ValueError("start point must lie inside the knot range")

    @property
    def lo(self):
        return self.ys[0]

    @property
    def hi(self):
        return self.ys[-1]

    def raw(self, y):
        return np.interp(np.asarray(y, dtype=float), self.ys, self.ss)

    def raw_inverse(self, v):
        return np.interp(np.asarray(v, dtype=float), self.ss, self.ys)

    def knots(self):
        return list(self.ys)

    def affine_on(self, a, b):
        i = int(np.searchsorted(self.ys, a, side="right")) - 1
        if i < 0 or i >= len(self.ys) - 1 or b > self.ys[i + 1]:
            return None
        A = (self.ss[i + 1] - self.ss[i]) / (self.ys[i + 1] - self.ys[i])
        return A, self.ss[i] - A * self.ys[i] - self.offset

    def describe(self):
        return {"family": self.family, "knots": [[y, s] for y, s in zip(self.ys, self.ss)], "y0": self.y0}


@dataclass(frozen=True, eq=False)
class CustomScale(ScaleFunction):
    """User callable ``s`` on ``(lo, hi)`` with image endpoints supplied; inverse by bisection."""

    fn: Callable[[float], float] = None
    lo: float = -INF
    hi: float = INF
    image_lo: float = -INF
    image_hi: float = INF
    y0: float = 0.0
    family = "custom"

    def raw(self, y):
        return np.vectorize(lambda v: float(self.fn(v)), otypes=[float])(np.asarray(y, dtype=float))

    def raw_inverse(self, v):
        def one(t):
            if t <= self.image_lo + self.offset:
                return self.lo
            if t >= self.image_hi + self.offset:
                return self.hi
            a, b = self._bracket(t)
            return optimize.brentq(lambda y: float(self.fn(y)) - t, a, b, xtol=1e-14, rtol=1e-15, maxiter=500)

        return np.vectorize(one, otypes=[float])(np.asarray(v, dtype=float))

    def _bracket(self, t):
        a = self.y0 - 1.0 if self.lo == -INF else self.lo
        b = self.y0 + 1.0 if self.hi == INF else self.hi
        if self.lo == -INF:
            while float(self.fn(a)) > t:
                a = self.y0 - 2.0 * (self.y0 - a)
        else:
            a = self.lo + 1e-300
        if self.hi == INF:
            while float(self.fn(b)) < t:
                b = self.y0 + 2.0 * (b - self.y0)
        else:
            b = self.hi - abs(self.hi) * 1e-16
        return a, b

    @property
    def image(self):
        return self.image_lo, self.image_hi


def scale_from_dict(doc: dict) -> ScaleFunction:
    """``{"family": "driftingBM", "kappa": 1.0}`` and friends."""
    if not isinstance(doc, dict) or "family" not in doc:
        raise ValueError("scale document needs a 'family' key")
    fam = doc["family"]
    extra = {k: v for k, v in doc.items() if k not in ("family", "name", "description")}
    if fam == "identity":
        if extra:
            raise ValueError(f"identity scale takes no parameters, got {sorted(extra)}")
        return Identity()
    if fam == "driftingBM":
        return DriftingBM(kappa=float(extra.pop("kappa", 1.0)), y0=float(extra.pop("y0", 0.0)), **_no_extra(extra))
    if fam == "bessel3":
        return Bessel3(y0=float(extra.pop("y0", 1.0)), **_no_extra(extra))
    if fam == "symmetricBessel":
        return SymmetricBessel(alpha=float(extra.pop("alpha", 1.0)), **_no_extra(extra))
    if fam == "userPiecewise":
        knots = extra.pop("knots")
        y0 = float(extra.pop("y0", 0.0))
        _no_extra(extra)
        return PiecewiseLinear(tuple(float(k[0]) for k in knots), tuple(float(k[1]) for k in knots), y0)
    raise ValueError(f"unknown scale family {fam!r}")


def _no_extra(extra):
    if extra:
        raise ValueError(f"unexpected scale parameters {sorted(extra)}")
    return {}


# -- pushforward --


def _split_at(piece: DensityPiece, cuts: Sequence[float]) -> list[DensityPiece]:
    pts = [piece.lo] + [c for c in sorted(cuts) if piece.lo < c < piece.hi] + [piece.hi]
    out = []
    for a, b in zip(pts[:-1], pts[1:]):
        r = piece.restrict(a, b)
        if r is not None:
            out.append(r)
    return out


def _closed_form(piece: DensityPiece, s: ScaleFunction) -> DensityPiece | None:
    a, b = piece.lo, piece.hi
    ua, ub = s._limit(a), s._limit(b)
    fam, beta, w = piece.family, piece.beta, piece.weight
    aff = s.affine_on(a, b)
    if aff is not None:
        A, B = aff
        if fam == "uniform":
            return DensityPiece("uniform", ua, ub, w)
        if fam == "power":
            return DensityPiece("power", ua, ub, w, beta, A * piece.pivot + B)
        if fam == "exponential":
            return DensityPiece("exponential", ua, ub, w, beta / A)
        if fam == "logpower" and A == 1.0 and B == 0.0:
            return piece
        return None
    if isinstance(s, SymmetricBessel) and (a >= 0 or b <= 0):
        p = s.power
        if fam == "uniform":
            return DensityPiece("power", ua, ub, w, -1.0 / p, 0.0)
        if fam == "power" and piece.pivot == 0.0:
            return DensityPiece("power", ua, ub, w, beta / p, 0.0)
        if fam == "logpower":
            return DensityPiece("logpower", ua, ub, w, beta / p)
        return None
    if isinstance(s, DriftingBM) and s.kappa > 0 and s.y0 == 0.0:
        k = s.kappa
        if fam == "uniform":
            return DensityPiece("power", ua, ub, w, 0.0, 1.0)
        if fam == "exponential":
            return DensityPiece("power", ua, ub, w, -beta / (2.0 * k), 1.0)
        return None
    if isinstance(s, Bessel3):
        piv = 1.0 / s.y0
        if fam == "uniform":
            return DensityPiece("power", ua, ub, w, 1.0, piv)
        if fam == "power" and piece.pivot == 0.0:
            return DensityPiece("power", ua, ub, w, -beta, piv)
        return None
    return None


def _quantile(piece: DensityPiece, q: float) -> float:
    """``x`` with ``piece.mass(lo, x) = q``."""
    lo, hi = piece.lo, piece.hi
    a = lo if math.isfinite(lo) else None
    b = hi if math.isfinite(hi) else None
    if a is None:
        b0 = b
        step = max(1.0, abs(b0))
        a = b0 - step
        while piece.mass(-INF, a) > q:
            step *= 2.0
            a = b0 - step
    if b is None:
        a0 = a if math.isfinite(lo) else a
        step = max(1.0, abs(a0))
        b = a0 + step
        while piece.mass(-INF, b) < q:
            step *= 2.0
            b = a0 + step
    f = lambda x: piece.mass(-INF, x) - q
    return optimize.brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def _bin_pushforward(piece: DensityPiece, s: ScaleFunction, bins: int = PUSH_BINS) -> list[DensityPiece]:
    """Equal-mass bins in ``y`` mapped to uniform pieces in scale; bin masses are exact."""
    w = piece.weight
    qs = np.linspace(0.0, w, bins + 1)
    if not math.isfinite(piece.lo):
        qs[0] = PUSH_TAIL * w
    if not math.isfinite(piece.hi):
        qs[-1] = w - PUSH_TAIL * w
    edges = [piece.lo if math.isfinite(piece.lo) else _quantile(piece, qs[0])]
    edges += [_quantile(piece, q) for q in qs[1:-1]]
    edges += [piece.hi if math.isfinite(piece.hi) else _quantile(piece, qs[-1])]
    out = []
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        m = piece.mass(a, b)
        # the trimmed tails ride along with the outermost bins
        if i == 0:
            m = piece.mass(-INF, b)
        if i == len(edges) - 2:
            m = piece.mass(a, INF)
        ua, ub = s(a), s(b)
        if m > 0 and ub > ua:
            out.append(DensityPiece("uniform", ua, ub, m))
    return out


def pushforward(nu: TargetMeasure, s: ScaleFunction, bins: int = PUSH_BINS) -> TargetMeasure:
    """Law of ``s(Y_T)`` when ``Y_T ~ nu``."""
    for x, _ in nu.atoms:
        if not s.contains(x):
            raise SupportOutsideInterval(f"atom at {x!r} outside the state space {s.interval}")
    for p in nu.pieces:
        if p.lo < s.lo or p.hi > s.hi:
            raise SupportOutsideInterval(f"density on [{p.lo}, {p.hi}] leaves the state space {s.interval}")
    atoms = [(s(x), m) for x, m in nu.atoms]
    cuts = [0.0] + s.knots()
    pieces: list[DensityPiece] = []
    for p in nu.pieces:
        for sub in _split_at(p, cuts):
            mapped = _closed_form(sub, s)
            if mapped is not None:
                pieces.append(mapped)
            else:
                pieces.extend(_bin_pushforward(sub, s, bins))
    return TargetMeasure(tuple(atoms), tuple(pieces))


# -- classification --


@dataclass(frozen=True)
class Classification:
    case: int  # 1 recurrent, 2 half-line image, 3 bounded image
    kind: str  # RecurrentAlwaysEmbeddable | NeedsMeanSign | NeedsMeanZero
    embeddable: bool
    m: float | None
    required: str | None = None
    boundary: bool = False
    message: str = ""


MEAN_TOL = 1e-12


def _scale_mean(mu: TargetMeasure) -> tuple[float, float]:
    pos, neg = mu.tail_means()
    return pos, neg


def classify_embeddable(nu: TargetMeasure, s: ScaleFunction, mu: TargetMeasure | None = None, tol: float = MEAN_TOL):
    mu = pushforward(nu, s) if mu is None else mu
    lo, hi = s.image
    if lo == -INF and hi == INF:
        pos, neg = _scale_mean(mu)
        m = pos - neg if math.isfinite(pos) and math.isfinite(neg) else None
        return Classification(1, "RecurrentAlwaysEmbeddable", True, m, None, False, "image is the whole line")
    pos, neg = _scale_mean(mu)
    if not (math.isfinite(pos) and math.isfinite(neg)):
        raise MeanUndefined("int |s| dnu is infinite, so m does not exist")
    m = pos - neg
    scale = max(1.0, pos, neg)
    if lo == -INF or hi == INF:
        if lo == -INF:
            ok, req = m >= -tol * scale, ">= 0"
        else:
            ok, req = m <= tol * scale, "<= 0"
        boundary = abs(m) <= tol * scale
        msg = f"half-line image ({lo}, {hi}); need m {req}; m = {m!r}"
        if boundary:
            msg += " (boundary case m = 0)"
        return Classification(2, "NeedsMeanSign", ok, m, req, boundary, msg)
    ok = abs(m) <= tol * scale
    return Classification(3, "NeedsMeanZero", ok, m, "= 0", False, f"bounded image ({lo}, {hi}); need m = 0; m = {m!r}")


@dataclass
class DiffusionTarget:
    nu: TargetMeasure
    scale: ScaleFunction
    mu: TargetMeasure = None
    classification: Classification = None

    def __post_init__(self):
        if self.mu is None:
            self.mu = pushforward(self.nu, self.scale)
        if self.classification is None:
            self.classification = classify_embeddable(self.nu, self.scale, self.mu)

    @property
    def m(self) -> float | None:
        return self.classification.m

    def c_Y(self, y: float) -> float:
        return self.mu.c(self.scale(y)) if self.scale.contains(y) else self.mu.c(self.scale._limit(y))

    def nu_abs_tail(self, z: float) -> float:
        """``nu({|y| >= z})``."""
        return self.nu.mass_above(z, True) + self.nu.mass_below(-z, True)


# -- diffusion-scale barrier quantities --


@dataclass(frozen=True)
class RhoZetaNu:
    z: float
    rho_plus: float | None
    rho_minus: float | None
    zeta_plus: float | None
    zeta_minus: float | None
    nu_plus: float | None
    nu_minus: float | None


def rho_zeta_nu(nu: TargetMeasure, s: ScaleFunction, z: float, target: DiffusionTarget | None = None) -> RhoZetaNu:
    """Diffusion-scale barriers at level ``z``; a side is ``None`` when ``+-z`` is outside ``I``
    or lies on the wrong side of the start."""
    if not z > 0:
        raise ValueError("z must be positive")
    tgt = target if target is not None else DiffusionTarget(nu, s)
    bs = BarrierSet(tgt.mu)
    rp = zp = np_ = None
    rm = zm = nm = None
    if s.contains(z) and s(z) > 0:
        g, t = bs.plus(s(z))
        rp = -s.lo if math.isinf(g) else -s.inverse(-g)
        zp, np_ = t, t + nu.mass_above(z, True)
    if s.contains(-z) and s(-z) < 0:
        g, t = bs.minus(-s(-z))
        rm = s.hi if math.isinf(g) else s.inverse(g)
        zm, nm = t, nu.mass_below(-z, True) + t
    return RhoZetaNu(z, rp, rm, zp, zm, np_, nm)


def c_Y_direct(nu: TargetMeasure, s: ScaleFunction, y: float) -> float:
    """``c_Y`` straight from ``nu`` (exact on atoms, quadrature on pieces)."""
    sy = s(y)
    total = 0.0
    for w, m in nu.atoms:
        sw = s(w)
        if sy >= 0 and sw >= 0:
            total += m * min(sy, sw)
        elif sy < 0 and sw < 0:
            total += m * min(-sy, -sw)
    for p in nu.pieces:
        lo, hi = (max(p.lo, s.y0), p.hi) if sy >= 0 else (p.lo, min(p.hi, s.y0))
        if hi <= lo:
            continue
        f = lambda w: min(abs(sy), abs(s(w))) * float(p.pdf(w))
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
        total += val
    return total


def rho_plus_direct(nu: TargetMeasure, s: ScaleFunction, z: float) -> float:
    """``rho_+(z)`` by minimising the diffusion-scale chord slope over ``y``.

    Candidates are ``|negative atoms|``; density segments get a bounded
    scalar minimisation.  Returns ``-s.lo`` when no minimiser exists.
    """
    cz, sz = c_Y_direct(nu, s, z), s(z)

    def slope(y):
        return (cz - c_Y_direct(nu, s, -y)) / (sz - s(-y))

    cands = [(-w, slope(-w)) for w, _ in nu.atoms if w < s.y0]
    for p in nu.pieces:
        if p.lo < s.y0:
            a, b = max(-min(p.hi, s.y0), 1e-12), -p.lo
            if math.isinf(b):
                b = max(2 * a, 1e6)
            r = optimize.minimize_scalar(slope, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
            cands.append((float(r.x), float(r.fun)))
    if not cands:
        return -s.lo
    fmin = min(v for _, v in cands)
    tol = 1e-13 * (1 + abs(fmin))
    unbounded = nu.support_lower == s.lo
    if s.image[0] == -INF and (fmin > tol or (fmin >= -tol and unbounded)):
        return -s.lo
    return min(y for y, v in cands if v <= fmin + tol)


# -- simulation --


@dataclass
class DiffusionSamples:
    terminal: np.ndarray
    sup: np.ndarray
    inf: np.ndarray
    scale_run: SimulationResult

    @property
    def abs_sup(self) -> np.ndarray:
        return np.maximum(np.abs(self.sup), np.abs(self.inf))


def simulate_diffusion_embedding(
    nu: TargetMeasure, s: ScaleFunction, cfg: WalkConfig, N: int, allow_boundary: bool = False
) -> DiffusionSamples:
    tgt = DiffusionTarget(nu, s)
    if not tgt.classification.embeddable:
        raise NotEmbeddable(tgt.classification.message)
    lo, hi = s.image
    eps = cfg.epsilon
    walls = (
        None if lo == -INF else math.floor(lo / eps + THRESH_FUDGE),
        None if hi == INF else math.ceil(hi / eps - THRESH_FUDGE),
    )
    res = simulate_embedding(tgt.mu, cfg, N, walls=walls)
    hits = int((res.status == SCALE_BOUNDARY).sum())
    if hits and not allow_boundary:
        raise ScaleBoundaryHit(f"{hits} of {N} paths reached the scale boundary {s.image}")
    return DiffusionSamples(
        np.asarray(s.inverse(res.terminal), dtype=float),
        np.asarray(s.inverse(res.run_max), dtype=float),
        np.asarray(s.inverse(-res.run_min), dtype=float),
        res,
    )
