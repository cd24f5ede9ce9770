"""Lattice simulation of the barrier stopping rule and its exact law.

Brownian motion observed at successive exits of ``+-eps`` intervals is a
simple random walk on ``eps * Z``, so the running maximum ``S``, running
minimum ``-J`` and stopped value of the walk have exactly the law of the
Brownian skeleton.  The walk stops at the first step where

    x <= -gamma_+(S)   or   x >= gamma_-(J),

with both conditions evaluated on integer thresholds tabulated once per
run.  The same thresholds drive the Monte Carlo kernel and the exact
dynamic-programming oracle, so the two can be compared directly.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numba
import numpy as np
from numba import njit, prange

from .barrier import BarrierSet
from .measure import INF, MeasureError, TargetMeasure

if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

SENTINEL = 1 << 62
THRESH_FUDGE = 1e-9
LATTICE_TOL = 1e-12
SMALL_LAMBDA = 1e-6  # fraction of eps used to evaluate gamma at S = 0+

OK, ZERO_STOP, MAX_STEPS, OUT_OF_RANGE, SCALE_BOUNDARY = 0, 1, 2, 3, 4
STATUS_NAMES = {
    OK: "ok",
    ZERO_STOP: "zero",
    MAX_STEPS: "max_steps",
    OUT_OF_RANGE: "out_of_range",
    SCALE_BOUNDARY: "scale_boundary",
}


class MaxStepsExceeded(RuntimeError):
    """Raised when discarded paths are not acceptable to the caller."""


class StateSpaceTooLarge(RuntimeError):
    pass


class LatticeMismatch(MeasureError):
    """Atoms of the target do not sit on the requested lattice."""


def _threads_from_env():
    val = os.environ.get("SKORO_THREADS")
    if val:
        n = max(1, min(int(val), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)


# -- counter-based random bits --

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _word(key, ctr):
    return _mix64(key + _GOLDEN * np.uint64(ctr + 1))


@njit(cache=True)
def _path_key(seed, path):
    return _mix64(np.uint64(seed) ^ _mix64(np.uint64(path + 1)))


@njit(cache=True, parallel=True)
def _walk_kernel(L, U, sat_l, sat_u, seed, n_paths, max_steps, p_zero, wall_lo, wall_hi, out):
    """``out`` columns: terminal index, max index, min index (J), steps, status."""
    nl = L.shape[0]
    nu = U.shape[0]
    for p in prange(n_paths):
        key = _path_key(seed, p)
        ctr = 0
        if p_zero > 0.0:
            w = _word(key, ctr)
            ctr += 1
            u = (w >> np.uint64(11)) * (1.0 / 9007199254740992.0)
            if u < p_zero:
                out[p, 0] = 0
                out[p, 1] = 0
                out[p, 2] = 0
                out[p, 3] = 0
                out[p, 4] = 1
                continue
        i = 0
        k = 0
        j = 0
        steps = 0
        status = 0
        bits = np.uint64(0)
        nbits = 0
        while True:
            if nbits == 0:
                bits = _word(key, ctr)
                ctr += 1
                nbits = 64
            if bits & np.uint64(1):
                i += 1
            else:
                i -= 1
            bits >>= np.uint64(1)
            nbits -= 1
            steps += 1
            if i > k:
                k = i
            elif -i > j:
                j = -i
            if i <= wall_lo or i >= wall_hi:
                status = 4
                break
            if k < nl:
                lk = L[k]
            elif sat_l:
                lk = L[nl - 1]
            else:
                status = 3
                break
            if j < nu:
                uj = U[j]
            elif sat_u:
                uj = U[nu - 1]
            else:
                status = 3
                break
            if i <= lk or i >= uj:
                break
            if steps >= max_steps:
                status = 2
                break
        out[p, 0] = i
        out[p, 1] = k
        out[p, 2] = j
        out[p, 3] = steps
        out[p, 4] = status


@njit(cache=True, inline="always")
def _uniform(key, ctr):
    return (_word(key, ctr) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, parallel=True)
def _ladder_kernel(L, U, sat_l, sat_u, seed, n_paths, max_events, p_zero, wall_lo, wall_hi, out):
    """Same walk as :func:`_walk_kernel`, advanced one ladder event at a time.

    From index ``i`` inside the current strip the next event is the first
    visit to ``b = min(k + 1, U[j], wall_hi)`` or ``a = max(-j - 1, L[k], wall_lo)``;
    the walk reaches ``b`` first with probability ``(i - a) / (b - a)``.
    Column 3 counts events instead of steps.
    """
    nl = L.shape[0]
    nu = U.shape[0]
    for p in prange(n_paths):
        key = _path_key(seed, p)
        ctr = 0
        if p_zero > 0.0:
            u = _uniform(key, ctr)
            ctr += 1
            if u < p_zero:
                out[p, 0] = 0
                out[p, 1] = 0
                out[p, 2] = 0
                out[p, 3] = 0
                out[p, 4] = 1
                continue
        i = 0
        k = 0
        j = 0
        events = 0
        status = 0
        lk = np.int64(-1)
        uj = np.int64(1)
        while True:
            a = max(-j - 1, lk, wall_lo)
            b = min(k + 1, uj, wall_hi)
            u = _uniform(key, ctr)
            ctr += 1
            if u * (b - a) < i - a:
                i = b
            else:
                i = a
            events += 1
            if i > k:
                k = i
            elif -i > j:
                j = -i
            if i <= wall_lo or i >= wall_hi:
                status = 4
                break
            if k < nl:
                lk = L[k]
            elif sat_l:
                lk = L[nl - 1]
            else:
                status = 3
                break
            if j < nu:
                uj = U[j]
            elif sat_u:
                uj = U[nu - 1]
            else:
                status = 3
                break
            if i <= lk or i >= uj:
                break
            if events >= max_events:
                status = 2
                break
        out[p, 0] = i
        out[p, 1] = k
        out[p, 2] = j
        out[p, 3] = events
        out[p, 4] = status


def random_words(seed: int, path: int, count: int) -> np.ndarray:
    """First ``count`` words of the stream for ``path`` (for inspection and tests)."""
    key = _path_key(np.uint64(seed & 0xFFFFFFFFFFFFFFFF), path)
    return np.array([_word(key, c) for c in range(count)], dtype=np.uint64)


# -- configuration and thresholds --


@dataclass(frozen=True)
class WalkConfig:
    epsilon: float
    seed: int = 0
    max_steps: int | None = None
    zero_atom_mass: float | None = None
    mode: str = "exact"  # exact | snap | direct
    range_cap: float | None = None
    kernel: str = "ladder"  # ladder | step

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.mode not in ("exact", "snap", "direct"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.kernel not in ("ladder", "step"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.zero_atom_mass is not None and not 0.0 <= self.zero_atom_mass < 1.0:
            raise ValueError("zero_atom_mass must be in [0, 1)")

    def steps_for(self, n_paths: int) -> int:
        if self.max_steps is not None:
            return int(self.max_steps)
        return max(10**8 // max(n_paths, 1), 10**6)


def on_lattice(mu: TargetMeasure, eps: float, tol: float = LATTICE_TOL) -> bool:
    for x, _ in mu.atoms:
        r = x / eps
        if abs(r - round(r)) > tol * max(1.0, abs(r)):
            return False
    return True


def snap_to_lattice(mu: TargetMeasure, eps: float) -> tuple[TargetMeasure, float]:
    """Move each atom to the nearest lattice point (merging collisions)."""
    if mu.pieces:
        raise LatticeMismatch("only purely atomic measures can be snapped")
    moved = [(round(x / eps) * eps, m) for x, m in mu.atoms]
    dist = max((abs(x - y) for (x, _), (y, _) in zip(mu.atoms, moved)), default=0.0)
    return TargetMeasure.from_atoms(moved), dist


def _index_range(extent: float, eps: float, cap: float) -> tuple[int, bool]:
    if math.isfinite(extent):
        return int(math.ceil(max(extent, 0.0) / eps)) + 1, True
    return int(math.ceil(cap / eps)) + 1, False


def default_range_cap(mu: TargetMeasure) -> float:
    pts = [abs(b) for b in mu.breakpoints()]
    return 64.0 * max([1.0] + pts)


@dataclass(frozen=True)
class Thresholds:
    """Integer stopping thresholds on the ``eps`` lattice.

    ``L[k]``: stop when the index is ``<= L[k]`` while the running max index is ``k``.
    ``U[j]``: stop when the index is ``>= U[j]`` while the running min index is ``-j``.
    Beyond the last entry a saturated table repeats its final value.
    """

    eps: float
    L: np.ndarray
    U: np.ndarray
    sat_l: bool
    sat_u: bool

    def lower(self, k: int) -> int | None:
        if k < len(self.L):
            return int(self.L[k])
        return int(self.L[-1]) if self.sat_l else None

    def upper(self, j: int) -> int | None:
        if j < len(self.U):
            return int(self.U[j])
        return int(self.U[-1]) if self.sat_u else None


def _lam(idx: int, eps: float) -> float:
    return idx * eps if idx > 0 else eps * SMALL_LAMBDA


def lattice_thresholds(bs: BarrierSet, eps: float, range_cap: float | None = None) -> Thresholds:
    mu = bs.measure
    cap = range_cap if range_cap is not None else default_range_cap(mu)
    # gamma_+ is constant once lambda passes the top of the support, and
    # gamma_- once it passes the bottom, so those tables saturate
    kmax, sat_l = _index_range(mu.support_upper, eps, cap)
    jmax, sat_u = _index_range(-mu.support_lower, eps, cap)
    L = np.empty(kmax + 1, dtype=np.int64)
    U = np.empty(jmax + 1, dtype=np.int64)
    for k in range(kmax + 1):
        g = bs.gamma_plus(_lam(k, eps))
        L[k] = -SENTINEL if math.isinf(g) else math.floor(-g / eps + THRESH_FUDGE)
    for j in range(jmax + 1):
        g = bs.gamma_minus(_lam(j, eps))
        U[j] = SENTINEL if math.isinf(g) else math.ceil(g / eps - THRESH_FUDGE)
    return Thresholds(eps, L, U, sat_l, sat_u)


# -- single-step helpers mirroring the kernel --


def stop_check(x: float, S: float, J: float, barriers: BarrierSet) -> str:
    """``"stop"`` iff ``x <= -gamma_+(S)`` or ``x >= gamma_-(J)``."""
    if S < 0 or J < 0 or not -J <= x <= S:
        raise ValueError("need J, S >= 0 and -J <= x <= S")
    gp = barriers.gamma_plus(S if S > 0 else SMALL_LAMBDA)
    gm = barriers.gamma_minus(J if J > 0 else SMALL_LAMBDA)
    if x <= -gp or x >= gm:
        return "stop"
    return "continue"


def zero_atom_gate(mu: TargetMeasure, rng: np.random.Generator) -> tuple[bool, TargetMeasure]:
    """Stop at zero with probability ``mu({0})``; otherwise return the law
    conditioned on the complement of zero."""
    p0, rest = mu.without_zero_atom()
    if p0 > 0 and rng.random() < p0:
        return True, rest
    return False, rest


# -- Monte Carlo --


@dataclass(frozen=True)
class StoppedSample:
    terminal: float
    run_max: float
    run_min: float  # J_T, the absolute value of the running minimum
    steps: int
    stopped_at_zero: bool = False


@dataclass
class SimulationResult:
    eps: float
    raw: np.ndarray  # int64 columns: terminal idx, max idx, min idx, steps, status
    snap_distance: float = 0.0
    measure: TargetMeasure | None = None
    thresholds: Thresholds | None = None
    scale_map: object = None

    @property
    def status(self) -> np.ndarray:
        return self.raw[:, 4]

    @property
    def kept(self) -> np.ndarray:
        return (self.status == OK) | (self.status == ZERO_STOP)

    @property
    def terminal_index(self) -> np.ndarray:
        return self.raw[self.kept, 0]

    @property
    def terminal(self) -> np.ndarray:
        return self.raw[self.kept, 0] * self.eps

    @property
    def run_max(self) -> np.ndarray:
        return self.raw[self.kept, 1] * self.eps

    @property
    def run_min(self) -> np.ndarray:
        return self.raw[self.kept, 2] * self.eps

    @property
    def steps(self) -> np.ndarray:
        return self.raw[self.kept, 3]

    @property
    def n_kept(self) -> int:
        return int(self.kept.sum())

    def counts(self) -> dict[str, int]:
        return {name: int((self.status == code).sum()) for code, name in STATUS_NAMES.items()}

    @property
    def discarded(self) -> int:
        c = self.counts()
        return c["max_steps"] + c["out_of_range"] + c["scale_boundary"]

    def samples(self) -> list[StoppedSample]:
        out = []
        for row in self.raw[self.kept]:
            out.append(
                StoppedSample(row[0] * self.eps, row[1] * self.eps, row[2] * self.eps, int(row[3]), row[4] == ZERO_STOP)
            )
        return out


def prepare_measure(mu: TargetMeasure, cfg: WalkConfig) -> tuple[float, TargetMeasure, float]:
    """Split off the zero atom and fit the rest to the lattice per ``cfg.mode``."""
    p0, rest = mu.without_zero_atom()
    if cfg.zero_atom_mass is not None:
        p0 = cfg.zero_atom_mass
    snap = 0.0
    if cfg.mode == "exact":
        if rest.pieces or not on_lattice(rest, cfg.epsilon):
            raise LatticeMismatch(f"target is not atomic on the {cfg.epsilon!r}-lattice; use mode 'snap' or 'direct'")
    elif cfg.mode == "snap":
        rest, snap = snap_to_lattice(rest, cfg.epsilon)
        zero = rest.atom_mass(0.0)
        if zero > 0:
            p0 = p0 + (1 - p0) * zero
            _, rest = rest.without_zero_atom()
    return p0, rest, snap


def run_walks(
    th: Thresholds,
    seed: int,
    n_paths: int,
    max_steps: int,
    p_zero: float = 0.0,
    walls=(None, None),
    kernel: str = "ladder",
) -> np.ndarray:
    _threads_from_env()
    out = np.empty((n_paths, 5), dtype=np.int64)
    lo = -SENTINEL if walls[0] is None else int(walls[0])
    hi = SENTINEL if walls[1] is None else int(walls[1])
    fn = _ladder_kernel if kernel == "ladder" else _walk_kernel
    fn(
        th.L, th.U, th.sat_l, th.sat_u, np.uint64(seed & 0xFFFFFFFFFFFFFFFF), n_paths, max_steps, float(p_zero), lo, hi, out
    )
    return out


def simulate_embedding(
    mu: TargetMeasure, cfg: WalkConfig, N: int, walls=(None, None), strict: bool = False
) -> SimulationResult:
    """Run ``N`` independent lattice paths stopped by the barrier rule.

    Paths that exhaust ``max_steps`` or leave the tabulated range are kept
    in ``raw`` with a nonzero status and excluded from every statistic;
    ``strict=True`` turns any such discard into :class:`MaxStepsExceeded`.
    """
    p0, rest, snap = prepare_measure(mu, cfg)
    bs = BarrierSet(rest)
    th = lattice_thresholds(bs, cfg.epsilon, cfg.range_cap)
    raw = run_walks(th, cfg.seed, N, cfg.steps_for(N), p0, walls, cfg.kernel)
    res = SimulationResult(cfg.epsilon, raw, snap, rest, th)
    if strict and res.discarded:
        raise MaxStepsExceeded(f"{res.discarded} of {N} paths discarded: {res.counts()}")
    return res


# -- exact law of the lattice walk --


@dataclass
class LatticeLaw:
    """Exact joint law of (terminal, max, J) indices of the stopped walk."""

    eps: float
    joint: dict[tuple[int, int, int], object]
    deficit: object
    zero_mass: object = 0

    @property
    def total(self):
        return sum(self.joint.values()) + self.zero_mass

    def terminal(self) -> dict[int, object]:
        out: dict[int, object] = {}
        for (i, _, _), p in self.joint.items():
            out[i] = out.get(i, 0) + p
        if self.zero_mass:
            out[0] = out.get(0, 0) + self.zero_mass
        return dict(sorted(out.items()))

    def support(self) -> list[float]:
        return [i * self.eps for i in self.terminal()]

    def probabilities(self) -> list[float]:
        return [float(p) for p in self.terminal().values()]

    def max_tail(self, lam: float) -> float:
        """``P(S_T >= lam)``."""
        k0 = math.ceil(lam / self.eps - THRESH_FUDGE)
        return float(sum(p for (_, k, _), p in self.joint.items() if k >= k0))

    def min_tail(self, lam: float) -> float:
        """``P(J_T >= lam)``."""
        j0 = math.ceil(lam / self.eps - THRESH_FUDGE)
        return float(sum(p for (_, _, j), p in self.joint.items() if j >= j0))

    def terminal_cdf(self, x: float) -> float:
        i0 = math.floor(x / self.eps + THRESH_FUDGE)
        return float(sum(p for i, p in self.terminal().items() if i <= i0))


def exact_lattice_law(
    mu: TargetMeasure,
    eps: float,
    bounds: tuple[float, float] | None = None,
    exact: bool = True,
    max_blocks: int = 2_000_000,
    snap: bool = False,
) -> LatticeLaw:
    """Forward dynamic programme over (running max, running min) blocks.

    Between records the walk is a gambler's ruin on ``[-j-1, k+1]``, so each
    block ``(k, j)`` has at most two entry states (a fresh max at ``k`` or a
    fresh min at ``-j``).  Entry states are absorbed when they satisfy the
    stopping condition; otherwise their mass is split between the two
    neighbouring blocks.  Mass that would leave ``bounds`` is reported as
    ``deficit``.
    """
    p0, rest = mu.without_zero_atom()
    if snap:
        rest, _ = snap_to_lattice(rest, eps)
    elif rest.pieces or not on_lattice(rest, eps):
        raise LatticeMismatch(f"target is not atomic on the {eps!r}-lattice")
    th = lattice_thresholds(BarrierSet(rest), eps, None if bounds is None else max(abs(bounds[0]), abs(bounds[1])))
    if bounds is None:
        cap_idx = int(math.ceil(default_range_cap(rest) / eps))
        kcap = len(th.L) - 1 if not th.sat_l else cap_idx
        jcap = len(th.U) - 1 if not th.sat_u else cap_idx
    else:
        kcap = int(math.floor(bounds[1] / eps + THRESH_FUDGE))
        jcap = int(math.floor(-bounds[0] / eps + THRESH_FUDGE))
    one = Fraction(1) if exact else 1.0
    scale = one - (Fraction(p0).limit_denominator(10**15) if exact else p0)

    joint: dict[tuple[int, int, int], object] = {}
    deficit = one * 0
    # entries[(k, j)] = {position: mass}
    entries: dict[tuple[int, int], dict[int, object]] = {(0, 0): {0: scale}}
    level = 0
    blocks = 0
    while entries:
        nxt: dict[tuple[int, int], dict[int, object]] = {}
        for (k, j), states in entries.items():
            blocks += 1
            if blocks > max_blocks:
                raise StateSpaceTooLarge(f"more than {max_blocks} (max, min) blocks")
            lk, uj = th.lower(k), th.upper(j)
            for e, m in states.items():
                if not (k == 0 and j == 0):
                    if lk is None or uj is None:
                        deficit += m
                        continue
                    if e <= lk or e >= uj:
                        joint[(e, k, j)] = joint.get((e, k, j), 0) + m
                        continue
                width = k + j + 2
                up = m * (one * (e + j + 1)) / width
                down = m - up
                for (kk, jj, pos, mass) in ((k + 1, j, k + 1, up), (k, j + 1, -j - 1, down)):
                    if not mass:
                        continue
                    if (kcap is not None and kk > kcap) or (jcap is not None and jj > jcap):
                        deficit += mass
                        continue
                    slot = nxt.setdefault((kk, jj), {})
                    slot[pos] = slot.get(pos, 0) + mass
        entries = nxt
        level += 1
    zero = (Fraction(p0).limit_denominator(10**15) if exact else p0) if p0 else 0
    return LatticeLaw(eps, joint, deficit, zero)


# -- empirical statistics --


def dkw_epsilon(n: int, delta: float = 0.01) -> float:
    """Half-width of the two-sided DKW band at confidence ``1 - delta``."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * n))


@dataclass
class EmpiricalTails:
    terminal: np.ndarray
    run_max: np.ndarray
    run_min: np.ndarray
    _sorted: dict = field(default_factory=dict, repr=False)

    def _s(self, name):
        if name not in self._sorted:
            self._sorted[name] = np.sort(getattr(self, name))
        return self._sorted[name]

    @property
    def n(self) -> int:
        return len(self.terminal)

    def terminal_cdf(self, x: float) -> float:
        s = self._s("terminal")
        return np.searchsorted(s, x, side="right") / len(s)

    def max_tail(self, lam: float) -> float:
        """Empirical ``P(S_T >= lam)``."""
        s = self._s("run_max")
        return 1.0 - np.searchsorted(s, lam, side="left") / len(s)

    def min_tail(self, lam: float) -> float:
        """Empirical ``P(J_T >= lam)``."""
        s = self._s("run_min")
        return 1.0 - np.searchsorted(s, lam, side="left") / len(s)

    def ks_distance(self, mu: TargetMeasure) -> float:
        """Sup distance between the empirical terminal cdf and ``mu``'s cdf."""
        s = self._s("terminal")
        n = len(s)
        pts = np.unique(np.concatenate([s, np.array([x for x, _ in mu.atoms], dtype=float)]))
        best = 0.0
        for x in pts:
            fe = np.searchsorted(s, x, side="right") / n
            fe_left = np.searchsorted(s, x, side="left") / n
            best = max(best, abs(fe - mu.cdf(x)), abs(fe_left - mu.mass_below(x, inclusive=False)))
        return float(best)


def empirical_tails(samples) -> EmpiricalTails:
    """Accepts a :class:`SimulationResult` or a sequence of :class:`StoppedSample`."""
    if isinstance(samples, SimulationResult):
        return EmpiricalTails(samples.terminal, samples.run_max, samples.run_min)
    samples = list(samples)
    if not samples:
        raise ValueError("no samples")
    return EmpiricalTails(
        np.array([s.terminal for s in samples]),
        np.array([s.run_max for s in samples]),
        np.array([s.run_min for s in samples]),
    )
