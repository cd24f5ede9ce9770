"""Bundled test measures and the self-check suite run by ``skoro verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .barrier import BarrierSet, IdentityViolation, brute_force_gamma_theta_plus, verify_barrier_identities
from .diffusion import DiffusionTarget, DriftingBM, Identity, SymmetricBessel, rho_plus_direct, rho_zeta_nu
from .hp import bessel_counterexample, nu_bounds, sum_bounds
from .measure import INF, DensityPiece, TargetMeasure, check_truncation, truncate_center
from .simulate import exact_lattice_law

MU_A = TargetMeasure(((-1.0, 0.5), (1.0, 0.5)))
MU_B = TargetMeasure(((-1.0, 2 / 3), (2.0, 1 / 3)))
DELTA_1 = TargetMeasure.point(1.0)
MU_C = TargetMeasure(((-1.0, 0.5), (3.0, 0.5)))


def mixed_measure() -> TargetMeasure:
    """Atoms plus uniform, power and exponential pieces; positive tail not integrable."""
    return TargetMeasure(
        ((-0.75, 0.1), (0.5, 0.15)),
        (
            DensityPiece("exponential", -INF, -3.0, 0.1, -1.0),
            DensityPiece("uniform", -2.0, -1.0, 0.3),
            DensityPiece("power", math.e, INF, 0.35, 0.5),
        ),
    )


def integrable_mixed_measure() -> TargetMeasure:
    return TargetMeasure(
        ((-0.5, 0.2), (1.0, 0.2)),
        (
            DensityPiece("uniform", -3.0, -1.0, 0.25),
            DensityPiece("power", 2.0, INF, 0.2, 1.5),
            DensityPiece("exponential", -INF, -4.0, 0.15, -2.0),
        ),
    )


NAMED = {
    "mu_A": lambda: MU_A,
    "mu_B": lambda: MU_B,
    "delta_1": lambda: DELTA_1,
    "mu_C": lambda: MU_C,
    "mixed": mixed_measure,
    "integrable_mixed": integrable_mixed_measure,
}


def random_atomic(rng: np.random.Generator, max_atoms: int = 8, lattice: int | None = None) -> TargetMeasure:
    """Random atomic law with up to ``max_atoms`` atoms of mixed sign (none at 0)."""
    while True:
        k = int(rng.integers(1, max_atoms + 1))
        if lattice:
            pts = rng.choice(np.concatenate([np.arange(-5 * lattice, 0), np.arange(1, 5 * lattice + 1)]), k, replace=False)
            xs = np.sort(pts / lattice)
        else:
            xs = np.sort(rng.uniform(-5, 5, k))
        if np.all(xs != 0) and len(np.unique(xs)) == k:
            break
    ms = rng.dirichlet(np.ones(k))
    ms = ms / ms.sum()
    return TargetMeasure(tuple(zip(xs.tolist(), ms.tolist())))


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


def _check(name: str, fn: Callable[[], str | None]) -> CheckResult:
    try:
        detail = fn()
        return CheckResult(name, True, detail or "")
    except (AssertionError, IdentityViolation) as exc:
        return CheckResult(name, False, str(exc))


def _lams():
    return [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 8.0]


def run_verify_suite(quick: bool = False, seed: int = 20240611) -> list[CheckResult]:
    out: list[CheckResult] = []

    def identities():
        for name, make in NAMED.items():
            verify_barrier_identities(make(), _lams(), tol=1e-9)
        return f"{len(NAMED)} bundled measures"

    out.append(_check("barrier identities (bundled)", identities))

    def random_identities():
        rng = np.random.default_rng(seed)
        n = 20 if quick else 100
        for _ in range(n):
            mu = random_atomic(rng)
            verify_barrier_identities(mu, _lams(), tol=1e-10)
        return f"{n} random atomic measures"

    out.append(_check("barrier identities (random)", random_identities))

    def brute():
        rng = np.random.default_rng(seed + 1)
        grid = np.linspace(1e-3, 12, 12001)
        for _ in range(10 if quick else 30):
            mu = random_atomic(rng, lattice=4)
            grid_all = np.union1d(grid, [-x for x, _ in mu.atoms if x < 0])
            for lam in _lams():
                g, t = BarrierSet(mu).plus(lam)
                bg, bt = brute_force_gamma_theta_plus(mu, lam, grid_all)
                assert (g == bg or abs(g - bg) <= 1e-10) and abs(t - bt) <= 1e-10, (mu, lam, g, bg, t, bt)

    out.append(_check("chord minimiser vs exhaustive search", brute))

    def closed_forms():
        bs = BarrierSet(MU_A)
        for lam in np.arange(1, 10) / 10:
            assert abs(bs.mu_plus(lam) - 1 / (1 + lam)) <= 1e-12
        bb = BarrierSet(MU_B)
        for lam in (0.25, 0.5, 1.0, 1.5):
            assert bb.gamma_plus(lam) == 1.0
            assert abs(bb.theta_plus(lam) - (2 - lam) / (3 * (1 + lam))) <= 1e-12
        assert abs(bb.mu_minus(0.5) - 0.8) <= 1e-12
        assert BarrierSet(DELTA_1).gamma_plus(0.5) == INF

    out.append(_check("closed-form barriers", closed_forms))

    def truncation():
        tm = truncate_center(DELTA_1, 10)
        want = {1.0: 0.9, 20.0: 11 / 400, -20.0: 29 / 400}
        got = dict(tm.result.atoms)
        assert set(got) == set(want) and all(abs(got[x] - want[x]) <= 1e-12 for x in want), got
        for mu in (DELTA_1, MU_A, MU_B, integrable_mixed_measure()):
            for n in (4, 10, 25):
                props = check_truncation(truncate_center(mu, n), tol=1e-9)
                assert all(props.values()), (mu, n, props)
                gap = max(truncate_center(mu, n).c_gap(x) - abs(x) / n for x in np.linspace(-30, 30, 121))
                assert gap <= 1e-12, gap

    out.append(_check("centred truncation", truncation))

    def oracle():
        law = exact_lattice_law(MU_A, 0.25)
        assert law.terminal() == {-4: Fraction(1, 2), 4: Fraction(1, 2)}
        law = exact_lattice_law(MU_B, 0.25)
        assert law.terminal() == {-4: Fraction(2, 3), 8: Fraction(1, 3)}
        for lam in (0.25, 0.5, 0.75):
            assert abs(law.max_tail(lam) - BarrierSet(MU_B).mu_plus(lam)) <= 1e-12

    out.append(_check("exact lattice oracle", oracle))

    def diffusion():
        nus = [TargetMeasure(((-1.0, 0.3), (0.5, 0.7))), TargetMeasure(((-2.0, 0.2), (-0.5, 0.3), (1.0, 0.5)))]
        for s in (DriftingBM(1.0), SymmetricBessel(1.0), Identity()):
            for nu in nus:
                t = DiffusionTarget(nu, s)
                bs = BarrierSet(t.mu)
                for z in (0.25, 0.5, 1.0, 1.5, 3.0):
                    r = rho_zeta_nu(nu, s, z, t)
                    g, th = bs.plus(s(z))
                    lhs = s(-r.rho_plus) if math.isfinite(r.rho_plus) else -INF
                    assert lhs == -g or abs(lhs + g) <= 1e-10, (s, z, lhs, g)
                    assert abs(r.zeta_plus - th) <= 1e-10
                    rd = rho_plus_direct(nu, s, z)
                    assert rd == r.rho_plus or abs(rd - r.rho_plus) <= 1e-10, (s, z, rd, r.rho_plus)
                    up_p, up_m, lo_p, lo_m = nu_bounds(t, z)
                    assert lo_p - 1e-12 <= r.nu_plus <= up_p + 1e-12
                    assert lo_m - 1e-12 <= r.nu_minus <= up_m + 1e-12
                    hi, lo = sum_bounds(t, z)
                    assert lo - 1e-12 <= r.nu_plus + r.nu_minus <= hi + 1e-12

    out.append(_check("diffusion identities and bounds", diffusion))

    def counterexample():
        bc = bessel_counterexample(1.0)
        assert abs(bc.b - bc.b_closed_form) <= 1e-10 * bc.b
        assert abs(bc.target.m) <= 1e-10

    out.append(_check("counterexample balance", counterexample))
    return out
