"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible in ``pytest -v``
output and when run as a script) and then asserts.  Runtime limits are part
of each criterion; exceeding one is a failure.

Run directly with ``python3 tests/test_acceptance.py`` for the summary only.
"""

from __future__ import annotations

import math
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from skoro.barrier import BarrierSet, brute_force_gamma_theta_plus, verify_barrier_identities
from skoro.diffusion import (
    DiffusionTarget,
    DriftingBM,
    Identity,
    PiecewiseLinear,
    SymmetricBessel,
    classify_embeddable,
    rho_zeta_nu,
    simulate_diffusion_embedding,
)
from skoro.fixtures import DELTA_1, MU_A, MU_B, random_atomic
from skoro.hp import HpQuery, Verdict, bessel_counterexample, hp_check, hp_condition_check, nu_bounds, sbounds_classify, sum_bounds, transient_hp
from skoro.measure import INF, DensityPiece, TargetMeasure, check_truncation, truncate_center
from skoro.simulate import WalkConfig, dkw_epsilon, empirical_tails, exact_lattice_law, simulate_embedding

SEED = 20240611


def _report(num: int, title: str, ok: bool, detail: str, elapsed: float, limit: float) -> bool:
    in_time = elapsed < limit
    passed = ok and in_time
    timing = f"{elapsed:.2f}s < {limit:g}s" if in_time else f"{elapsed:.2f}s exceeds {limit:g}s"
    line = f"{'PASS' if passed else 'FAIL'} [{num:2d}] {title} ({timing}): {detail}"
    print("\n" + line, flush=True)
    return passed


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


# -- criteria --


def criterion_1():
    def run():
        bs = BarrierSet(MU_A)
        grid = np.union1d(np.linspace(1e-3, 4, 4001), [1.0])
        err = oracle_err = 0.0
        for lam in np.arange(1, 10) / 10:
            want = 1 / (1 + lam)
            err = max(err, abs(bs.mu_plus(lam) - want))
            g, t = brute_force_gamma_theta_plus(MU_A, lam, grid)
            oracle_err = max(oracle_err, abs(t + MU_A.mass_above(lam) - want))
        return err, oracle_err

    (err, oerr), dt = _timed(run)
    return err <= 1e-12 and oerr <= 1e-12, f"max |mu_+ - 1/(1+l)| = {err:.2e}, exhaustive-search oracle {oerr:.2e}", dt, 1.0


def criterion_2():
    def run():
        bs = BarrierSet(MU_B)
        errs = {}
        lams = np.linspace(0.01, 1.99, 199)
        errs["gamma+"] = max(abs(bs.gamma_plus(l) - 1.0) for l in lams)
        errs["theta+"] = max(abs(bs.theta_plus(l) - (2 - l) / (3 * (1 + l))) for l in lams)
        errs["mu+"] = max(abs(bs.mu_plus(l) - 1 / (1 + l)) for l in lams)
        errs["gamma-"] = max(abs(bs.gamma_minus(l) - 2.0) for l in lams)
        errs["mu-(0.5)"] = abs(bs.mu_minus(0.5) - 0.8)
        return errs

    errs, dt = _timed(run)
    worst = max(errs.values())
    return worst <= 1e-12, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()), dt, 1.0


def criterion_3():
    def run():
        mu_c = TargetMeasure(((-1.0, 0.5), (3.0, 0.5)))
        bad = []
        for name, mu, lams in (("delta_1", DELTA_1, [0.01, 0.5, 1.0, 1.5, 4.0]), ("mu_C", mu_c, [1.001, 1.5, 2.0, 2.999, 5.0])):
            for lam in lams:
                g, t = BarrierSet(mu).plus(lam)
                if not (g == INF and t == 0.0):
                    bad.append((name, lam, g, t))
        return bad

    bad, dt = _timed(run)
    return not bad, "gamma_+ = inf and theta_+ = 0 on all grid points" if not bad else f"violations {bad}", dt, 1.0


def criterion_4():
    def run():
        rng = np.random.default_rng(SEED)
        lams = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 8.0]
        worst = 0.0
        for _ in range(100):
            rep = verify_barrier_identities(random_atomic(rng, max_atoms=8), lams, tol=1e-10, raise_on_fail=False)
            if not rep.ok:
                return False, rep.max_residual, rep.worst
            worst = max(worst, rep.max_residual)
        return True, worst, None

    (ok, worst, where), dt = _timed(run)
    return ok, f"100 measures x 11 lambdas, max residual {worst:.2e}" + ("" if ok else f" at {where}"), dt, 30.0


def criterion_5():
    def run():
        a = exact_lattice_law(MU_A, 0.25).terminal()
        b = exact_lattice_law(MU_B, 0.25).terminal()
        return a, b

    (a, b), dt = _timed(run)
    ok = a == {-4: Fraction(1, 2), 4: Fraction(1, 2)} and b == {-4: Fraction(2, 3), 8: Fraction(1, 3)}
    show = lambda law: "{" + ", ".join(f"{k * 0.25:g}: {v}" for k, v in law.items()) + "}"
    return ok, f"mu_A -> {show(a)}, mu_B -> {show(b)}", dt, 10.0


def criterion_6():
    def run():
        n, eps = 200_000, 0.01
        ra = simulate_embedding(MU_A, WalkConfig(eps, seed=SEED), n)
        ta = empirical_tails(ra)
        p1 = float(np.mean(np.isclose(ra.terminal, 1.0)))
        band = dkw_epsilon(ra.n_kept)
        gaps = [abs(ta.max_tail(l) - 1 / (1 + l)) for l in (0.25, 0.5, 0.75)]
        rb = simulate_embedding(MU_B, WalkConfig(eps, seed=SEED + 1), n)
        mm = empirical_tails(rb).min_tail(0.5)
        return p1, gaps, band, mm, ra.discarded + rb.discarded

    (p1, gaps, band, mm, disc), dt = _timed(run)
    ok = abs(p1 - 0.5) <= 0.005 and max(gaps) <= band and abs(mm - 0.8) <= 0.006 and disc == 0
    return (
        ok,
        f"P(M=1) = {p1:.5f}, max tail gap {max(gaps):.4f} <= DKW {band:.4f}, mu_B P(J>=0.5) = {mm:.5f}, discarded {disc}",
        dt,
        300.0,
    )


def _first_exit(a: int, b: int, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Simple random walk from 0 run until it leaves ``(-a, b)``; returns (terminal, max) indices."""
    x = np.zeros(n, dtype=np.int64)
    mx = np.zeros(n, dtype=np.int64)
    live = np.arange(n)
    while live.size:
        x[live] += rng.integers(0, 2, live.size, dtype=np.int64) * 2 - 1
        np.maximum(mx, x, out=mx)
        live = live[(x[live] > -a) & (x[live] < b)]
    return x, mx


def criterion_7():
    def run():
        eps, n = 0.05, 100_000
        rng = np.random.default_rng(SEED)
        x, mx = _first_exit(round(1 / eps), round(2 / eps), n, rng)
        bs = BarrierSet(MU_B)
        band = dkw_epsilon(n)
        lams = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
        slack = min(float(np.mean(mx * eps >= l - 1e-9)) - bs.mu_plus(l) for l in lams)
        term = float(np.mean(x < 0))
        return slack, band, term

    (slack, band, term), dt = _timed(run)
    ok = slack >= -band
    return ok, f"min_l [P(S>=l) - mu_+(l)] = {slack:+.4f} >= -{band:.4f} (first exit of (-1, 2); P(M=-1) = {term:.4f})", dt, 120.0


def criterion_9():
    def run():
        s = DriftingBM(1.0)
        nu = TargetMeasure.point(1.0)
        analytic = (1 - math.exp(-2)) / (math.exp(2) - math.exp(-2))
        closed = rho_zeta_nu(nu, s, 1.0).nu_minus
        eps = s(1.0) / 86
        out = simulate_diffusion_embedding(nu, s, WalkConfig(eps, seed=SEED), 200_000)
        kept = len(out.terminal)
        emp = float(np.mean(out.inf <= -1.0))
        band = dkw_epsilon(kept)
        # barrier identity on z grids for several targets on the drifting scale
        targets = [
            nu,
            TargetMeasure(((-1.0, 0.3), (0.5, 0.7))),
            TargetMeasure(((-2.0, 0.2), (-0.5, 0.3), (1.0, 0.5))),
            TargetMeasure(((-0.5, 0.2),), (DensityPiece("uniform", -1.5, -0.7, 0.3), DensityPiece("uniform", 0.2, 1.4, 0.5))),
        ]
        ident = 0.0
        checked = 0
        for t_nu in targets:
            tgt = DiffusionTarget(t_nu, s)
            bs = BarrierSet(tgt.mu)
            for z in np.linspace(0.05, 3.0, 60):
                r = rho_zeta_nu(t_nu, s, z, tgt)
                g = bs.gamma_plus(s(z))
                if math.isfinite(r.rho_plus):
                    ident = max(ident, abs(s(-r.rho_plus) + g))
                    checked += 1
                elif math.isfinite(g) and g != -s.image[0]:
                    ident = INF
        return analytic, closed, emp, band, ident, checked, kept

    (analytic, closed, emp, band, ident, checked, kept), dt = _timed(run)
    ok = abs(closed - analytic) <= 1e-12 and abs(emp - analytic) <= band and ident <= 1e-10 and checked > 0
    return (
        ok,
        f"nu_-(1) analytic {analytic:.5f}, computed {closed:.5f}, simulated {emp:.5f} (DKW {band:.4f}, n={kept}); "
        f"identity residual {ident:.1e} on {checked} finite points",
        dt,
        120.0,
    )


def criterion_10():
    def run():
        sb, drift = SymmetricBessel(1.0), DriftingBM(1.0)
        pw = PiecewiseLinear((-1.0, 0.0, 1.0), (-1.0, 0.0, 2.0))
        cases = [
            ("symBessel two-point", classify_embeddable(TargetMeasure(((-1.0, 0.5), (3.0, 0.5))), sb), (1, True)),
            ("symBessel delta_1", classify_embeddable(DELTA_1, sb), (1, True)),
            ("drift +delta_1", classify_embeddable(TargetMeasure.point(1.0), drift), (2, True)),
            ("drift -delta_1", classify_embeddable(TargetMeasure.point(-1.0), drift), (2, False)),
            ("bounded m!=0", classify_embeddable(TargetMeasure(((-0.5, 0.5), (0.5, 0.5))), pw), (3, False)),
            ("bounded m=0", classify_embeddable(TargetMeasure(((-0.5, 2 / 3), (0.5, 1 / 3))), pw), (3, True)),
        ]
        return [(name, (c.case, c.embeddable), want) for name, c, want in cases]

    rows, dt = _timed(run)
    bad = [r for r in rows if r[1] != r[2]]
    return not bad, "all 6 verdicts correct" if not bad else f"wrong: {bad}", dt, 1.0


def criterion_11():
    def run():
        out = {}
        t = DiffusionTarget(TargetMeasure.point(1.0), DriftingBM(1.0))
        rep = transient_hp(t, 1.0)
        val = rep.integrals["cond1"].value
        out["a"] = (rep.verdict == Verdict.SUFFICIENT_HOLDS and abs(val - 0.0677) <= 1e-4, val, rep.verdict.value)
        bc = bessel_counterexample(1.0)
        rep = hp_condition_check(bc.target, bc.p)
        nec = rep.integrals["necessary"]
        out["b"] = (rep.verdict == Verdict.NECESSARY_FAILS and nec.status == "divergent", nec.exponent, rep.verdict.value)
        sb = SymmetricBessel(1.0)
        bounds = (1.0, 1.0, 0.5, 0.5)
        centred = DiffusionTarget(TargetMeasure(((-1.0, 0.5), (1.0, 0.5))), sb)
        off = DiffusionTarget(TargetMeasure.point(1.0), sb)
        r1 = sbounds_classify(HpQuery(1.0, centred, bounds))
        r1b = sbounds_classify(HpQuery(1.0, off, bounds))
        r2 = sbounds_classify(HpQuery(0.25, off, bounds))
        r3 = sbounds_classify(HpQuery(0.5, bc.target, bounds))
        ok_c = (
            (r1.case, r1.iff, r1.verdict) == ("i", True, Verdict.SUFFICIENT_HOLDS)
            and (r1b.case, r1b.verdict) == ("i", Verdict.NECESSARY_FAILS)
            and (r2.case, r2.iff, r2.verdict) == ("ii", True, Verdict.SUFFICIENT_HOLDS)
            and (r3.case, r3.verdict) == ("iii", Verdict.NECESSARY_FAILS)
        )
        out["c"] = (ok_c, None, f"i:{r1.verdict.value}/{r1b.verdict.value} ii:{r2.verdict.value} iii:{r3.verdict.value}")
        return out

    out, dt = _timed(run)
    ok = all(v[0] for v in out.values())
    detail = (
        f"(a) {'ok' if out['a'][0] else 'FAIL'}: integral {out['a'][1]:.6f} vs stated 0.0677 +- 1e-4 "
        f"[= -log(1-e^-2)/2 = {-0.5 * math.log(1 - math.exp(-2)):.6f}], {out['a'][2]}; "
        f"(b) {'ok' if out['b'][0] else 'FAIL'}: increment exponent {out['b'][1]:.3f}, {out['b'][2]}; "
        f"(c) {'ok' if out['c'][0] else 'FAIL'}: {out['c'][2]}"
    )
    return ok, detail, dt, 60.0


def criterion_12():
    def run():
        eps_mult = 86
        targets = [
            ("drift delta_1", DriftingBM(1.0), TargetMeasure.point(1.0)),
            ("drift 3-atom", DriftingBM(1.0), TargetMeasure(((-0.5, 0.3), (0.5, 0.3), (1.5, 0.4)))),
            ("symBessel two-point", SymmetricBessel(1.0), TargetMeasure(((-1.0, 0.5), (2.25, 0.5)))),
            ("identity mu_B", Identity(), MU_B),
        ]
        worst = -INF
        count = 0
        for name, s, nu in targets:
            tgt = DiffusionTarget(nu, s)
            scale = max(abs(s(x)) for x, _ in nu.atoms)
            out = simulate_diffusion_embedding(nu, s, WalkConfig(scale / eps_mult, seed=SEED, mode="snap"), 100_000)
            n = len(out.terminal)
            band = dkw_epsilon(n)
            for z in np.linspace(0.1, 2.5, 13):
                ep = float(np.mean(out.sup >= z))
                em = float(np.mean(out.inf <= -z))
                up_p, up_m, lo_p, lo_m = nu_bounds(tgt, z)
                hi, lo = sum_bounds(tgt, z)
                viol = max(lo_p - ep, ep - up_p, lo_m - em, em - up_m, lo - (ep + em), (ep + em) - hi)
                tol = band if viol <= 0 else 2 * band  # the sum carries two estimates
                worst = max(worst, viol - tol)
                count += 1
        return worst, count

    (worst, count), dt = _timed(run)
    return worst <= 0, f"{count} (target, z) points; worst excess over MC band {worst:+.4f}", dt, 120.0


def criterion_8():
    def run():
        tm = truncate_center(DELTA_1, 10)
        atoms = dict(tm.result.atoms)
        exact = atoms == {1.0: 0.9, 20.0: 11 / 400, -20.0: 29 / 400}
        props = check_truncation(tm)
        grid = np.linspace(-60, 60, 2401)
        gap = max(tm.c_gap(x) - abs(x) / 10 for x in grid)
        return exact, atoms, props, gap

    (exact, atoms, props, gap), dt = _timed(run)
    ok = exact and all(props.values()) and gap <= 1e-12
    return ok, f"atoms {atoms}, properties {props}, max(|c^n - c| - |x|/n) = {gap:.2e}", dt, 1.0


CRITERIA = {
    1: ("barrier closed forms, mu_A", criterion_1),
    2: ("asymmetric closed forms, mu_B", criterion_2),
    3: ("gamma = inf regime", criterion_3),
    4: ("identity suite, 100 random measures", criterion_4),
    5: ("embedding correctness, exact oracle", criterion_5),
    6: ("embedding correctness, Monte Carlo", criterion_6),
    7: ("lower-bound property, first-exit rule", criterion_7),
    8: ("centred truncation", criterion_8),
    9: ("diffusion transport, drifting BM", criterion_9),
    10: ("embeddability classification", criterion_10),
    11: ("H^p theorems", criterion_11),
    12: ("sandwich bounds on simulated targets", criterion_12),
}


@pytest.mark.parametrize("num", sorted(CRITERIA))
def test_criterion(num, capsys):
    title, fn = CRITERIA[num]
    ok, detail, dt, limit = fn()
    with capsys.disabled():
        passed = _report(num, title, ok, detail, dt, limit)
    assert passed, detail


if __name__ == "__main__":
    results = []
    for num in sorted(CRITERIA):
        title, fn = CRITERIA[num]
        ok, detail, dt, limit = fn()
        results.append(_report(num, title, ok, detail, dt, limit))
    print(f"\n{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
