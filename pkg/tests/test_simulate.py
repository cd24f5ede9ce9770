import math
from fractions import Fraction

import numpy as np
import pytest

from skoro.barrier import BarrierSet
from skoro.fixtures import DELTA_1, MU_A, MU_B
from skoro.measure import TargetMeasure
from skoro.simulate import (
    LatticeMismatch,
    MaxStepsExceeded,
    StateSpaceTooLarge,
    StoppedSample,
    WalkConfig,
    dkw_epsilon,
    empirical_tails,
    exact_lattice_law,
    lattice_thresholds,
    random_words,
    simulate_embedding,
    stop_check,
    zero_atom_gate,
)


def test_stop_check_examples():
    bs = BarrierSet(DELTA_1)
    assert stop_check(1.0, 1.0, 3.0, bs) == "stop"
    assert stop_check(-50.0, 0.5, 50.0, bs) == "continue"
    bs = BarrierSet(MU_A)
    assert stop_check(-1.0, 0.5, 1.0, bs) == "stop"
    assert stop_check(0.2, 0.5, 0.5, bs) == "continue"
    with pytest.raises(ValueError):
        stop_check(2.0, 1.0, 0.0, bs)


def test_zero_atom_gate_frequency():
    mu = TargetMeasure(((0.0, 0.5), (1.0, 0.5)))
    rng = np.random.default_rng(5)
    stops = 0
    for _ in range(20000):
        hit, rest = zero_atom_gate(mu, rng)
        stops += hit
    assert rest.atoms == ((1.0, 1.0),)
    assert abs(stops / 20000 - 0.5) < 4 * math.sqrt(0.25 / 20000)
    assert zero_atom_gate(MU_A, rng)[0] is False


def test_thresholds_two_point():
    th = lattice_thresholds(BarrierSet(MU_A), 0.25)
    assert th.lower(0) == -4 and th.lower(3) == -4 and th.lower(100) == -4
    assert th.upper(0) == 4 and th.upper(3) == 4


def test_oracle_two_point_laws():
    assert exact_lattice_law(MU_A, 0.25).terminal() == {-4: Fraction(1, 2), 4: Fraction(1, 2)}
    law = exact_lattice_law(MU_B, 0.25)
    assert law.terminal() == {-4: Fraction(2, 3), 8: Fraction(1, 3)}
    assert law.deficit == 0
    bs = BarrierSet(MU_B)
    for lam in (0.25, 0.5, 1.0, 1.5, 2.0):
        assert law.max_tail(lam) == pytest.approx(bs.mu_plus(lam), abs=1e-12)
    for lam in (0.25, 0.5, 1.0):
        assert law.min_tail(lam) == pytest.approx(bs.mu_minus(lam), abs=1e-12)


def test_oracle_point_mass_gamblers_ruin():
    law = exact_lattice_law(DELTA_1, 0.5)
    # mass that leaves the default range is the only thing not absorbed
    assert law.min_tail(0.5) + float(law.deficit) == pytest.approx(2 / 3, abs=1e-12)
    assert float(law.deficit) < 0.05
    assert set(law.terminal()) == {2}


def test_oracle_rejects_off_lattice_and_large_state():
    with pytest.raises(LatticeMismatch):
        exact_lattice_law(TargetMeasure(((-1.0, 0.5), (1.0, 0.5))), 0.3)
    with pytest.raises(StateSpaceTooLarge):
        exact_lattice_law(MU_A, 0.01, max_blocks=100)


def _centred(rng):
    while True:
        xs = np.sort(rng.choice(np.r_[-12:0, 1:13], size=rng.integers(2, 6), replace=False)).astype(float)
        if xs[0] < 0 < xs[-1]:
            break
    neg, pos = xs[xs < 0], xs[xs > 0]
    a = pos.mean() / (pos.mean() - neg.mean())
    atoms = [(x / 4, a / len(neg)) for x in neg] + [(x / 4, (1 - a) / len(pos)) for x in pos]
    return TargetMeasure.from_atoms(atoms)


def test_oracle_quantisation_bias_shrinks_with_eps():
    # barrier switches between lattice points cost O(eps) in the terminal law
    rng = np.random.default_rng(3)
    for _ in range(8):
        mu = _centred(rng)
        for d in (8, 32, 128):
            law = exact_lattice_law(mu, 1 / d, exact=False)
            assert float(law.deficit) == 0.0
            assert law.total == pytest.approx(1.0, abs=1e-12)
            err = max(abs(law.terminal().get(round(x * d), 0.0) - m) for x, m in mu.atoms)
            assert err <= 4.0 / d, (mu, d, err)


def test_mc_matches_oracle_within_dkw():
    mu = TargetMeasure(((-1.0, 0.25), (-0.5, 0.25), (0.75, 0.2), (1.25, 0.3)))
    eps = 0.25
    law = exact_lattice_law(mu, eps)
    res = simulate_embedding(mu, WalkConfig(eps, seed=42), 40000)
    tails = empirical_tails(res)
    band = dkw_epsilon(res.n_kept)
    for x in (-1.0, -0.5, 0.0, 0.75, 1.25):
        assert abs(tails.terminal_cdf(x) - law.terminal_cdf(x)) <= band
    for lam in (0.25, 0.5, 1.0, 1.25):
        assert abs(tails.max_tail(lam) - law.max_tail(lam)) <= band
        assert abs(tails.min_tail(lam) - law.min_tail(lam)) <= band


def test_step_and_ladder_kernels_agree_in_law():
    n = 40000
    a = simulate_embedding(MU_B, WalkConfig(0.05, seed=1, kernel="step"), n)
    b = simulate_embedding(MU_B, WalkConfig(0.05, seed=2, kernel="ladder"), n)
    ta, tb = empirical_tails(a), empirical_tails(b)
    band = 2 * dkw_epsilon(n)
    for lam in (0.25, 0.5, 1.0, 1.5):
        assert abs(ta.max_tail(lam) - tb.max_tail(lam)) <= band
        assert abs(ta.min_tail(lam) - tb.min_tail(lam)) <= band


def test_point_mass_samples_hit_one():
    res = simulate_embedding(DELTA_1, WalkConfig(0.1, seed=3), 2000)
    assert np.all(res.terminal == pytest.approx(1.0))
    assert np.all(res.run_max == pytest.approx(1.0))
    s = res.samples()[0]
    assert isinstance(s, StoppedSample)
    assert -s.run_min <= s.terminal <= s.run_max


def test_determinism_and_independence_of_thread_order():
    cfg = WalkConfig(0.05, seed=99)
    r1 = simulate_embedding(MU_B, cfg, 5000)
    r2 = simulate_embedding(MU_B, cfg, 5000)
    np.testing.assert_array_equal(r1.raw, r2.raw)
    r3 = simulate_embedding(MU_B, cfg, 100)
    np.testing.assert_array_equal(r1.raw[:100], r3.raw)
    r4 = simulate_embedding(MU_B, WalkConfig(0.05, seed=100), 100)
    assert not np.array_equal(r3.raw, r4.raw)


def test_random_words_streams_differ():
    a = random_words(7, 0, 16)
    b = random_words(7, 1, 16)
    assert len(set(a.tolist()) & set(b.tolist())) == 0
    bits = np.unpackbits(random_words(7, 3, 4096).view(np.uint8))
    assert abs(bits.mean() - 0.5) < 0.005


def test_discards_are_counted_not_kept():
    res = simulate_embedding(DELTA_1, WalkConfig(0.01, seed=0, max_steps=50, kernel="step"), 2000)
    c = res.counts()
    assert c["max_steps"] > 0
    assert res.n_kept == c["ok"] + c["zero"]
    assert res.discarded == c["max_steps"]
    assert np.all(res.terminal == pytest.approx(1.0))
    with pytest.raises(MaxStepsExceeded):
        simulate_embedding(DELTA_1, WalkConfig(0.01, seed=0, max_steps=50, kernel="step"), 200, strict=True)


def test_default_step_budget():
    assert WalkConfig(0.1).steps_for(10) == 10**7
    assert WalkConfig(0.1).steps_for(10**6) == 10**6


def test_lattice_modes():
    mu = TargetMeasure(((-1.03, 0.5), (1.03, 0.5)))
    with pytest.raises(LatticeMismatch):
        simulate_embedding(mu, WalkConfig(0.1), 10)
    res = simulate_embedding(mu, WalkConfig(0.1, seed=1, mode="snap"), 4000)
    assert res.snap_distance == pytest.approx(0.03, abs=1e-12)
    assert set(np.round(res.terminal, 9)) == {-1.0, 1.0}
    res = simulate_embedding(mu, WalkConfig(0.1, seed=1, mode="direct"), 4000)
    assert set(np.round(res.terminal, 9)) <= {-1.1, 1.1}


def test_zero_atom_paths():
    mu = TargetMeasure(((-1.0, 0.25), (0.0, 0.5), (1.0, 0.25)))
    res = simulate_embedding(mu, WalkConfig(0.25, seed=5), 20000)
    assert res.counts()["zero"] / 20000 == pytest.approx(0.5, abs=0.02)
    law = exact_lattice_law(mu, 0.25)
    assert law.terminal() == {-4: Fraction(1, 4), 0: Fraction(1, 2), 4: Fraction(1, 4)}


def test_empirical_tails_ks():
    samples = [StoppedSample(1.0, 1.0, 0.0, 1)] * 10
    t = empirical_tails(samples)
    assert t.ks_distance(DELTA_1) == 0.0
    assert t.max_tail(1.0) == 1.0 and t.min_tail(0.1) == 0.0
    with pytest.raises(ValueError):
        empirical_tails([])
