import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from skoro.fixtures import DELTA_1, MU_A, MU_B, integrable_mixed_measure, mixed_measure
from skoro.measure import (
    INF,
    DensityPiece,
    MeasureError,
    TargetMeasure,
    TruncationInfeasible,
    c_approx_gap,
    c_deriv,
    check_truncation,
    measure_from_dict,
    measure_to_dict,
    tail_means,
    truncate_center,
)

PIECES = [
    DensityPiece("uniform", -2.0, 3.0, 1.0),
    DensityPiece("power", 2.0, INF, 1.0, beta=1.5),
    DensityPiece("power", -INF, -1.0, 1.0, beta=2.5, pivot=0.5),
    DensityPiece("exponential", 1.0, INF, 1.0, beta=0.7),
    DensityPiece("exponential", -INF, -0.5, 1.0, beta=-1.3),
    DensityPiece("logpower", math.e, INF, 1.0, beta=1.2),
    DensityPiece("logpower", -INF, -2.0, 1.0, beta=1.5),
]


def _quad(f, a, b):
    if math.isinf(a) or math.isinf(b):
        val, _ = integrate.quad(f, a, b, limit=400, epsabs=1e-13, epsrel=1e-11)
        return val
    val, _ = integrate.quad(f, a, b, epsabs=1e-13, epsrel=1e-11)
    return val


@pytest.mark.parametrize("piece", PIECES, ids=lambda p: f"{p.family}[{p.lo},{p.hi}]")
def test_density_closed_forms_match_quadrature(piece):
    pdf = lambda u: float(piece.pdf(u))
    assert _quad(pdf, piece.lo, piece.hi) == pytest.approx(1.0, abs=1e-8)
    a = piece.lo if math.isfinite(piece.lo) else piece.hi - 7.0
    b = piece.hi if math.isfinite(piece.hi) else piece.lo + 5.0
    mid = 0.5 * (a + b)
    assert piece.mass(a, mid) == pytest.approx(_quad(pdf, a, mid), rel=1e-9, abs=1e-12)
    assert piece.moment(a, mid) == pytest.approx(_quad(lambda u: u * pdf(u), a, mid), rel=1e-9, abs=1e-12)


@pytest.mark.parametrize("piece", PIECES[:5], ids=lambda p: p.family)
def test_abs_moment_closed_form_vs_quad(piece):
    q = 0.5
    assert piece.abs_moment(q) == pytest.approx(piece.abs_moment_quad(q), rel=1e-7)


def test_piece_validation():
    with pytest.raises(MeasureError):
        DensityPiece("uniform", 0.0, INF, 1.0)
    with pytest.raises(MeasureError):
        DensityPiece("power", -1.0, 1.0, 1.0, beta=1.0, pivot=0.0)
    with pytest.raises(MeasureError):
        DensityPiece("power", 1.0, INF, 1.0, beta=0.0)  # not normalisable
    with pytest.raises(MeasureError):
        DensityPiece("logpower", 0.5, 2.0, 1.0)
    with pytest.raises(MeasureError):
        DensityPiece("gamma", 0.0, 1.0, 1.0)


def test_barycentre_two_point():
    # c(x) = E[min(x, U); U >= 0] on the positive side
    assert MU_A.c(0.5) == pytest.approx(0.25)
    assert MU_A.c(2.0) == pytest.approx(0.5)
    assert MU_A.c(-0.5) == pytest.approx(0.25)
    assert MU_B.c(1.0) == pytest.approx(1 / 3)
    assert MU_B.c(3.0) == pytest.approx(2 / 3)
    assert MU_B.c(-3.0) == pytest.approx(2 / 3)


def test_barycentre_derivatives_at_atoms():
    assert c_deriv(MU_B, 2.0, "left") == pytest.approx(1 / 3)
    assert c_deriv(MU_B, 2.0, "right") == 0.0
    assert c_deriv(MU_B, -1.0, "right") == pytest.approx(-2 / 3)
    assert c_deriv(MU_B, -1.0, "left") == 0.0
    assert c_deriv(MU_B, 0.0, "right") == pytest.approx(1 / 3)


@pytest.mark.parametrize("make", [mixed_measure, integrable_mixed_measure])
def test_barycentre_matches_integral(make):
    mu = make()
    for x in (-4.0, -1.5, -0.3, 0.2, 1.0, 4.0, 9.0):
        want = sum(m * min(abs(x), abs(a)) for a, m in mu.atoms if (a >= 0) == (x >= 0))
        for p in mu.pieces:
            if x >= 0 and p.hi > 0:
                want += _quad(lambda u: min(x, u) * float(p.pdf(u)), max(p.lo, 0.0), p.hi)
            elif x < 0 and p.lo < 0:
                want += _quad(lambda u: min(-x, -u) * float(p.pdf(u)), p.lo, min(p.hi, 0.0))
        assert mu.c(x) == pytest.approx(want, rel=1e-8, abs=1e-10)


def test_c_many_agrees_with_scalar():
    xs = np.linspace(-6, 6, 97)
    for mu in (MU_B, mixed_measure()):
        np.testing.assert_allclose(mu.c_many(xs), [mu.c(x) for x in xs], atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(-5, 5, allow_nan=False), st.floats(0.01, 1.0)), min_size=1, max_size=6
    ),
    st.floats(0.05, 6.0),
    st.floats(0.05, 6.0),
)
def test_barycentre_concave_and_bounded(atoms, x, y):
    tot = sum(m for _, m in atoms)
    mu = TargetMeasure.from_atoms([(a, m / tot) for a, m in atoms])
    for a, b in ((x, y), (-x, -y)):
        mid = mu.c(0.5 * (a + b))
        assert mid >= 0.5 * (mu.c(a) + mu.c(b)) - 1e-12
        assert mu.c(a) <= abs(a) + 1e-12


def test_tail_means_and_mean():
    pos, neg, mean = tail_means(MU_B)
    assert (pos, neg) == pytest.approx((2 / 3, 2 / 3))
    assert mean == pytest.approx(0.0, abs=1e-15)
    pos, neg, mean = tail_means(mixed_measure())
    assert pos == INF and mean is None


def test_cdf_and_masses():
    mu = MU_B
    assert mu.cdf(-1.0) == pytest.approx(2 / 3)
    assert mu.mass_below(-1.0, inclusive=False) == 0.0
    assert mu.mass_above(2.0) == pytest.approx(1 / 3)
    mu = mixed_measure()
    assert mu.total_mass == pytest.approx(1.0)
    assert mu.cdf(INF) == pytest.approx(1.0)


def test_reflection_swaps_sides():
    mu = mixed_measure()
    r = mu.reflect()
    for x in (-2.5, -0.4, 0.7, 3.0):
        assert r.c(x) == pytest.approx(mu.c(-x), rel=1e-12)
        assert r.cdf(x) == pytest.approx(1.0 - mu.mass_below(-x, inclusive=False), abs=1e-12)


def test_truncation_delta_one_exact():
    tm = truncate_center(DELTA_1, 10)
    got = dict(tm.result.atoms)
    assert got.keys() == {1.0, 20.0, -20.0}
    assert got[1.0] == pytest.approx(0.9, abs=1e-15)
    assert got[20.0] == pytest.approx(11 / 400, abs=1e-15)
    assert got[-20.0] == pytest.approx(29 / 400, abs=1e-15)
    assert all(check_truncation(tm).values())


@pytest.mark.parametrize("mu", [MU_A, MU_B, DELTA_1, integrable_mixed_measure(), mixed_measure()])
@pytest.mark.parametrize("n", [3, 10, 40])
def test_truncation_properties(mu, n):
    tm = truncate_center(mu, n)
    props = check_truncation(tm, tol=1e-9)
    assert all(props.values()), props
    assert c_approx_gap(mu, n, np.linspace(-50, 50, 201)) <= 1e-12


def test_truncation_infeasible_small_n():
    with pytest.raises(TruncationInfeasible):
        truncate_center(DELTA_1, 1)


def test_serialisation_roundtrip():
    mu = mixed_measure()
    doc = measure_to_dict(mu)
    assert doc["densities"][0]["interval"][0] == "-inf"
    back = measure_from_dict(doc)
    for x in (-3.5, -1.0, 0.3, 5.0):
        assert back.c(x) == pytest.approx(mu.c(x), rel=1e-14)


def test_from_dict_validation():
    with pytest.raises(MeasureError):
        measure_from_dict({"atoms": [[0, 0.5]]})
    with pytest.raises(MeasureError):
        measure_from_dict({"atoms": [[0, 1.0]], "colour": "red"})
    mu = measure_from_dict({"atoms": [[1, 0.5 + 5e-10], [-1, 0.5]]})
    assert mu.total_mass == pytest.approx(1.0, abs=1e-15)


def test_lp_moment():
    assert MU_B.lp_moment(1.0) == pytest.approx(4 / 3)
    assert not mixed_measure().in_lp(0.5)
    assert mixed_measure().in_lp(0.4)
