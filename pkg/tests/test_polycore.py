import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from momentcert.polycore import (DegreeMismatch, ExponentOutOfRange, MomentVector, MonomialBasis,
                                 NonPositiveWeight, Polynomial, SemialgebraicDescription,
                                 bit_size, exponent_of, index_of, input_stats, localizing_matrix,
                                 moment_matrix, moments_of_atomic_measure, riesz_apply)

from conftest import ball, unit_disc, y_example_3_8


def test_basis_examples():
    assert index_of(MonomialBasis(1, 4), (0,)) == 0
    b = MonomialBasis(2, 2)
    assert b.exponents == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))
    assert index_of(b, (0, 2)) == 5
    assert len(MonomialBasis(2, 6)) == 28


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("d", range(9))
def test_basis_bijection(n, d):
    b = MonomialBasis(n, d)
    assert len(b) == math.comb(n + d, d)
    for i in range(len(b)):
        assert index_of(b, exponent_of(b, i)) == i
    degs = [sum(e) for e in b.exponents]
    assert degs == sorted(degs)
    assert b.exponents[:math.comb(n + d - 1, d - 1) if d else 1] == MonomialBasis(n, max(d - 1, 0)).exponents


def test_basis_errors():
    b = MonomialBasis(2, 2)
    with pytest.raises(ExponentOutOfRange):
        b.index_of((2, 1))
    with pytest.raises(ExponentOutOfRange):
        b.index_of((1,))
    with pytest.raises(ExponentOutOfRange):
        b.exponent_of(6)


def test_polynomial_canonical_form():
    p = Polynomial(1, {(0,): 1, (1,): 0, (2,): Fraction(0)})
    assert p.coeffs == {(0,): 1}
    assert p.degree() == 0
    assert Polynomial(2).degree() == -math.inf
    x = Polynomial.variable(1, 0)
    assert (x * x - x * x).is_zero()
    assert (1 + (1 - x) * (1 - x)) == Polynomial(1, {(0,): 2, (1,): -2, (2,): 1})


def test_riesz_examples():
    y = MomentVector(1, 2, (1, 1, 0))
    p0, p1, p2 = 3, Fraction(1, 7), -5
    assert riesz_apply(y, Polynomial(1, {(0,): p0, (1,): p1, (2,): p2})) == p0 + p1
    assert riesz_apply(y, Polynomial(1)) == 0
    p = 1 + Fraction(8, 9) * ball(2)
    y38 = y_example_3_8()
    assert riesz_apply(y38, p) == 0
    assert y38[(0, 0)] * (1 + Fraction(8, 9)) == Fraction(544, 9)
    with pytest.raises(DegreeMismatch):
        riesz_apply(y, Polynomial.monomial((3,)))


poly_coeffs = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)).filter(lambda e: sum(e) <= 3),
                              st.fractions(max_denominator=50), max_size=6)


@given(poly_coeffs, poly_coeffs, st.fractions(max_denominator=20), st.fractions(max_denominator=20),
       st.lists(st.fractions(max_denominator=30), min_size=10, max_size=10))
def test_riesz_linearity_exact(cp, cq, a, b, vals):
    y = MomentVector(2, 3, tuple(vals))
    p, q = Polynomial(2, cp), Polynomial(2, cq)
    assert riesz_apply(y, a * p + b * q) == a * riesz_apply(y, p) + b * riesz_apply(y, q)


def test_moment_matrix_examples():
    assert moment_matrix(MomentVector(1, 2, (1, 1, 0)), 1) == [[1, 1], [1, 0]]
    M = moment_matrix(MomentVector(1, 4, (1, 0, 0, 0, 1)), 2)
    assert M == [[1, 0, 0], [0, 0, 0], [0, 0, 1]]
    with pytest.raises(DegreeMismatch):
        moment_matrix(MomentVector(1, 2, (1, 1, 0)), 2)


def test_moment_matrix_dirac_rank_one():
    u = (Fraction(1, 2), Fraction(-2, 3))
    y = moments_of_atomic_measure([(1, u)], 2, 4)
    M = moment_matrix(y, 2)
    v = [u[0] ** e[0] * u[1] ** e[1] for e in MonomialBasis(2, 2).exponents]
    assert M == [[a * b for b in v] for a in v]


def test_localizing_examples():
    y = moments_of_atomic_measure([(1, (Fraction(1, 2),))], 1, 4)
    L = localizing_matrix(y, Polynomial(1, {(0,): 1, (2,): -1}), 1)
    assert L == [[Fraction(3, 4), Fraction(3, 8)], [Fraction(3, 8), Fraction(3, 16)]]
    y = MomentVector(1, 2, (1, 1, 0))
    assert localizing_matrix(y, Polynomial(1, {(0,): 1, (2,): -1}), 0) == [[1]]
    assert localizing_matrix(y, Polynomial.constant(1, 1), 1) == moment_matrix(y, 1)
    with pytest.raises(DegreeMismatch):
        localizing_matrix(y, Polynomial(1, {(0,): 1, (2,): -1}), 1)


def test_atomic_moments_examples():
    assert moments_of_atomic_measure([(1, (0, 0))], 2, 3).values == (1,) + (0,) * 9
    half = Fraction(1, 2)
    y = moments_of_atomic_measure([(half, (1,)), (half, (-1,))], 1, 4)
    assert y.values == (1, 0, 1, 0, 1)
    r = math.sqrt(3 / 5)
    y = moments_of_atomic_measure([(5 / 9, (-r,)), (8 / 9, (0.0,)), (5 / 9, (r,))], 1, 4)
    np.testing.assert_allclose(y.as_array(), [2, 0, 2 / 3, 0, 2 / 5], atol=1e-14)
    with pytest.raises(NonPositiveWeight):
        moments_of_atomic_measure([(0, (1,))], 1, 2)


def test_moment_matrix_symmetric():
    rng = np.random.default_rng(3)
    y = MomentVector(2, 6, tuple(rng.normal(size=28)))
    for order in range(4):
        M = moment_matrix(y, order)
        assert np.array_equal(M, M.T)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_atomic_moments_give_psd_matrices(s, seed):
    rng = np.random.default_rng(seed)
    g = unit_disc()
    pts = []
    while len(pts) < s:
        u = rng.uniform(-1, 1, 2)
        if u @ u <= 1:
            pts.append(u)
    y = moments_of_atomic_measure(zip(rng.uniform(0.1, 2, s), pts), 2, 4)
    assert np.linalg.eigvalsh(moment_matrix(y, 2))[0] >= -1e-10
    assert np.linalg.eigvalsh(localizing_matrix(y, g.g[0], 1))[0] >= -1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_atomic_round_trip_riesz(seed):
    rng = np.random.default_rng(seed)
    atoms = [(rng.uniform(0.1, 2), rng.uniform(-1, 1, 2)) for _ in range(3)]
    y = moments_of_atomic_measure(atoms, 2, 4)
    basis = MonomialBasis(2, 4)
    p = Polynomial.from_dense(basis, np.where(rng.random(15) < 0.4, rng.normal(size=15), 0.0))
    direct = sum(c * p(u) for c, u in atoms)
    assert float(riesz_apply(y, p)) == pytest.approx(direct, rel=1e-12, abs=1e-12)


def test_input_stats_examples():
    st0 = input_stats(MomentVector(1, 2, (1, 1, 0)), SemialgebraicDescription(1, ()), 2)
    assert (st0.N, st0.d_g, st0.delta) == (3, 0, 3)
    st8 = input_stats(y_example_3_8(), unit_disc(), 6)
    assert (st8.N, st8.d_g, st8.delta) == (28, 2, 7)
    # bit size: 128 = 0b10000000 -> 8 bits, denominator 1 -> 1 bit
    assert st8.tau_y == 9
    assert st8.tau == max(29 * 9, math.comb(4, 2) * st8.tau_g)


def test_bit_size_convention():
    assert bit_size(0) == 1
    assert bit_size(Fraction(-3, 4)) == 2 + 3
    assert bit_size(Fraction(6, 8)) == bit_size(Fraction(3, 4))


@given(st.lists(st.integers(-1000, 1000), min_size=3, max_size=3), st.integers(0, 2))
def test_tau_monotone_under_doubling(vals, i):
    g = SemialgebraicDescription(1, ())
    before = input_stats(MomentVector(1, 2, tuple(vals)), g).tau
    vals = list(vals)
    vals[i] *= 2
    assert input_stats(MomentVector(1, 2, tuple(vals)), g).tau >= before


def test_semialgebraic_flags():
    assert SemialgebraicDescription(2, ()).is_flagged_noncompact()
    assert unit_disc().has_ball_constraint()
    assert not SemialgebraicDescription(1, (Polynomial(1, {(0,): 1, (1,): -1}),)).has_ball_constraint()
    with pytest.raises(ValueError):
        SemialgebraicDescription(2, (ball(1),))
