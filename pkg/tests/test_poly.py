from fractions import Fraction

from hypothesis import given, settings
from hypothesis import strategies as st

from fptbound.poly import Polynomial, falling_binomial, monomials_upto


def x(n=2, i=1):
    return Polynomial.variable(n, i)


def test_shift_square():
    p = x() ** 2
    assert p.shift((0, 1)) == x() ** 2 + x().scale(2) + 1


def test_shift_model1_change_vector():
    xm = Polynomial.variable(3, 1)
    assert xm.shift((0, -2, 1)) == xm - 2


def test_shift_mixed():
    xm, xd = Polynomial.variable(3, 1), Polynomial.variable(3, 2)
    got = (xm * xm * xd).shift((0, -2, 1))
    want = xm * xm * xd - 4 * xm * xd + 4 * xd + xm * xm - 4 * xm + 4
    assert got == want


def test_mul_difference_of_squares():
    assert (x() + 1) * (x() - 1) == x() ** 2 - 1


def test_mul_drift_product():
    p = (x().scale(2) + 1) * (x() ** 2).scale(Fraction(1, 10)) - (x() * (x().scale(2) + 1)).scale(Fraction(1, 10))
    want = (x() ** 3).scale(Fraction(2, 10)) - (x() ** 2).scale(Fraction(1, 10)) - x().scale(Fraction(1, 10))
    assert p == want


def test_additive_inverse_is_zero():
    p = x() ** 3 + x().scale(5) - 7
    assert (p + p.scale(-1)).is_zero()


def test_evaluate_examples():
    assert (x() ** 2 - x()).evaluate([0.0, 3.0]) == 6.0
    alpha = falling_binomial(2, 1, 2).scale(Fraction(2, 10))
    assert abs(alpha.evaluate([0.0, 25.0]) - 60.0) < 1e-12
    assert Polynomial.zero(2).evaluate([0.0, 17.0]) == 0.0


def test_monomials_graded_lex_time_first():
    mons = monomials_upto(2, 2)
    assert mons[0] == (0, 0)
    assert mons[1:3] == [(1, 0), (0, 1)] or mons[1:3] == [(0, 1), (1, 0)]
    assert len(mons) == 6


# -- properties --------------------------------------------------------------

NV = 3
coeff = st.fractions(min_value=-5, max_value=5, max_denominator=7)
expo = st.tuples(*[st.integers(0, 3)] * NV)
polys = st.dictionaries(expo, coeff, max_size=5).map(lambda d: Polynomial(NV, d))
shifts = st.tuples(st.just(0), st.integers(-3, 3), st.integers(-3, 3))
points = st.tuples(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4))


@settings(max_examples=60, deadline=None)
@given(polys, polys, polys)
def test_ring_axioms(p, q, r):
    assert p + q == q + p
    assert p * q == q * p
    assert (p + q) + r == p + (q + r)
    assert (p * q) * r == p * (q * r)
    assert p * (q + r) == p * q + p * r


@settings(max_examples=60, deadline=None)
@given(polys, shifts, points)
def test_shift_then_evaluate(p, v, pt):
    moved = [a + b for a, b in zip(pt, v)]
    assert p.shift(v).evaluate_exact(pt) == p.evaluate_exact(moved)


@settings(max_examples=60, deadline=None)
@given(polys, polys)
def test_degree_adds(p, q):
    if p.is_zero() or q.is_zero():
        return
    assert (p * q).degree == p.degree + q.degree


@settings(max_examples=40, deadline=None)
@given(polys)
def test_no_stored_zeros(p):
    assert all(c != 0 for _, c in (p - p.scale(Fraction(1, 2))).items())
