import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from piestab.polynomial import (
    AffineCoeff,
    BilinearError,
    PolyMat,
    ShapeError,
    coeff_match,
    coeff_rows,
    poly_add,
    poly_int,
    poly_int_product,
    poly_mul,
    poly_subs,
)

S = PolyMat.monomial(1, 0)
TH = PolyMat.monomial(0, 1)
ONE = PolyMat.constant([[1.0]])


def scalar(*pairs, domain=(0.0, 1.0)):
    """Scalar polynomial from ``((i, j), coeff)`` pairs."""
    return PolyMat.from_entries(1, 1, {(0, 0): dict(pairs)}, domain)


def var(k, w=1.0):
    return AffineCoeff(0.0, {k: w})


@st.composite
def int_polymats(draw, rows=None, cols=None, max_deg=3):
    r = draw(st.integers(1, 3)) if rows is None else rows
    c = draw(st.integers(1, 3)) if cols is None else cols
    ds = draw(st.integers(0, max_deg))
    dt = draw(st.integers(0, max_deg))
    coeffs = draw(arrays(np.float64, (r, c, ds + 1, dt + 1), elements=st.integers(-4, 4).map(float)))
    return PolyMat.from_dense(coeffs)


@st.composite
def conformable_mats(draw):
    n, k, m, p = (draw(st.integers(1, 3)) for _ in range(4))
    A = draw(int_polymats(n, k))
    B = draw(int_polymats(k, m))
    C = draw(int_polymats(k, m))
    D = draw(int_polymats(m, p, max_deg=2))
    return A, B, C, D


# -- examples -------------------------------------------------------------


def test_additive_identity():
    A = scalar(((1, 0), 2.0), ((0, 2), -1.0))
    assert poly_add(A, PolyMat.zeros(1, 1)) == A


def test_add_distinct_variables():
    assert poly_add(S, TH) == scalar(((1, 0), 1.0), ((0, 1), 1.0))


def test_add_collects_decision_variables():
    A = PolyMat.from_entries(1, 1, {(0, 0): {(1, 0): var(1, 2.0)}})
    B = PolyMat.from_entries(1, 1, {(0, 0): {(1, 0): var(1, 3.0)}})
    assert (A + B).entry(0, 0) == {(1, 0): var(1, 5.0)}


def test_mul_identity_and_monomials():
    A = PolyMat.from_dense(np.arange(8.0).reshape(2, 2, 2, 1))
    assert poly_mul(PolyMat.identity(2), A) == A
    assert poly_mul(S, S - TH) == scalar(((2, 0), 1.0), ((1, 1), -1.0))


def test_mul_beam_generator():
    c = 3.0
    R = PolyMat.constant([[0.0, -c], [1.0, 0.0]])
    assert poly_mul(R, PolyMat.identity(2)) == R


def test_mul_errors():
    with pytest.raises(ShapeError):
        poly_mul(PolyMat.zeros(2, 3), PolyMat.zeros(2, 3))
    P = PolyMat.variables(np.array([[1]]))
    with pytest.raises(BilinearError):
        poly_mul(P, P)
    with pytest.raises(ShapeError):
        poly_add(PolyMat.zeros(1, 2), PolyMat.zeros(2, 1))


def test_integrals():
    assert poly_int(ONE, "s", "theta", "s") == S - TH
    integrand = scalar(((1, 0), 2.0), ((0, 1), -2.0))  # 2(s - eta), eta in the theta slot
    assert poly_int(integrand, "theta", 0.0, "s") == scalar(((2, 0), 1.0))
    a, b = 0.5, 2.0
    left = scalar(((1, 1), 1.0), domain=(a, b))  # s * xi
    right = scalar(((0, 1), 1.0), domain=(a, b))  # theta
    got = poly_int_product(left, right, "a", "b")
    assert got.allclose(scalar(((1, 1), (b**2 - a**2) / 2), domain=(a, b)), atol=1e-14)


def test_integral_against_quadrature(rule):
    f = scalar(((0, 0), 0.3), ((1, 2), -1.2), ((2, 3), 0.7))
    F = poly_int(f, "theta", "a", "b")
    for s0 in (0.1, 0.6):
        want = rule.integrate(lambda t: f.evaluate(s0, t)[0, 0])
        assert abs(F.evaluate(s0)[0, 0] - want) < 1e-13


def test_subs_examples():
    assert poly_subs(S - TH, "s", "swap") == TH - S
    assert poly_subs(S, "s", "a").is_zero
    a, b = 0.0, 2.0
    Q = scalar(((0, 0), 1.0), ((0, 1), 3.0), domain=(a, b))  # no s dependence
    assert poly_subs(Q, "s", "a") == Q
    assert Q.diff("s").is_zero


def test_coeff_match_examples():
    assert coeff_match(PolyMat.zeros(2, 2)) == []
    entry = {(1, 0): var(1), (0, 1): AffineCoeff(-1.0, {2: 1.0})}
    eqs = coeff_match(PolyMat.from_entries(1, 1, {(0, 0): entry}))
    assert {(tuple(e.coeffs.items()), e.rhs) for e in eqs} == {(((1, 1.0),), 0.0), (((2, 1.0),), 1.0)}


def test_coeff_match_counts_degree_two_kernel():
    ids = np.arange(1, 7)
    monos = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    K = PolyMat.from_entries(1, 1, {(0, 0): {m: var(int(k)) for m, k in zip(monos, ids)}})
    M, rhs, _ = coeff_rows(K)
    assert M.shape[0] == 6 and np.all(rhs == 0)


def test_canonical_form_drops_zeros():
    A = S - S
    assert A.is_zero and A == PolyMat.zeros(1, 1)
    assert A.degree() == (-1, -1)


def test_instantiate_and_evaluate():
    P = PolyMat.variables(np.array([[1, 2], [2, 3]]))
    M = poly_mul(PolyMat.constant([[1.0, 0.0], [0.0, 2.0]]), P)
    vals = np.array([0.0, 1.0, 2.0, 3.0])
    assert np.allclose(M.instantiate(vals).evaluate(0.3)[:, :], [[1.0, 2.0], [4.0, 6.0]])


# -- properties -----------------------------------------------------------


@given(int_polymats(2, 2), int_polymats(2, 2), int_polymats(2, 2))
def test_addition_associative(A, B, C):
    assert (A + B) + C == A + (B + C)


@given(conformable_mats())
def test_multiplication_laws(mats):
    A, B, C, D = mats
    assert poly_mul(A, B + C) == poly_mul(A, B) + poly_mul(A, C)
    assert poly_mul(A, poly_mul(B, D)) == poly_mul(poly_mul(A, B), D)


@given(arrays(np.float64, (6,), elements=st.floats(-5, 5)), st.floats(-1, 1))
def test_derivative_inverts_integral(c, a):
    dom = (a, a + 1.5)
    f = PolyMat.from_dense(c.reshape(1, 1, 6, 1), dom)
    F = poly_int(f, "s", "a", "s")
    assert F.diff("s").allclose(f, atol=1e-12)
    assert abs(F.evaluate(a)[0, 0]) < 1e-12


@given(int_polymats())
def test_swap_is_involution(A):
    assert poly_subs(poly_subs(A, "s", "swap"), "s", "swap") == A


@given(
    arrays(np.float64, (2, 3, 3, 3), elements=st.floats(-2, 2)),
    arrays(np.float64, (3, 2, 3, 3), elements=st.floats(-2, 2)),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_evaluation_homomorphism(ca, cb, s0, t0):
    A, B = PolyMat.from_dense(ca), PolyMat.from_dense(cb)
    lhs = poly_mul(A, B).evaluate(s0, t0)
    rhs = A.evaluate(s0, t0) @ B.evaluate(s0, t0)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12)
