from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from holeale.quadrature import (exactness_degree, line_rule, prism_rule, reference_quadrature,
                                symmetric_tet_rule, tet_rule, triangle_rule)


def tet_moment(a, b, c):
    """Integral of x^a y^b z^c over the unit reference tetrahedron."""
    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)


def tri_moment(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def exps(D, d):
    return [e for e in np.ndindex(*(D + 1,) * d) if sum(e) <= D]


def apply(rule, e):
    return float(rule.weights @ np.prod(rule.nodes ** np.array(e), axis=1))


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_line_rule_exact_to_2n_minus_1(n):
    rule = line_rule(n)
    for k in range(2 * n):
        assert apply(rule, (k,)) == pytest.approx(1.0 / (k + 1), abs=1e-14)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_triangle_rule_exact_to_2n_minus_1(n):
    rule = triangle_rule(n)
    for e in exps(2 * n - 1, 2):
        assert abs(apply(rule, e) - tri_moment(*e)) <= 1e-15


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_tet_rule_exact_to_2n_minus_1(n):
    rule = tet_rule(n)
    for e in exps(2 * n - 1, 3):
        assert abs(apply(rule, e) - tet_moment(*e)) <= 1e-15


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
def test_symmetric_tet_rule_exact_and_positive(degree):
    rule = symmetric_tet_rule(degree)
    assert np.all(rule.weights > 0)
    lam = 1.0 - rule.nodes.sum(axis=1)
    assert np.all(rule.nodes > 0) and np.all(lam > 0)
    for e in exps(degree, 3):
        assert abs(apply(rule, e) - tet_moment(*e)) <= 1e-13 * max(1.0, tet_moment(*e))


def test_symmetric_tet_rule_sizes():
    assert [len(symmetric_tet_rule(d)) for d in (2, 5, 6)] == [4, 14, 24]


def test_reference_quadrature_node_counts():
    # tet: max(8, (N+1)^3) nodes; prism: max(2, N+1) * max(4, (N+1)^2)
    assert len(reference_quadrature("tet", 1)) == 8
    assert len(reference_quadrature("prism", 2)) == 27
    for N in range(4):
        n = max(2, N + 1)
        m = max(2, N + 2)
        assert len(reference_quadrature("tet", N)) == max(8, (N + 1) ** 3)
        assert len(reference_quadrature("prism", N)) == n * max(4, (N + 1) ** 2)
        assert len(reference_quadrature("prism_boosted", N)) == m * max(4, (N + 2) ** 2)


@pytest.mark.parametrize("N", [0, 1, 2, 3])
def test_reference_quadrature_unit_measures(N):
    assert reference_quadrature("tet", N).weights.sum() == pytest.approx(1.0 / 6.0, abs=1e-15)
    assert reference_quadrature("prism", N).weights.sum() == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("N", [0, 1, 2, 3])
@pytest.mark.parametrize("kind", ["prism", "prism_boosted"])
def test_prism_rules_exact_to_2N(N, kind):
    rule = reference_quadrature(kind, N)
    D = 2 * N + 2 if kind == "prism_boosted" else 2 * N
    assert exactness_degree(kind, N) >= D
    for e in exps(D, 3):
        exact = tri_moment(e[0], e[1]) / (e[2] + 1)
        assert abs(apply(rule, e) - exact) <= 1e-13


@pytest.mark.parametrize("N", [0, 1, 2, 3])
def test_tet_and_time_rules_exact_to_2N(N):
    for e in exps(2 * N, 3):
        assert abs(apply(reference_quadrature("tet", N), e) - tet_moment(*e)) <= 1e-13
    for k in range(2 * N + 1):
        assert abs(apply(reference_quadrature("time", N), (k,)) - 1.0 / (k + 1)) <= 1e-13


def test_unsupported_degree_rejected():
    with pytest.raises(ValueError):
        reference_quadrature("tet", 4)
    with pytest.raises(ValueError):
        reference_quadrature("cube", 1)


@given(st.integers(0, 3), st.tuples(st.integers(0, 8), st.integers(0, 8), st.integers(0, 8)))
def test_prism_monomials_property(N, e):
    """Any monomial within the advertised degree is integrated to 1e-13."""
    if sum(e) > exactness_degree("prism", N):
        return
    exact = tri_moment(e[0], e[1]) / (e[2] + 1)
    assert abs(apply(reference_quadrature("prism", N), e) - exact) <= 1e-13


@given(st.tuples(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6)))
def test_symmetric_tet_rule_property(e):
    D = sum(e)
    if D > 6:
        return
    assert abs(apply(symmetric_tet_rule(max(2, D)), e) - tet_moment(*e)) <= 1e-13


def test_prism_rule_tensor_structure():
    rule = prism_rule(2, 3)
    assert len(rule) == 4 * 3
    assert rule.nodes.shape == (12, 3)
