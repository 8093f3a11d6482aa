import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre as L

from lglocp.basis import barycentric_basis, make_rule
from lglocp.matrices import (adjoint_integral_matrix, augmented_diff, degree_condition_residual,
                             differentiation_matrix, dp_vector, dual_diff_matrix,
                             integral_operators, interval_operators, lgl_operators)


def _ops(n):
    return lgl_operators(make_rule("lgl", n))


def _integrated_basis(nodes, upper):
    """int_{-1}^{upper_i} L_j by 40-point Gauss quadrature, independent of the operators."""
    g, gw = L.leggauss(40)
    basis = barycentric_basis(nodes)
    out = np.empty((len(upper), len(nodes)))
    for i, b in enumerate(upper):
        t = -1.0 + (b + 1.0) * (g + 1.0) / 2.0
        out[i] = (b + 1.0) / 2.0 * gw @ basis.matrix(t)
    return out


def test_small_cases_by_hand():
    ops = _ops(2)
    np.testing.assert_allclose(ops.diff, [[-0.5, 0.5], [-0.5, 0.5]])
    np.testing.assert_allclose(ops.dp, [-2, 2])
    np.testing.assert_allclose(ops.integ, [[1, 1]])
    np.testing.assert_allclose(ops.ap, [-0.25, 0.25])
    np.testing.assert_allclose(ops.dual_diff, ops.diff)
    np.testing.assert_allclose(_ops(3).dp, [2, -1, 2])


def test_adjoint_integral_n3_by_hand():
    ops = _ops(3)
    tau, w = ops.rule.nodes, ops.rule.weights
    np.testing.assert_allclose(ops.adjoint_integ[:, 0], (1 - tau) - w[2], atol=1e-14)
    np.testing.assert_allclose(ops.adjoint_integ[:, 1], w[2], atol=1e-14)


@pytest.mark.parametrize("n", range(2, 21))
def test_diff_matrix_properties(n):
    rule = make_rule("lgl", n)
    D = differentiation_matrix(rule)
    assert np.abs(D.sum(axis=1)).max() <= 1e-12
    if n >= 3:
        np.testing.assert_allclose(D @ rule.nodes**2, 2 * rule.nodes, atol=1e-11)
    np.testing.assert_array_equal(augmented_diff(rule), np.column_stack([D, dp_vector(rule)]))


@pytest.mark.parametrize("n", range(2, 21))
def test_dp_is_node_product(n):
    tau = make_rule("lgl", n).nodes
    expected = [np.prod([tau[i] - tau[j] for j in range(n) if j != i]) for i in range(n)]
    np.testing.assert_allclose(_ops(n).dp, expected, rtol=1e-12)
    assert np.all(np.sign(_ops(n).dp) == (-1.0) ** (n - 1 - np.arange(n)))


@pytest.mark.parametrize("n", range(2, 21))
def test_leading_block_inverse(n):
    ops = _ops(n)
    block = ops.aug_diff[:, 1:]
    inv = np.vstack([ops.integ, ops.ap])
    assert np.abs(inv @ block - np.eye(n)).max() <= 1e-10
    expected = np.r_[-np.ones(n - 1), 0.0]
    assert np.abs(np.linalg.solve(block, ops.aug_diff[:, 0]) - expected).max() <= 1e-10


@pytest.mark.parametrize("n", range(2, 16))
def test_integration_matrix_oracles(n):
    ops = _ops(n)
    tau = ops.rule.nodes
    assert np.abs(ops.integ - _integrated_basis(tau, tau[1:])).max() <= 1e-10
    closed = np.array([np.prod([1.0 / (tau[i] - tau[j]) for j in range(n) if j != i])
                       for i in range(n)]) / n
    np.testing.assert_allclose(ops.ap, closed, rtol=1e-10)
    np.testing.assert_allclose(ops.integ[-1], ops.rule.weights, atol=1e-11)


@pytest.mark.parametrize("n", range(2, 21))
def test_dual_diff_equals_diff(n):
    ops = _ops(n)
    np.testing.assert_array_equal(ops.dual_diff, dual_diff_matrix(ops))
    assert np.abs(ops.dual_diff - ops.diff).max() <= 1e-11


@pytest.mark.parametrize("n", range(3, 16))
def test_adjoint_integral_structure(n):
    ops = _ops(n)
    w = ops.rule.weights
    Ad = adjoint_integral_matrix(ops)
    np.testing.assert_array_equal(Ad, ops.adjoint_integ)
    np.testing.assert_allclose(w[:, None] * Ad, ops.integ.T * w[1:], atol=1e-15)
    assert np.abs(Ad[:, -1] - w[-1]).max() <= 1e-12
    for j in range(Ad.shape[1] - 1):
        assert abs(degree_condition_residual(ops, Ad[:, j])) <= 1e-10


@pytest.mark.parametrize("n", range(3, 21))
def test_degree_condition_biconditional(n):
    ops = _ops(n)
    tau = ops.rule.nodes
    for k in range(n - 1):
        assert abs(degree_condition_residual(ops, L.legval(tau, np.eye(k + 1)[k]))) <= 1e-10
    assert abs(degree_condition_residual(ops, tau ** (n - 1))) >= 1e-3
    assert degree_condition_residual(ops, tau ** (n - 1)) == pytest.approx(1.0)
    assert degree_condition_residual(ops, np.zeros(n)) == 0.0


def test_raw_degree_residual_on_leading_monomial():
    # D_p^T W tau^(N-1) brute force, without the operator object
    for n in (3, 6, 10):
        rule = make_rule("lgl", n)
        tau, w = rule.nodes, rule.weights
        dp = [np.prod([tau[i] - tau[j] for j in range(n) if j != i]) for i in range(n)]
        raw = degree_condition_residual(_ops(n), tau ** (n - 1), normalize=False)
        assert raw == pytest.approx(np.dot(np.array(dp) * w, tau ** (n - 1)), rel=1e-12)


def test_integral_operators_reject_other_families():
    with pytest.raises(ValueError):
        integral_operators(make_rule("lgr", 4))


@pytest.mark.parametrize("family", ["lg", "lgr", "lgl"])
@pytest.mark.parametrize("n", [2, 4, 9])
def test_interval_integration_matrices(family, n):
    ops = interval_operators(make_rule(family, n))
    colloc = ops.support[ops.colloc]
    expected = _integrated_basis(colloc, ops.support[1:])
    assert np.abs(ops.integ - expected).max() <= 1e-11


def test_operators_are_read_only():
    ops = _ops(5)
    with pytest.raises(ValueError):
        ops.integ[0, 0] = 1.0


@settings(max_examples=30, deadline=None)
@given(n=st.integers(3, 18), data=st.data())
def test_integration_inverts_differentiation(n, data):
    # any polynomial of degree < N: A (D x) = x_{2:N} - x_1
    ops = _ops(n)
    coeffs = np.array(data.draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n)))
    x = np.polynomial.polynomial.polyval(ops.rule.nodes, coeffs)
    np.testing.assert_allclose(ops.integ @ (ops.diff @ x), x[1:] - x[0], atol=1e-9)
    assert abs(ops.ap @ (ops.diff @ x)) <= 1e-9
