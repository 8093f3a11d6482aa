"""Collocation operators for LGL rules, plus the integration matrices of LG/LGR.

Every operator here acts on one interval [-1, 1]; multi-interval assembly
lives in :mod:`lglocp.transcription`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .basis import NodeFamily, QuadratureRule, barycentric_basis


class SingularSubmatrix(np.linalg.LinAlgError):
    pass


def _diff_from_nodes(nodes) -> np.ndarray:
    basis = barycentric_basis(nodes)
    beta = basis.barycentric_weights
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    d = (beta[None, :] / beta[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def differentiation_matrix(rule: QuadratureRule) -> np.ndarray:
    """D[i, j] = L_j'(tau_i) for the Lagrange basis on the rule's own nodes."""
    if rule.n < 2:
        raise ValueError("differentiation needs at least two nodes")
    return _diff_from_nodes(np.asarray(rule.nodes))


def dp_vector(rule: QuadratureRule) -> np.ndarray:
    """Derivative of the node polynomial at each node: prod_{j != i}(tau_i - tau_j)."""
    return 1.0 / barycentric_basis(rule.nodes).barycentric_weights


def augmented_diff(rule: QuadratureRule) -> np.ndarray:
    return np.column_stack([differentiation_matrix(rule), dp_vector(rule)])


def _require_lgl(rule):
    if rule.family is not NodeFamily.LGL:
        raise ValueError(f"operator defined for LGL rules only, got {rule.family.value}")


def integral_operators(rule: QuadratureRule):
    """Return ``(A, A_p)`` from inverting the trailing N x N block of [D | D_p].

    ``A`` is (N-1) x N and maps nodal rates to X_{2:N} - X_1; ``A_p`` maps
    nodal rates to the coefficient of the node polynomial.
    """
    _require_lgl(rule)
    block = augmented_diff(rule)[:, 1:]
    inverse = _inverse(block)
    return inverse[:-1], inverse[-1]


def _inverse(block):
    with np.errstate(all="raise"):
        try:
            lu = scipy.linalg.lu_factor(block, check_finite=True)
        except (FloatingPointError, ValueError, scipy.linalg.LinAlgError) as err:
            raise SingularSubmatrix(str(err)) from err
    if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(block).max()):
        raise SingularSubmatrix("zero pivot in differentiation block")
    return scipy.linalg.lu_solve(lu, np.eye(block.shape[0]))


def _adjoint_integ(w, integ):
    return (integ.T * w[1:][None, :]) / w[:, None]


def _dual_diff(w, diff):
    d = -(diff.T * w[None, :]) / w[:, None]
    d[0, 0] -= 1.0 / w[0]
    d[-1, -1] += 1.0 / w[-1]
    return d


def adjoint_integral_matrix(ops: "CollocationOperators") -> np.ndarray:
    """W^{-1} A^T W_{2:N}, shape N x (N-1)."""
    return _adjoint_integ(np.asarray(ops.rule.weights), ops.integ)


def dual_diff_matrix(ops: "CollocationOperators") -> np.ndarray:
    """-W^{-1} D^T W - e1 e1^T / w_1 + eN eN^T / w_N."""
    return _dual_diff(np.asarray(ops.rule.weights), ops.diff)


def degree_condition_residual(ops: "CollocationOperators", nodal_values, normalize=True):
    """Test whether the interpolant of ``nodal_values`` has degree <= N-2.

    The raw form is ``D_p^T W v``. It vanishes exactly on polynomials of
    degree <= N-2 but shrinks like 2^-N on ``tau^(N-1)``, so by default it is
    divided by its value on ``tau^(N-1)``, which turns it into the leading
    monomial coefficient of the interpolant. Works columnwise on (N, k) input.
    """
    v = np.asarray(nodal_values, dtype=float)
    w = np.asarray(ops.rule.weights)
    raw = (ops.dp * w) @ v
    if not normalize:
        return raw
    return raw / ops.leading_scale


@dataclass(frozen=True)
class CollocationOperators:
    rule: QuadratureRule
    diff: np.ndarray
    dp: np.ndarray
    aug_diff: np.ndarray
    integ: np.ndarray
    ap: np.ndarray
    adjoint_integ: np.ndarray
    dual_diff: np.ndarray

    @property
    def n(self) -> int:
        return self.rule.n

    @property
    def leading_scale(self) -> float:
        tau = np.asarray(self.rule.nodes)
        return float((self.dp * self.rule.weights) @ tau ** (self.n - 1))


def lgl_operators(rule: QuadratureRule) -> CollocationOperators:
    _require_lgl(rule)
    diff = differentiation_matrix(rule)
    dp = dp_vector(rule)
    integ, ap = integral_operators(rule)
    w = np.asarray(rule.weights)
    arrays = [diff, dp, np.column_stack([diff, dp]), integ, ap,
              _adjoint_integ(w, integ), _dual_diff(w, diff)]
    for arr in arrays:
        arr.setflags(write=False)
    return CollocationOperators(rule, *arrays)


@dataclass(frozen=True)
class IntervalOperators:
    """Integral-form data every scheme shares.

    ``support`` are the abscissae carrying state values (first entry -1);
    ``colloc`` indexes the support points where rates are collocated;
    ``integ`` maps collocated rates to ``X[support[1:]] - X[support[0]]``.
    ``weights`` are the quadrature weights at the collocation points.
    """

    rule: QuadratureRule
    support: np.ndarray
    colloc: np.ndarray
    integ: np.ndarray
    weights: np.ndarray


def interval_operators(rule: QuadratureRule) -> IntervalOperators:
    nodes = np.asarray(rule.nodes)
    w = np.asarray(rule.weights)
    if rule.family is NodeFamily.LGL:
        integ, _ = integral_operators(rule)
        return IntervalOperators(rule, nodes.copy(), np.arange(rule.n), integ, w)
    if rule.family is NodeFamily.LGR:
        support = np.concatenate([nodes, [1.0]])
        d = _diff_from_nodes(support)[: rule.n]
        integ = _inverse(d[:, 1:])
        return IntervalOperators(rule, support, np.arange(rule.n), integ, w)
    support = np.concatenate([[-1.0], nodes, [1.0]])
    d = _diff_from_nodes(support[:-1])[1:]
    integ = np.vstack([_inverse(d[:, 1:]), w])
    return IntervalOperators(rule, support, np.arange(1, rule.n + 1), integ, w)
