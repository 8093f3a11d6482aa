"""Legendre quadrature rules and barycentric Lagrange machinery on [-1, 1]."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MAX_NEWTON_ITERATIONS = 100
NEWTON_TOLERANCE = 1e-14
DUPLICATE_NODE_TOLERANCE = 1e-14


class NonConvergence(RuntimeError):
    pass


class DuplicateNodes(ValueError):
    pass


class NodeFamily(str, enum.Enum):
    LG = "LG"
    LGR = "LGR"
    LGL = "LGL"

    @property
    def exactness_degree_offset(self) -> int:
        # a rule with n points integrates degree 2n - offset exactly
        return {"LG": 1, "LGR": 2, "LGL": 3}[self.value]


@dataclass(frozen=True)
class QuadratureRule:
    family: NodeFamily
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def exactness_degree(self) -> int:
        return 2 * self.n - self.family.exactness_degree_offset


@dataclass(frozen=True)
class LagrangeBasis:
    nodes: np.ndarray
    barycentric_weights: np.ndarray

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.barycentric_weights.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def matrix(self, t) -> np.ndarray:
        """Values L_j(t_k) as a (len(t), N) matrix, exact Kronecker rows at nodes."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        diff = t[:, None] - self.nodes[None, :]
        exact = diff == 0.0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            terms = self.barycentric_weights / diff
            out = terms / terms.sum(axis=1, keepdims=True)
        # a query within underflow distance of a node is that node
        hit = exact.any(axis=1) | ~np.all(np.isfinite(out), axis=1)
        nearest = np.abs(diff[hit]).argmin(axis=1)
        out[hit] = 0.0
        out[np.flatnonzero(hit), nearest] = 1.0
        return out

    def __call__(self, nodal_values, t):
        return interpolate(self, nodal_values, t)


def legendre_eval(k: int, t):
    """Return ``(P_k(t), P_k'(t))`` from the three-term recurrence.

    Works elementwise on arrays. The derivative uses
    ``P'_{j+1} = P'_{j-1} + (2j + 1) P_j`` so it stays finite at ``t = +-1``.
    """
    if k < 0:
        raise ValueError("degree must be non-negative")
    t = np.asarray(t, dtype=float)
    p_prev, p = np.ones_like(t), t.copy()
    dp_prev, dp = np.zeros_like(t), np.ones_like(t)
    if k == 0:
        return p_prev, dp_prev
    for j in range(1, k):
        p_next = ((2 * j + 1) * t * p - j * p_prev) / (j + 1)
        dp_next = dp_prev + (2 * j + 1) * p
        p_prev, p = p, p_next
        dp_prev, dp = dp, dp_next
    return p, dp


def _legendre_second_derivative(k, t, p, dp):
    # from (1 - t^2) P'' - 2 t P' + k (k + 1) P = 0, valid away from the endpoints
    return (2.0 * t * dp - k * (k + 1) * p) / (1.0 - t * t)


def _newton(fun, x, lo=-1.0, hi=1.0):
    """Vectorized Newton iteration; ``fun`` returns (value, derivative)."""
    x = np.array(x, dtype=float)
    for _ in range(MAX_NEWTON_ITERATIONS):
        f, df = fun(x)
        step = f / df
        x_new = x - step
        # keep iterates strictly inside the open interval
        bad = (x_new <= lo) | (x_new >= hi) | ~np.isfinite(x_new)
        x_new[bad] = 0.5 * (x[bad] + np.where(step[bad] > 0, lo, hi))
        x = x_new
        if np.all(np.abs(step) <= NEWTON_TOLERANCE):
            return x
    raise NonConvergence(f"Newton iteration did not reach {NEWTON_TOLERANCE:g} in "
                         f"{MAX_NEWTON_ITERATIONS} iterations")


def _symmetrize(x):
    return 0.5 * (x - x[::-1])


def make_rule(family: NodeFamily | str, n: int) -> QuadratureRule:
    """Build the ``n``-point Legendre-Gauss, -Radau or -Lobatto rule.

    Nodes come from Newton iteration started at the matching Chebyshev
    points; weights from the closed-form expressions of each family.
    """
    family = NodeFamily(family.upper() if isinstance(family, str) else family)
    n = int(n)
    if family is NodeFamily.LGL and n < 2:
        raise ValueError("LGL rules need n >= 2 (both endpoints are nodes)")
    if n < 1:
        raise ValueError("rules need n >= 1")

    if family is NodeFamily.LG:
        k = np.arange(1, n + 1)
        guess = -np.cos(np.pi * (4 * k - 1) / (4 * n + 2))
        nodes = _symmetrize(np.sort(_newton(lambda x: legendre_eval(n, x), guess)))
        _, dp = legendre_eval(n, nodes)
        weights = 2.0 / ((1.0 - nodes**2) * dp**2)
        weights = 0.5 * (weights + weights[::-1])

    elif family is NodeFamily.LGR:
        # roots of P_{n-1} + P_n; tau = -1 is one of them
        def radau(x):
            p0, d0 = legendre_eval(n - 1, x)
            p1, d1 = legendre_eval(n, x)
            return p0 + p1, d0 + d1

        interior = np.empty(0)
        if n > 1:
            k = np.arange(1, n)
            guess = -np.cos(2.0 * np.pi * k / (2 * n - 1))
            interior = np.sort(_newton(radau, guess))
        nodes = np.concatenate([[-1.0], interior])
        p, _ = legendre_eval(n - 1, nodes)
        weights = (1.0 - nodes) / (n * n * p**2)
        weights[0] = 2.0 / (n * n)

    else:
        interior = np.empty(0)
        if n > 2:
            deg = n - 1

            def dlegendre(x):
                p, dp = legendre_eval(deg, x)
                return dp, _legendre_second_derivative(deg, x, p, dp)

            k = np.arange(1, n - 1)
            guess = -np.cos(np.pi * k / (n - 1))
            interior = _symmetrize(np.sort(_newton(dlegendre, guess)))
        nodes = np.concatenate([[-1.0], interior, [1.0]])
        p, _ = legendre_eval(n - 1, nodes)
        weights = 2.0 / (n * (n - 1) * p**2)
        weights = 0.5 * (weights + weights[::-1])

    return QuadratureRule(family, n, nodes, weights)


def barycentric_basis(nodes) -> LagrangeBasis:
    nodes = np.array(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    if np.any(np.abs(diff) < DUPLICATE_NODE_TOLERANCE):
        raise DuplicateNodes("interpolation nodes must be distinct")
    return LagrangeBasis(nodes, 1.0 / np.prod(diff, axis=1))


def interpolate(basis: LagrangeBasis, nodal_values, t):
    """Evaluate the Lagrange interpolant of ``nodal_values`` at ``t``.

    ``nodal_values`` may be (N,) or (N, k); the result has shape (len(t),)
    or (len(t), k), or is a scalar/1-row when ``t`` is a scalar.
    """
    values = np.asarray(nodal_values, dtype=float)
    if values.shape[0] != basis.size:
        raise ValueError("need one nodal value per node")
    out = basis.matrix(t) @ values
    return out[0] if np.ndim(t) == 0 else out


def lp_eval(nodes, t):
    """The node polynomial prod_i (t - tau_i)."""
    nodes = np.asarray(nodes, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.prod(t[..., None] - nodes, axis=-1)
