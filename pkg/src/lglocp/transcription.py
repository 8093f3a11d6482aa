"""Optimal-control problem model and its transcription into an equality NLP.

All four schemes share one residual shape per interval::

    rows = S @ X_local + h_k * B @ F(X_colloc, U_colloc)

written as "model minus variable", so that with the Lagrangian
``L = f + <nu, c>`` the dynamics multipliers are the Lambda / R blocks of the
continuous-to-discrete derivation without a sign flip. ``h_k`` is half the
physical interval length, ``T * fraction_k / 2``.

* integral schemes: ``S = [1 | -I]`` and ``B`` is the family's integration
  matrix, so rows read ``X_0 + h A F - X_{1:}``;
* LGL augmented differential: ``S = -[D | D_p]`` acting on the nodal states
  plus the extra coefficient ``X_p``, and ``B = I``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .basis import NodeFamily, barycentric_basis, lp_eval, make_rule
from .matrices import CollocationOperators, IntervalOperators, interval_operators, lgl_operators


class UnsupportedScheme(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class OutOfDomain(ValueError):
    pass


class Scheme(str, enum.Enum):
    LGL_INTEGRAL = "lgl-int"
    LGL_AUGMENTED_DIFFERENTIAL = "lgl-aug"
    LGR_INTEGRAL = "lgr"
    LG_INTEGRAL = "lg"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            pass
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise UnsupportedScheme(f"unknown scheme {value!r}") from None

    @property
    def family(self) -> NodeFamily:
        return {
            "lgl-int": NodeFamily.LGL,
            "lgl-aug": NodeFamily.LGL,
            "lgr": NodeFamily.LGR,
            "lg": NodeFamily.LG,
        }[self.value]

    @property
    def is_lgl(self) -> bool:
        return self.family is NodeFamily.LGL


@dataclass(frozen=True)
class Horizon:
    t0: float = 0.0
    tf: Optional[float] = None
    free: bool = False
    guess: Optional[float] = None
    lower_bound: float = 0.0

    @classmethod
    def fixed(cls, t0, tf):
        return cls(t0=float(t0), tf=float(tf))

    @classmethod
    def free_final(cls, guess, lower_bound=1e-6, t0=0.0):
        return cls(t0=float(t0), free=True, guess=float(guess), lower_bound=float(lower_bound))

    def __post_init__(self):
        if self.free:
            if self.guess is None or self.guess <= 0 or self.lower_bound <= 0:
                raise ValueError("free horizon needs a positive guess and lower bound")
        elif self.tf is None or self.tf <= self.t0:
            raise ValueError("fixed horizon needs tf > t0")

    @property
    def duration_guess(self) -> float:
        return self.guess if self.free else self.tf - self.t0


@dataclass(frozen=True)
class OcpProblem:
    """Continuous problem ``min Phi(x(tf)) + int g dt, x' = f(x, u), x(t0) = x0``.

    Callbacks are vectorized over K nodes: ``X`` is (K, n), ``U`` is (K, m).

    * ``dynamics(X, U) -> (K, n)``, ``dynamics_jac(X, U) -> (K, n, n+m)``
    * ``running_cost(X, U) -> (K,)``, ``running_cost_grad(X, U) -> (K, n+m)``
    * ``terminal_cost(x) -> float``, ``terminal_cost_grad(x) -> (n,)``

    Second derivatives are optional: ``dynamics_hess(X, U, Y)`` returns the
    (K, n+m, n+m) Hessian of ``sum_s Y[:, s] f_s``. Without them the solver
    falls back to a Gauss-Newton model.
    """

    n: int
    m: int
    dynamics: Callable
    dynamics_jac: Callable
    running_cost: Callable
    running_cost_grad: Callable
    terminal_cost: Callable
    terminal_cost_grad: Callable
    initial_state: np.ndarray
    horizon: Horizon
    terminal_constraints: tuple = ()
    dynamics_hess: Optional[Callable] = None
    running_cost_hess: Optional[Callable] = None
    terminal_cost_hess: Optional[Callable] = None
    name: str = "ocp"

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise ValueError("need n >= 1 and m >= 0")
        x0 = np.asarray(self.initial_state, dtype=float).reshape(-1)
        if x0.shape != (self.n,):
            raise DimensionMismatch(f"initial_state must have length {self.n}")
        object.__setattr__(self, "initial_state", x0)
        pairs = tuple((int(i), float(v)) for i, v in self.terminal_constraints)
        if any(not 0 <= i < self.n for i, _ in pairs):
            raise DimensionMismatch("terminal constraint index out of range")
        object.__setattr__(self, "terminal_constraints", pairs)

    @property
    def has_exact_hessian(self) -> bool:
        return None not in (self.dynamics_hess, self.running_cost_hess, self.terminal_cost_hess)


@dataclass(frozen=True)
class Mesh:
    m_intervals: int
    points_per_interval: int
    fractions: Optional[tuple] = None

    def __post_init__(self):
        if self.m_intervals < 1:
            raise ValueError("need at least one interval")
        if self.fractions is None:
            fr = np.full(self.m_intervals, 1.0 / self.m_intervals)
        else:
            fr = np.asarray(self.fractions, dtype=float)
        if fr.shape != (self.m_intervals,) or np.any(fr <= 0):
            raise ValueError("fractions must be M positive numbers")
        if abs(fr.sum() - 1.0) > 1e-12:
            raise ValueError("fractions must sum to 1")
        object.__setattr__(self, "fractions", tuple(fr.tolist()))

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.fractions)[:-1]])


@dataclass(frozen=True)
class DecisionLayout:
    """Where every discrete unknown lives in the flat variable vector.

    ``interval_points[k]`` lists global state-point ids of interval k in
    support order; ``interval_colloc[k]`` lists global collocation ids.
    Interval boundaries are shared points, so LGL keeps M(N-1)+1 of them.
    """

    scheme: Scheme
    mesh: Mesh
    n: int
    m: int
    n_points: int
    n_colloc: int
    interval_points: np.ndarray
    interval_colloc: np.ndarray
    colloc_point: np.ndarray
    state_index: np.ndarray
    xp_index: Optional[np.ndarray]
    control_index: np.ndarray
    time_index: Optional[int]
    n_vars: int
    collocation_count: int
    noncollocation_count: int

    @property
    def total_per_state(self) -> int:
        return self.collocation_count + self.noncollocation_count

    def state_var(self, interval, local_node, component) -> int:
        return int(self.state_index[self.interval_points[interval, local_node], component])

    def control_var(self, interval, local_node, component) -> int:
        return int(self.control_index[self.interval_colloc[interval, local_node], component])


def build_layout(mesh: Mesh, scheme, n: int, m: int, free_time: bool = False) -> DecisionLayout:
    scheme = Scheme.parse(scheme)
    M, N = mesh.m_intervals, mesh.points_per_interval
    k = np.arange(M)[:, None]
    if scheme.is_lgl:
        if N < 2:
            raise ValueError("LGL meshes need N >= 2")
        local = np.arange(N)[None, :]
        points = k * (N - 1) + local
        colloc = points.copy()
        n_points = M * (N - 1) + 1
        n_colloc = n_points
        colloc_point = np.arange(n_colloc)
        n_coll_state = n_points
        n_noncoll = M if scheme is Scheme.LGL_AUGMENTED_DIFFERENTIAL else 0
    elif scheme is Scheme.LGR_INTEGRAL:
        points = k * N + np.arange(N + 1)[None, :]
        colloc = k * N + np.arange(N)[None, :]
        n_points = M * N + 1
        n_colloc = M * N
        colloc_point = np.arange(n_colloc)
        n_coll_state, n_noncoll = M * N, 1
    else:
        points = k * (N + 1) + np.arange(N + 2)[None, :]
        colloc = k * N + np.arange(N)[None, :]
        n_points = M * (N + 1) + 1
        n_colloc = M * N
        colloc_point = (colloc + k + 1).reshape(-1)
        n_coll_state, n_noncoll = M * N, M + 1

    state_index = np.arange(n_points * n).reshape(n_points, n)
    offset = n_points * n
    xp_index = None
    if scheme is Scheme.LGL_AUGMENTED_DIFFERENTIAL:
        xp_index = offset + np.arange(M * n).reshape(M, n)
        offset += M * n
    control_index = offset + np.arange(n_colloc * m).reshape(n_colloc, m)
    offset += n_colloc * m
    time_index = None
    if free_time:
        time_index = offset
        offset += 1
    return DecisionLayout(scheme, mesh, n, m, n_points, n_colloc, points, colloc, colloc_point,
                          state_index, xp_index, control_index, time_index, offset,
                          n_coll_state, n_noncoll)


def _as_triplets(mat):
    coo = sp.coo_matrix(mat)
    keep = coo.data != 0
    return coo.row[keep], coo.col[keep], coo.data[keep]


def augmented_residual(ops: CollocationOperators, X, Xp, F):
    """F - D X - D_p X_p for one interval on [-1, 1] (no time scaling)."""
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    Xp = np.asarray(Xp, dtype=float)
    return F - ops.diff @ X - np.multiply.outer(ops.dp, Xp)


def integral_residual(ops, X, F):
    """X_{2:N} - X_1 - A F; ``ops`` may be LGL operators or an IntervalOperators."""
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    return X[1:] - X[0] - ops.integ @ F


def recover_xp(ops: CollocationOperators, F):
    return ops.ap @ np.asarray(F, dtype=float)


class TranscribedNlp:
    """Equality-constrained NLP from a problem, mesh and scheme.

    Constraint rows are ordered ``[initial (n) | dynamics (interval, row,
    component) | terminal]``. Methods are reentrant: evaluation carries no
    mutable state.
    """

    def __init__(self, problem: OcpProblem, mesh: Mesh, scheme):
        self.problem = problem
        self.mesh = mesh
        self.scheme = Scheme.parse(scheme)
        N = mesh.points_per_interval
        rule = make_rule(self.scheme.family, N)
        self.rule = rule
        self.interval_ops: IntervalOperators = interval_operators(rule)
        self.lgl_ops: Optional[CollocationOperators] = lgl_operators(rule) if self.scheme.is_lgl else None
        self.layout = build_layout(mesh, self.scheme, problem.n, problem.m, problem.horizon.free)
        self._build_templates()

    # -- construction -----------------------------------------------------

    def _build_templates(self):
        lay, n, m = self.layout, self.problem.n, self.problem.m
        M = self.mesh.m_intervals
        half = np.asarray(self.mesh.fractions) / 2.0
        ops = self.interval_ops

        if self.scheme is Scheme.LGL_AUGMENTED_DIFFERENTIAL:
            S_local = -self.lgl_ops.aug_diff
            B_local = np.eye(self.rule.n)
            ext_points = np.column_stack([lay.interval_points, lay.n_points + np.arange(M)])
        else:
            r = len(ops.support) - 1
            S_local = np.column_stack([np.ones(r), -np.eye(r)])
            B_local = ops.integ
            ext_points = lay.interval_points
        self.rows_per_interval = S_local.shape[0]
        R = self.rows_per_interval
        n_ext = lay.n_points + (M if lay.xp_index is not None else 0)

        S_blocks = sp.lil_matrix((M * R, n_ext))
        B_blocks = sp.lil_matrix((M * R, lay.n_colloc))
        for k in range(M):
            rows = slice(k * R, (k + 1) * R)
            for p, col in enumerate(ext_points[k]):
                S_blocks[rows, col] = S_local[:, p][:, None]
            for c, col in enumerate(lay.interval_colloc[k]):
                B_blocks[rows, col] = half[k] * B_local[:, c][:, None]
        self._S = S_blocks.tocsr()
        self._B = B_blocks.tocsr()
        self._B_local = B_local

        # quadrature weight per collocation point (shared LGL nodes accumulate)
        q = np.zeros(lay.n_colloc)
        for k in range(M):
            np.add.at(q, lay.interval_colloc[k], half[k] * ops.weights)
        self._quad = q

        self.n_init = n
        self.n_dyn = M * R * n
        self.n_term = len(self.problem.terminal_constraints)
        self.n_cons = self.n_init + self.n_dyn + self.n_term
        self.n_vars = lay.n_vars

        ext_index = lay.state_index if lay.xp_index is None else np.vstack([lay.state_index, lay.xp_index])
        self._ext_index = ext_index
        zvar = np.hstack([lay.state_index[lay.colloc_point], lay.control_index])
        self._zvar = zvar
        nz = n + m

        s_r, s_c, s_v = _as_triplets(self._S)
        comp = np.arange(n)
        rows_S = (self.n_init + s_r[:, None] * n + comp[None, :]).ravel()
        cols_S = ext_index[s_c][:, comp].ravel()
        vals_S = np.repeat(s_v, n)

        b_r, b_c, b_v = _as_triplets(self._B)
        self._Bt = (b_r, b_c, b_v)
        # (entry, component, z-index) expanded template for the rate part
        rows_F = np.broadcast_to(self.n_init + b_r[:, None, None] * n + comp[None, :, None],
                                 (len(b_r), n, nz)).ravel()
        cols_F = np.broadcast_to(zvar[b_c][:, None, :], (len(b_r), n, nz)).ravel()
        self._F_template = (b_c, b_v)

        init_rows = np.arange(n)
        init_cols = lay.state_index[0]
        last = lay.n_points - 1
        term_idx = np.array([i for i, _ in self.problem.terminal_constraints], dtype=int)
        self._term_idx = term_idx
        self._term_val = np.array([v for _, v in self.problem.terminal_constraints], dtype=float)
        term_rows = self.n_init + self.n_dyn + np.arange(len(term_idx))
        term_cols = lay.state_index[last, term_idx] if len(term_idx) else np.empty(0, int)

        rows = [init_rows, rows_S, rows_F, term_rows]
        cols = [init_cols, cols_S, cols_F, term_cols]
        self._const_vals = (np.full(n, -1.0), vals_S, np.full(len(term_idx), -1.0))
        if lay.time_index is not None:
            dyn_rows = self.n_init + np.arange(self.n_dyn)
            rows.append(dyn_rows)
            cols.append(np.full(self.n_dyn, lay.time_index))
        self.jac_rows = np.concatenate(rows).astype(np.int64)
        self.jac_cols = np.concatenate(cols).astype(np.int64)

        hz_r = np.broadcast_to(zvar[:, :, None], (lay.n_colloc, nz, nz)).ravel()
        hz_c = np.broadcast_to(zvar[:, None, :], (lay.n_colloc, nz, nz)).ravel()
        xf = lay.state_index[last]
        hr = [hz_r, np.repeat(xf, n)]
        hc = [hz_c, np.tile(xf, n)]
        if lay.time_index is not None:
            flat = zvar.ravel()
            hr += [flat, np.full(flat.size, lay.time_index)]
            hc += [np.full(flat.size, lay.time_index), flat]
        self.hess_rows = np.concatenate(hr).astype(np.int64)
        self.hess_cols = np.concatenate(hc).astype(np.int64)

        self.lower = np.full(self.n_vars, -np.inf)
        if lay.time_index is not None:
            self.lower[lay.time_index] = self.problem.horizon.lower_bound

        starts = self.mesh.starts
        fr = np.asarray(self.mesh.fractions)
        sup = self.interval_ops.support
        pfrac = np.empty(lay.n_points)
        for kk in range(M):
            pfrac[lay.interval_points[kk]] = starts[kk] + fr[kk] * (sup + 1.0) / 2.0
        pfrac[-1] = 1.0
        self.point_fraction = pfrac
        self.colloc_fraction = pfrac[lay.colloc_point]

    # -- evaluation -------------------------------------------------------

    def unpack(self, x):
        """Split a variable vector into (X, X_p or None, U, T)."""
        lay = self.layout
        x = np.asarray(x, dtype=float)
        n, m = lay.n, lay.m
        X = x[lay.state_index]
        Xp = x[lay.xp_index] if lay.xp_index is not None else None
        U = x[lay.control_index] if m else np.zeros((lay.n_colloc, 0))
        T = x[lay.time_index] if lay.time_index is not None else self.problem.horizon.duration_guess
        return X, Xp, U, float(T)

    def _ext_states(self, x):
        return np.asarray(x, dtype=float)[self._ext_index]

    def colloc_values(self, x):
        X, _, U, _ = self.unpack(x)
        return X[self.layout.colloc_point], U

    def objective(self, x):
        p = self.problem
        lay = self.layout
        X, _, U, T = self.unpack(x)
        Xc = X[lay.colloc_point]
        g = p.running_cost(Xc, U)
        dg = p.running_cost_grad(Xc, U)
        xf = X[-1]
        value = float(p.terminal_cost(xf)) + T * float(self._quad @ g)
        grad = np.zeros(self.n_vars)
        np.add.at(grad, self._zvar, T * self._quad[:, None] * dg)
        grad[lay.state_index[-1]] += p.terminal_cost_grad(xf)
        if lay.time_index is not None:
            grad[lay.time_index] += float(self._quad @ g)
        return value, grad

    def time_scaled_rates(self, x):
        """Rates at collocation points and the rows-space product B @ F."""
        Xc, U = self.colloc_values(x)
        F = self.problem.dynamics(Xc, U)
        return F, self._B @ F

    def constraints(self, x):
        """Residual vector and Jacobian triplets ``(rows, cols, vals)``."""
        p = self.problem
        lay = self.layout
        X, _, U, T = self.unpack(x)
        Xext = self._ext_states(x)
        Xc = X[lay.colloc_point]
        F = p.dynamics(Xc, U)
        Jf = p.dynamics_jac(Xc, U)
        BF = self._B @ F
        dyn = self._S @ Xext + T * BF
        init = p.initial_state - X[0]
        term = self._term_val - X[-1, self._term_idx]
        c = np.concatenate([init, dyn.ravel(), term])

        b_c, b_v = self._F_template
        vals_F = (T * b_v[:, None, None] * Jf[b_c]).ravel()
        vals = [self._const_vals[0], self._const_vals[1], vals_F, self._const_vals[2]]
        if lay.time_index is not None:
            vals.append(BF.ravel())
        return c, (self.jac_rows, self.jac_cols, np.concatenate(vals))

    def jacobian(self, x):
        _, (r, cc, v) = self.constraints(x)
        return sp.csr_matrix((v, (r, cc)), shape=(self.n_cons, self.n_vars))

    @property
    def has_exact_hessian(self) -> bool:
        return self.problem.has_exact_hessian

    def hessian(self, x, nu, exact=True):
        """Lagrangian Hessian triplets for ``L = f + <nu, c>``.

        With ``exact=False`` (or when the problem lacks second derivatives)
        only the objective curvature is kept.
        """
        p = self.problem
        lay = self.layout
        n, m = lay.n, lay.m
        nz = n + m
        X, _, U, T = self.unpack(x)
        Xc = X[lay.colloc_point]
        exact = exact and p.dynamics_hess is not None
        q = self._quad
        g_hess = (p.running_cost_hess(Xc, U) if p.running_cost_hess is not None
                  else np.zeros((lay.n_colloc, nz, nz)))
        blocks = q[:, None, None] * g_hess
        grad_T = q[:, None] * p.running_cost_grad(Xc, U)
        if exact:
            nu_dyn = np.asarray(nu[self.n_init:self.n_init + self.n_dyn]).reshape(-1, n)
            Y = self._B.T @ nu_dyn
            blocks = blocks + p.dynamics_hess(Xc, U, Y)
            grad_T = grad_T + np.einsum("ks,ksj->kj", Y, p.dynamics_jac(Xc, U))
        blocks = T * blocks
        phi_h = (p.terminal_cost_hess(X[-1]) if p.terminal_cost_hess is not None
                 else np.zeros((n, n)))
        vals = [blocks.ravel(), np.asarray(phi_h, dtype=float).ravel()]
        if lay.time_index is not None:
            vals += [grad_T.ravel(), grad_T.ravel()]
        return self.hess_rows, self.hess_cols, np.concatenate(vals)

    def initial_multipliers(self, x):
        """Multipliers from the state (and X_p, T) stationarity rows alone.

        This is a discrete adjoint solve along the current trajectory; the
        control rows are left out so that a poor control guess does not
        pull the estimate towards zero.
        """
        from .nlp import least_squares_multipliers
        lay = self.layout
        cols = [lay.state_index.ravel()]
        if lay.xp_index is not None:
            cols.append(lay.xp_index.ravel())
        if lay.time_index is not None:
            cols.append([lay.time_index])
        cols = np.concatenate(cols)
        _, grad = self.objective(x)
        jac = self.jacobian(x).tocsc()[:, cols]
        return least_squares_multipliers(grad[cols], jac.tocsr())

    # -- helpers for post-processing ---------------------------------------

    def split_multipliers(self, nu):
        nu = np.asarray(nu, dtype=float)
        lay = self.layout
        mu = nu[: self.n_init]
        dyn = nu[self.n_init:self.n_init + self.n_dyn].reshape(
            self.mesh.m_intervals, self.rows_per_interval, lay.n)
        term = nu[self.n_init + self.n_dyn:]
        return mu, dyn, term

    def interval_half_lengths(self, T):
        return T * np.asarray(self.mesh.fractions) / 2.0

    def point_times(self, T):
        return self.problem.horizon.t0 + T * self.point_fraction

    def colloc_times(self, T):
        return self.problem.horizon.t0 + T * self.colloc_fraction


def assemble_nlp(problem: OcpProblem, mesh: Mesh, scheme) -> TranscribedNlp:
    return TranscribedNlp(problem, mesh, scheme)


def initial_guess(problem: OcpProblem, mesh: Mesh, layout_or_nlp) -> np.ndarray:
    """States ramp linearly from x0 to any terminal targets, controls zero."""
    nlp = layout_or_nlp if isinstance(layout_or_nlp, TranscribedNlp) else TranscribedNlp(
        problem, mesh, layout_or_nlp.scheme)
    lay = nlp.layout
    x = np.zeros(lay.n_vars)
    target = problem.initial_state.copy()
    for i, v in problem.terminal_constraints:
        target[i] = v
    s = nlp.point_fraction[:, None]
    x[lay.state_index] = problem.initial_state + s * (target - problem.initial_state)
    if lay.time_index is not None:
        x[lay.time_index] = problem.horizon.guess
    return x


def interpolate_solution(artifacts, times):
    """States and controls of a solved transcription at physical ``times``.

    LGL states use the degree-N augmented interpolant (``X_p`` explicit or
    recovered from the rates); LG/LGR states use the Lagrange polynomial
    through their support points. Controls use the collocation-point
    interpolant on each interval.
    """
    nlp: TranscribedNlp = artifacts.nlp
    lay = nlp.layout
    X, Xp, U, T = nlp.unpack(artifacts.variables)
    t0 = nlp.problem.horizon.t0
    times = np.atleast_1d(np.asarray(times, dtype=float))
    frac = (times - t0) / T
    span = 1e-12
    if np.any(frac < -span) or np.any(frac > 1 + span):
        raise OutOfDomain("query time outside the solved horizon")
    starts = nlp.mesh.starts
    fr = np.asarray(nlp.mesh.fractions)
    k_of = np.clip(np.searchsorted(starts, frac, side="right") - 1, 0, lay.mesh.m_intervals - 1)
    tau = np.clip(2.0 * (frac - starts[k_of]) / fr[k_of] - 1.0, -1.0, 1.0)

    ops = nlp.interval_ops
    family = nlp.scheme.family
    if family is NodeFamily.LG:
        state_support = np.arange(len(ops.support) - 1)
    else:
        state_support = np.arange(len(ops.support))
    state_basis = barycentric_basis(ops.support[state_support])
    ctrl_basis = barycentric_basis(ops.support[ops.colloc])
    if nlp.scheme.is_lgl and Xp is None:
        F, _ = nlp.time_scaled_rates(artifacts.variables)
        h = nlp.interval_half_lengths(T)
        Xp = np.stack([h[k] * recover_xp(nlp.lgl_ops, F[lay.interval_colloc[k]])
                       for k in range(lay.mesh.m_intervals)])

    xs = np.empty((len(times), lay.n))
    us = np.empty((len(times), lay.m))
    for k in np.unique(k_of):
        sel = k_of == k
        pts = lay.interval_points[k][state_support]
        xs[sel] = state_basis.matrix(tau[sel]) @ X[pts]
        if nlp.scheme.is_lgl:
            xs[sel] += np.multiply.outer(lp_eval(ops.support, tau[sel]), Xp[k])
        us[sel] = ctrl_basis.matrix(tau[sel]) @ U[lay.interval_colloc[k]]
    return xs, us
