"""Damped Newton method on the KKT system of an equality-constrained NLP.

Multiplier convention: the Lagrangian is ``L = f(x) + <nu, c(x)>`` with
``c`` exactly as the problem assembles it. For transcriptions, ``c`` is
written "model minus variable", so the returned ``nu`` blocks are the
discrete multipliers (Lambda, R, mu) of the adjoint derivation directly.

An NLP is any object exposing ``n_vars``, ``n_cons``, ``objective(x) ->
(f, grad)`` and ``constraints(x) -> (c, (rows, cols, vals))``; optional
``hessian(x, nu, exact) -> (rows, cols, vals)`` and ``lower`` bounds (kept
feasible by the line search, never active in the KKT system).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

ROUNDOFF_SLACK = 1e-14
_ARMIJO = 1e-4
_MIN_STEP = 1e-12
_CURVATURE = 1e-12
_INERTIA_DELTA = 1e-9
_MAX_SOC = 4


class SolverError(RuntimeError):
    def __init__(self, message, x=None, nu=None, report=None):
        super().__init__(message)
        self.x = x
        self.nu = nu
        self.report = report


class SingularKkt(SolverError):
    pass


class NanDetected(SolverError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    kkt_tolerance: float = 1e-10
    max_iterations: int = 200
    regularization_floor: float = 1e-10
    line_search_shrink: float = 0.5
    merit_penalty_growth: float = 10.0
    hessian: str = "auto"
    max_regularization: float = 1e10

    def __post_init__(self):
        if min(self.kkt_tolerance, self.max_iterations, self.regularization_floor) <= 0:
            raise ValueError("tolerance, iteration limit and regularization floor must be positive")
        if not 0 < self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if self.merit_penalty_growth <= 1:
            raise ValueError("merit_penalty_growth must exceed 1")
        if self.hessian not in ("auto", "exact", "gauss-newton"):
            raise ValueError("hessian must be 'auto', 'exact' or 'gauss-newton'")


@dataclass
class IterationRecord:
    iteration: int
    kkt_residual: float
    constraint_violation: float
    objective: float
    penalty: float
    merit_before: float
    merit_after: float
    step_length: float
    regularization: float
    second_order_correction: bool


@dataclass
class SolverReport:
    converged: bool
    status: str
    iterations: int
    kkt_residual: float
    constraint_violation: float
    objective: float
    regularization_events: int
    trace: list = field(default_factory=list)


@dataclass
class EqualityNlp:
    """Plain-callable NLP, handy for small problems and tests."""

    n_vars: int
    n_cons: int
    objective_fn: Callable
    constraints_fn: Callable
    hessian_fn: Optional[Callable] = None
    lower: Optional[np.ndarray] = None

    def objective(self, x):
        return self.objective_fn(x)

    def constraints(self, x):
        c, jac = self.constraints_fn(x)
        jac = np.atleast_2d(np.asarray(jac, dtype=float))
        r, cc = np.nonzero(np.ones_like(jac))
        return np.atleast_1d(np.asarray(c, dtype=float)), (r, cc, jac[r, cc])

    def hessian(self, x, nu, exact=True):
        if self.hessian_fn is None:
            return None
        h = np.atleast_2d(np.asarray(self.hessian_fn(x, nu), dtype=float))
        r, cc = np.nonzero(np.ones_like(h))
        return r, cc, h[r, cc]


def _sparse(triplets, shape):
    r, c, v = triplets
    return sp.csr_matrix((v, (r, c)), shape=shape)


class _Evaluation:
    __slots__ = ("x", "f", "grad", "c", "jac")

    def __init__(self, nlp, x):
        self.x = x
        self.f, self.grad = nlp.objective(x)
        self.c, trip = nlp.constraints(x)
        self.jac = _sparse(trip, (len(self.c), len(x)))

    def finite(self):
        return (np.isfinite(self.f) and np.all(np.isfinite(self.grad))
                and np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.jac.data)))


def _use_exact(nlp, options):
    if options.hessian == "gauss-newton":
        return False
    has = getattr(nlp, "has_exact_hessian", True)
    if options.hessian == "exact" and not has:
        raise ValueError("exact Hessian requested but the problem provides none")
    return bool(has)


def _lagrangian_hessian(nlp, x, nu, exact):
    n = len(x)
    fn = getattr(nlp, "hessian", None)
    trip = fn(x, nu, exact) if fn is not None else None
    if trip is None:
        return sp.csr_matrix((n, n))
    return _sparse(trip, (n, n))


class _Factorized:
    """LU of the KKT matrix with symmetric diagonal pivoting.

    The factored matrix carries a tiny negative dual block (``-inertia_delta
    I``) so that diagonal pivots exist; by Sylvester's law the pivot signs
    then give its inertia, which equals the inertia test for ``K`` itself.
    Solves are refined against the unperturbed ``K``.
    """

    def __init__(self, K, n, inertia_delta):
        self.K = K
        self.n = n
        m = K.shape[0] - n
        shift = sp.diags(np.r_[np.zeros(n), np.full(m, inertia_delta)], format="csc")
        self.lu = spla.splu((K - shift).tocsc(), permc_spec="MMD_AT_PLUS_A",
                            diag_pivot_thresh=0.0, options={"SymmetricMode": True})

    def inertia(self):
        """(positive, negative, zero) pivot counts, or None if pivoting was not symmetric."""
        if not np.array_equal(self.lu.perm_r, self.lu.perm_c):
            return None
        d = self.lu.U.diagonal()
        return int((d > 0).sum()), int((d < 0).sum()), int((d == 0).sum())

    def solve(self, rhs, refine=3):
        sol = self.lu.solve(rhs)
        resid = rhs - self.K @ sol
        for _ in range(refine):
            trial = sol + self.lu.solve(resid)
            trial_resid = rhs - self.K @ trial
            if np.linalg.norm(trial_resid, np.inf) >= np.linalg.norm(resid, np.inf):
                break
            sol, resid = trial, trial_resid
        return sol


def _factor_and_solve(H, J, grad, c, sigma, delta):
    n, m = H.shape[0], J.shape[0]
    K = sp.bmat([[H + sigma * sp.identity(n), J.T],
                 [J, -delta * sp.identity(m) if m else None]], format="csc")
    try:
        fac = _Factorized(K, n, max(_INERTIA_DELTA, delta) if m else 0.0)
    except RuntimeError:
        return None
    rhs = -np.concatenate([grad, c])
    sol = fac.solve(rhs)
    if not np.all(np.isfinite(sol)):
        return None
    resid = K @ sol - rhs
    if np.linalg.norm(resid, np.inf) > 1e-8 * max(1.0, np.linalg.norm(rhs, np.inf)):
        return None
    return sol[:n], sol[n:], fac


def _regularized_solve(H, J, grad, c, floor, ceiling):
    """Factor the KKT matrix, raising sigma x10 from the floor until its inertia is (n, m, 0).

    When the pivoting is not symmetric the inertia is unknown and the step's
    curvature along the null space of J is tested instead.
    Returns ``(dx, nu_new, sigma, events, factorization)``.
    """
    n, m = H.shape[0], J.shape[0]
    sigma, delta, events = floor, 0.0, 0
    while True:
        out = _factor_and_solve(H, J, grad, c, sigma, delta)
        if out is not None:
            dx, nu_new, fac = out
            inertia = fac.inertia()
            if inertia is not None:
                if inertia == (n, m, 0):
                    return dx, nu_new, sigma, events, fac
            elif _tangential_curvature_ok(H, J, dx, sigma):
                return dx, nu_new, sigma, events, fac
        else:
            delta = max(delta * 10.0, floor)
        events += 1
        sigma *= 10.0
        if sigma > ceiling:
            raise SingularKkt("KKT matrix stays singular or indefinite after regularization")


def _tangential_curvature_ok(H, J, dx, sigma):
    t = dx
    if J.shape[0]:
        G = (J @ J.T).tocsc()
        scale = max(abs(G).max(), 1.0)
        lu = spla.splu(G + 1e-13 * scale * sp.identity(J.shape[0], format="csc"))
        t = dx - J.T @ lu.solve(J @ dx)
    tt = t @ t
    return t @ (H @ t) + sigma * tt >= _CURVATURE * tt or tt <= 1e-24 * max(dx @ dx, 1e-300)


def kkt_step(nlp, x, nu, regularization=1e-10, hessian="auto"):
    """One regularized Newton step ``(dx, dnu)`` on the KKT system at ``(x, nu)``."""
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    options = SolverOptions(regularization_floor=regularization, hessian=hessian)
    ev = _Evaluation(nlp, x)
    H = _lagrangian_hessian(nlp, x, nu, _use_exact(nlp, options))
    dx, nu_new, *_ = _regularized_solve(H, ev.jac, ev.grad, ev.c, regularization,
                                        options.max_regularization)
    return dx, nu_new - nu


def least_squares_multipliers(grad, jac, floor=1e-10):
    """Multipliers minimising ``|grad + J^T nu|``."""
    n, m = jac.shape[1], jac.shape[0]
    if m == 0:
        return np.zeros(0)
    delta = 0.0
    while delta <= 1.0:
        out = _factor_and_solve(sp.identity(n, format="csr"), jac, grad, np.zeros(m), 0.0, delta)
        if out is not None:
            return out[1]
        delta = floor if delta == 0 else delta * 100
    return np.zeros(m)


def _second_order_correction(nlp, fac, trial, lower, rho, target, max_corrections=_MAX_SOC):
    """Pull a rejected trial point back towards c = 0 with the current factorization.

    Each correction is the minimum-norm (in the KKT metric) step cancelling
    the trial point's constraint values. Returns ``(evaluation, merit)`` for
    the first corrected point meeting ``target``, or None.
    """
    n = len(trial.x)
    cur = trial
    for _ in range(max_corrections):
        xs = cur.x + fac.solve(np.concatenate([np.zeros(n), -cur.c]))[:n]
        if lower is not None and np.any(xs < lower):
            return None
        nxt = _Evaluation(nlp, xs)
        if not nxt.finite():
            return None
        phi = _merit(nxt.f, nxt.c, rho)
        if phi <= target:
            return nxt, phi
        if np.abs(nxt.c).sum() >= 0.5 * np.abs(cur.c).sum():
            return None
        cur = nxt
    return None


def _kkt_residuals(ev, nu):
    stat = ev.grad + ev.jac.T @ nu if len(nu) else ev.grad
    feas = np.linalg.norm(ev.c, np.inf) if len(ev.c) else 0.0
    return max(np.linalg.norm(stat, np.inf), feas), feas


def _merit(f, c, rho):
    return f + rho * np.abs(c).sum()


def solve_equality_nlp(nlp, x0, options: SolverOptions | None = None, nu0=None):
    """Solve ``min f(x) s.t. c(x) = 0`` by globalized Newton-KKT iterations.

    ``nu0`` overrides the least-squares initial multipliers.
    Returns ``(x, nu, report)``. Hitting ``max_iterations`` or a stalled line
    search returns the best iterate with ``report.converged = False``;
    non-finite callback values at an accepted point raise ``NanDetected`` and
    an irreparably singular KKT matrix raises ``SingularKkt``.
    """
    options = options or SolverOptions()
    exact = _use_exact(nlp, options)
    lower = getattr(nlp, "lower", None)
    x = np.array(x0, dtype=float)
    if x.shape != (nlp.n_vars,):
        raise ValueError(f"x0 must have shape ({nlp.n_vars},)")
    if lower is not None:
        x = np.maximum(x, lower)

    ev = _Evaluation(nlp, x)
    if not ev.finite():
        raise NanDetected("non-finite objective or constraints at the start point", x)
    if nu0 is None:
        nu = least_squares_multipliers(ev.grad, ev.jac, options.regularization_floor)
    else:
        nu = np.array(nu0, dtype=float)
        if nu.shape != (nlp.n_cons,):
            raise ValueError(f"nu0 must have shape ({nlp.n_cons},)")
    rho = 1.0
    trace = []
    events = 0
    status = "max_iterations"
    best = None

    for it in range(options.max_iterations + 1):
        kkt, feas = _kkt_residuals(ev, nu)
        if best is None or kkt < best[0]:
            best = (kkt, feas, ev, nu.copy())
        if kkt <= options.kkt_tolerance:
            status = "converged"
            break
        if it == options.max_iterations:
            break

        H = _lagrangian_hessian(nlp, ev.x, nu, exact)
        if not np.all(np.isfinite(H.data)):
            raise NanDetected("non-finite Lagrangian Hessian", ev.x, nu)
        try:
            dx, nu_new, sigma, ev_count, fac = _regularized_solve(
                H, ev.jac, ev.grad, ev.c, options.regularization_floor, options.max_regularization)
        except SingularKkt as err:
            err.x, err.nu = ev.x, nu
            raise
        events += ev_count

        nu_norm = np.linalg.norm(nu_new, np.inf) if len(nu_new) else 0.0
        c1 = np.abs(ev.c).sum()
        while True:
            slope = ev.grad @ dx - rho * c1
            if rho >= 1.1 * nu_norm and (slope < 0 or c1 == 0):
                break
            if rho > 1e20:
                break
            rho *= options.merit_penalty_growth
        phi0 = _merit(ev.f, ev.c, rho)
        slack = ROUNDOFF_SLACK * (1.0 + abs(phi0))

        alpha = 1.0
        if lower is not None:
            neg = dx < 0
            if np.any(neg):
                room = (ev.x[neg] - lower[neg]) / -dx[neg]
                alpha = min(1.0, 0.995 * room.min()) if room.min() < 1.0 else 1.0

        accepted = None
        soc_used = False
        while alpha >= _MIN_STEP:
            trial = _Evaluation(nlp, ev.x + alpha * dx)
            if trial.finite():
                phi = _merit(trial.f, trial.c, rho)
                if phi <= phi0 + _ARMIJO * alpha * slope + slack:
                    accepted = trial
                    break
                if len(ev.c):
                    # second-order corrections against the Maratos effect
                    soc = _second_order_correction(nlp, fac, trial, lower, rho,
                                                   phi0 + _ARMIJO * alpha * slope + slack)
                    if soc is not None:
                        accepted, phi, soc_used = soc[0], soc[1], True
                        break
            alpha *= options.line_search_shrink

        if accepted is None:
            status = "line_search_failed"
            log.debug("line search failed at iteration %d (kkt %.3e)", it, kkt)
            break
        trace.append(IterationRecord(it, kkt, feas, ev.f, rho, phi0, phi, alpha, sigma, soc_used))
        nu = nu + alpha * (nu_new - nu)
        ev = accepted
        log.debug("it %3d kkt %.3e feas %.3e f %.12e alpha %.3g", it, kkt, feas, ev.f, alpha)

    kkt, feas, ev_best, nu_best = best
    if status != "converged":
        ev, nu = ev_best, nu_best
    report = SolverReport(status == "converged", status, len(trace), kkt, feas, float(ev.f),
                          events, trace)
    return ev.x.copy(), nu.copy(), report


def derivative_check(nlp, x, nu=None):
    """Relative errors of supplied derivatives against central differences.

    Step ``h_i = 1e-6 (1 + |x_i|)``. Returns a dict with the maximum relative
    error of the objective gradient, the constraint Jacobian and, when the
    NLP has one, the Lagrangian Hessian (at multipliers ``nu``, default ones).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    f, grad = nlp.objective(x)
    c, trip = nlp.constraints(x)
    jac = _sparse(trip, (len(c), n)).toarray()
    nu = np.ones(len(c)) if nu is None else np.asarray(nu, dtype=float)
    fd_grad = np.empty(n)
    fd_jac = np.empty((len(c), n))
    lag_grad = lambda z: nlp.objective(z)[1] + _sparse(nlp.constraints(z)[1], (len(c), n)).T @ nu
    has_h = getattr(nlp, "hessian", None) is not None and nlp.hessian(x, nu) is not None
    fd_hess = np.empty((n, n)) if has_h else None
    for i in range(n):
        h = 1e-6 * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd_grad[i] = (nlp.objective(xp)[0] - nlp.objective(xm)[0]) / (2 * h)
        fd_jac[:, i] = (nlp.constraints(xp)[0] - nlp.constraints(xm)[0]) / (2 * h)
        if has_h:
            fd_hess[:, i] = (lag_grad(xp) - lag_grad(xm)) / (2 * h)

    def rel(a, b):
        if a.size == 0:
            return 0.0
        return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))

    out = {"objective_gradient": rel(grad, fd_grad), "constraint_jacobian": rel(jac, fd_jac)}
    if has_h:
        hess = _sparse(nlp.hessian(x, nu), (n, n)).toarray()
        out["lagrangian_hessian"] = rel(hess, fd_hess)
    return out
