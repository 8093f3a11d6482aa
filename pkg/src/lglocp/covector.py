"""Costate recovery from NLP multipliers and the diagnostics built on it.

Mappings, per interval:

* LGL augmented differential: ``lambda_i = Lambda_i / w_i``;
* LGL integral: ``r_i = R_i / w_i`` then ``lambda = A_dag r`` with
  ``A_dag = W^{-1} A^T W_{2:N}``;
* LGR / LG integral: ``lambda = W^{-1} B^T R`` with ``B`` the family's
  integration matrix, which reduces to the LGL formula when ``B = A``.

The time scaling ``h_k`` cancels in every mapping, so costates come out in
physical time and pair with physical rates in the Hamiltonian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import QuadratureRule, barycentric_basis
from .matrices import CollocationOperators, IntervalOperators, degree_condition_residual
from .transcription import DimensionMismatch, Scheme, TranscribedNlp, recover_xp


@dataclass(frozen=True)
class CostateEstimate:
    """Nodal costates at each interval's collocation points.

    ``nodal`` is (M, N, n) and ``times`` (M, N). The defects compare the
    first/last interval's costate polynomial at the horizon ends with the
    initial multiplier and the terminal gradient; they are finite-N jumps
    of the discontinuous collocation and are reported, not enforced.
    """

    nodal: np.ndarray
    times: np.ndarray
    initial_multiplier: np.ndarray
    terminal_gradient: np.ndarray
    initial_defect: np.ndarray
    terminal_defect: np.ndarray


@dataclass(frozen=True)
class HamiltonianProfile:
    times: np.ndarray
    values: np.ndarray
    mean: float
    mean_abs: float
    amplitude: float


def costate_differential(multipliers, rule: QuadratureRule):
    """Lambda / w, broadcasting over leading interval axes of (..., N, n)."""
    lam = np.asarray(multipliers, dtype=float)
    return lam / np.asarray(rule.weights)[:, None]


def costate_integral(multipliers, ops: CollocationOperators, rule: QuadratureRule | None = None):
    """A_dag (R / w_{2:N}) for one or several intervals of (..., N-1, n) multipliers."""
    rule = rule or ops.rule
    R = np.asarray(multipliers, dtype=float)
    r = R / np.asarray(rule.weights)[1:, None]
    return np.einsum("ij,...jk->...ik", ops.adjoint_integ, r)


def costate_from_integration(multipliers, ops: IntervalOperators):
    """W^{-1} B^T R for any family's integral form."""
    R = np.asarray(multipliers, dtype=float)
    return np.einsum("ji,...jk->...ik", ops.integ, R) / ops.weights[:, None]


def _terminal_gradient(nlp: TranscribedNlp, X, term_mult):
    grad = np.array(nlp.problem.terminal_cost_grad(X[-1]), dtype=float)
    for (idx, _), nu in zip(nlp.problem.terminal_constraints, term_mult):
        grad[idx] -= nu
    return grad


def map_costates(nlp: TranscribedNlp, variables, multipliers) -> CostateEstimate:
    mu, dyn, term = nlp.split_multipliers(multipliers)
    X, _, _, T = nlp.unpack(variables)
    if nlp.scheme is Scheme.LGL_AUGMENTED_DIFFERENTIAL:
        lam = costate_differential(dyn, nlp.rule)
    elif nlp.scheme is Scheme.LGL_INTEGRAL:
        lam = costate_integral(dyn, nlp.lgl_ops)
    else:
        lam = costate_from_integration(dyn, nlp.interval_ops)
    lay = nlp.layout
    times = nlp.colloc_times(T)[lay.interval_colloc]
    psi = _terminal_gradient(nlp, X, term)
    nodes = nlp.interval_ops.support[nlp.interval_ops.colloc]
    basis = barycentric_basis(nodes)
    lam_start = basis.matrix(-1.0)[0] @ lam[0]
    lam_end = basis.matrix(1.0)[0] @ lam[-1]
    return CostateEstimate(lam, times, mu.copy(), psi, lam_start - mu, lam_end - psi)


def _node_data(nlp: TranscribedNlp, variables, costates: CostateEstimate):
    """States, controls and costates stacked per (interval, collocation point)."""
    lay = nlp.layout
    X, _, U, T = nlp.unpack(variables)
    Xc = X[lay.colloc_point][lay.interval_colloc]
    Uc = U[lay.interval_colloc]
    return Xc, Uc, costates.nodal, T


def _hamiltonian_parts(problem, Xc, Uc, lam):
    M, N, n = Xc.shape
    Xf, Uf, Lf = Xc.reshape(-1, n), Uc.reshape(M * N, -1), lam.reshape(-1, n)
    g = problem.running_cost(Xf, Uf)
    f = problem.dynamics(Xf, Uf)
    dg = problem.running_cost_grad(Xf, Uf)
    jf = problem.dynamics_jac(Xf, Uf)
    grad_H = dg + np.einsum("ks,ksj->kj", Lf, jf)
    H = g + np.einsum("ks,ks->k", Lf, f)
    return H.reshape(M, N), grad_H.reshape(M, N, -1)


def hamiltonian_profile(problem, artifacts, costates: CostateEstimate,
                        window_fraction: float = 0.25) -> HamiltonianProfile:
    """H = g + <lambda, f> at every interval's collocation points, in time order.

    ``amplitude`` is max - min of H over the trailing ``window_fraction`` of
    the horizon.
    """
    nlp = artifacts.nlp
    Xc, Uc, lam, T = _node_data(nlp, artifacts.variables, costates)
    H, _ = _hamiltonian_parts(problem, Xc, Uc, lam)
    times = costates.times.ravel()
    order = np.argsort(times, kind="stable")
    times, values = times[order], H.ravel()[order]
    t0 = times[0]
    cut = t0 + (1.0 - window_fraction) * (times[-1] - t0)
    tail = values[times >= cut]
    return HamiltonianProfile(times, values, float(values.mean()), float(np.abs(values).mean()),
                              float(tail.max() - tail.min()))


def stationarity_residual(problem, artifacts, costates: CostateEstimate):
    """max_j |dH/du_j| at each (interval, collocation point)."""
    nlp = artifacts.nlp
    Xc, Uc, lam, _ = _node_data(nlp, artifacts.variables, costates)
    _, grad_H = _hamiltonian_parts(problem, Xc, Uc, lam)
    du = grad_H[..., problem.n:]
    if du.shape[-1] == 0:
        return np.zeros(du.shape[:2])
    return np.abs(du).max(axis=-1)


def error_norms(artifacts, reference, costates: CostateEstimate | None = None):
    """Max-abs errors of state, control and costate at the discrete points.

    States are compared at every state point, controls and costates at the
    collocation points. ``reference`` exposes ``state(t)``, ``control(t)``
    and ``costate(t)`` returning (K, dim) arrays.
    """
    nlp: TranscribedNlp = artifacts.nlp
    lay = nlp.layout
    X, _, U, T = nlp.unpack(artifacts.variables)
    costates = costates or artifacts.costates
    t_pts = nlp.point_times(T)
    t_col = nlp.colloc_times(T)
    ref_x = np.asarray(reference.state(t_pts))
    ref_u = np.asarray(reference.control(t_col))
    ref_l = np.asarray(reference.costate(costates.times.ravel()))
    if ref_x.shape != X.shape or ref_u.shape != U.shape or ref_l.shape[-1] != lay.n:
        raise DimensionMismatch("reference does not match the discrete solution's dimensions")
    return {
        "state": float(np.abs(X - ref_x).max()),
        "control": float(np.abs(U - ref_u).max()) if U.size else 0.0,
        "costate": float(np.abs(costates.nodal.reshape(-1, lay.n) - ref_l).max()),
    }


def xp_values(artifacts):
    """Per-interval coefficient of the node polynomial, explicit or recovered."""
    nlp: TranscribedNlp = artifacts.nlp
    if not nlp.scheme.is_lgl:
        raise ValueError("X_p exists for LGL schemes only")
    X, Xp, _, T = nlp.unpack(artifacts.variables)
    if Xp is not None:
        return Xp
    F, _ = nlp.time_scaled_rates(artifacts.variables)
    h = nlp.interval_half_lengths(T)
    lay = nlp.layout
    return np.stack([h[k] * recover_xp(nlp.lgl_ops, F[lay.interval_colloc[k]])
                     for k in range(lay.mesh.m_intervals)])


def adjoint_residuals(artifacts, costates: CostateEstimate | None = None):
    """Residuals of the KKT rows rewritten in costate form (LGL schemes).

    State rows are the stationarity conditions in X divided by the node
    weights, i.e. ``D_dag lambda + h grad_x H - jumps`` (differential) or
    ``h grad_x H - E r - jumps`` (integral); rows at shared interval
    boundaries are combined across the two intervals. Control rows are
    ``grad_u H``. ``degree`` is the raw ``D_p^T W lambda`` per interval.
    """
    nlp: TranscribedNlp = artifacts.nlp
    if not nlp.scheme.is_lgl:
        raise ValueError("adjoint correspondence is defined for LGL schemes")
    costates = costates or artifacts.costates
    problem = nlp.problem
    ops = nlp.lgl_ops
    w = np.asarray(nlp.rule.weights)
    n = problem.n
    Xc, Uc, lam, T = _node_data(nlp, artifacts.variables, costates)
    _, grad_H = _hamiltonian_parts(problem, Xc, Uc, lam)
    gx, gu = grad_H[..., :n], grad_H[..., n:]
    h = nlp.interval_half_lengths(T)
    M = len(h)

    if nlp.scheme is Scheme.LGL_AUGMENTED_DIFFERENTIAL:
        rho = np.einsum("ij,kjs->kis", ops.dual_diff, lam) + h[:, None, None] * gx
        rho[:, 0] += lam[:, 0] / w[0]
        rho[:, -1] -= lam[:, -1] / w[-1]
    else:
        _, dyn, _ = nlp.split_multipliers(artifacts.multipliers)
        r = dyn / w[1:, None]
        Er = np.concatenate([-(np.einsum("j,kjs->ks", w[1:], r) / w[0])[:, None], r], axis=1)
        rho = h[:, None, None] * gx - Er

    state_rows = [rho[:, 1:-1].reshape(-1, n),
                  (rho[0, 0] - costates.initial_multiplier / w[0])[None],
                  (rho[-1, -1] + costates.terminal_gradient / w[-1])[None]]
    control_rows = [gu[:, 1:-1].reshape(-1, gu.shape[-1])]
    if M == 1:
        control_rows += [gu[0, :1], gu[0, -1:]]
    else:
        control_rows += [gu[0, :1], gu[-1, -1:]]
    for k in range(M - 1):
        state_rows.append(((w[-1] * rho[k, -1] + w[0] * rho[k + 1, 0]) / w[0])[None])
        a, b = h[k] * w[-1], h[k + 1] * w[0]
        control_rows.append(((a * gu[k, -1] + b * gu[k + 1, 0]) / (a + b))[None])
    state_rows = np.concatenate(state_rows)
    control_rows = np.concatenate(control_rows)
    degree = np.array([degree_condition_residual(ops, lam[k], normalize=False) for k in range(M)])
    return {
        "state_rows": float(np.abs(state_rows).max()),
        "control_rows": float(np.abs(control_rows).max()) if control_rows.size else 0.0,
        "degree": float(np.abs(degree).max()),
    }
