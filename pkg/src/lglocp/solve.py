"""Transcribe, solve and post-process one optimal control problem."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import barycentric_basis
from .covector import (CostateEstimate, HamiltonianProfile, hamiltonian_profile,
                       map_costates)
from .nlp import SolverError, SolverOptions, SolverReport, solve_equality_nlp
from .transcription import (Mesh, OcpProblem, Scheme, TranscribedNlp, initial_guess,
                            interpolate_solution)


@dataclass
class SolveArtifacts:
    problem: OcpProblem
    mesh: Mesh
    scheme: Scheme
    nlp: TranscribedNlp
    variables: np.ndarray
    multipliers: np.ndarray
    report: SolverReport
    costates: CostateEstimate
    hamiltonian: HamiltonianProfile
    wall_seconds: float

    @property
    def converged(self) -> bool:
        return self.report.converged

    @property
    def objective(self) -> float:
        return self.report.objective

    @property
    def final_time(self) -> float:
        return self.nlp.unpack(self.variables)[3]

    def states(self):
        return self.nlp.unpack(self.variables)[0]

    def controls(self):
        return self.nlp.unpack(self.variables)[2]


def solve_ocp(problem: OcpProblem, mesh: Mesh, scheme, options: Optional[SolverOptions] = None,
              x0=None) -> SolveArtifacts:
    options = options or SolverOptions()
    start = time.perf_counter()
    nlp = TranscribedNlp(problem, mesh, scheme)
    x0 = initial_guess(problem, mesh, nlp) if x0 is None else np.asarray(x0, dtype=float)
    x, nu, report = solve_equality_nlp(nlp, x0, options, nu0=nlp.initial_multipliers(x0))
    costates = map_costates(nlp, x, nu)
    art = SolveArtifacts(problem, mesh, nlp.scheme, nlp, x, nu, report, costates, None, 0.0)
    art.hamiltonian = hamiltonian_profile(problem, art, costates)
    art.wall_seconds = time.perf_counter() - start
    return art


def warm_start(artifacts: SolveArtifacts, nlp: TranscribedNlp) -> np.ndarray:
    """Variables for ``nlp`` interpolated from another converged transcription."""
    x = initial_guess(nlp.problem, nlp.mesh, nlp)
    lay = nlp.layout
    T = artifacts.final_time
    states, _ = interpolate_solution(artifacts, nlp.point_times(T))
    _, controls = interpolate_solution(artifacts, nlp.colloc_times(T))
    x[lay.state_index] = states
    x[lay.control_index] = controls
    if lay.xp_index is not None:
        x[lay.xp_index] = 0.0
    if lay.time_index is not None:
        x[lay.time_index] = T
    return x


def solve_sequence(problem: OcpProblem, m: int, n_values, scheme,
                   options: Optional[SolverOptions] = None):
    """Solve for every N in ``n_values``, finest first, each warm-started from the last success.

    Coarse transcriptions can have no local minimizer near the continuous
    solution (only a saddle of the discrete problem), which a descent method
    reaches from a nearby start but not from a crude guess. Returns a dict
    ``N -> SolveArtifacts or SolverError``.
    """
    out = {}
    previous = None
    for n in sorted(set(int(v) for v in n_values), reverse=True):
        mesh = Mesh(m, n)
        x0 = None
        if previous is not None:
            x0 = warm_start(previous, TranscribedNlp(problem, mesh, scheme))
        try:
            art = solve_ocp(problem, mesh, scheme, options, x0=x0)
        except SolverError as err:
            out[n] = err
            continue
        out[n] = art
        if art.converged:
            previous = art
    return out


class SolutionReference:
    """Reference trajectory from a finer converged solve.

    States and controls are interpolated from the fine transcription;
    costates use the fine solve's costate polynomial on each interval.
    Free-final-time solves end at slightly different T; queries beyond the
    reference horizon are clamped to its end.
    """

    def __init__(self, artifacts: SolveArtifacts):
        if not artifacts.converged:
            raise ValueError("reference solve did not converge")
        self.artifacts = artifacts
        self.objective = artifacts.objective
        self.final_time = artifacts.final_time

    def _clip(self, t):
        t0 = self.artifacts.problem.horizon.t0
        return np.clip(np.atleast_1d(np.asarray(t, dtype=float)), t0, t0 + self.final_time)

    def state(self, t):
        return interpolate_solution(self.artifacts, self._clip(t))[0]

    def control(self, t):
        return interpolate_solution(self.artifacts, self._clip(t))[1]

    def costate(self, t):
        nlp = self.artifacts.nlp
        cs = self.artifacts.costates
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t0 = nlp.problem.horizon.t0
        frac = np.clip((t - t0) / self.final_time, 0.0, 1.0)
        starts = nlp.mesh.starts
        fr = np.asarray(nlp.mesh.fractions)
        M = nlp.mesh.m_intervals
        k_of = np.clip(np.searchsorted(starts, frac, side="right") - 1, 0, M - 1)
        tau = np.clip(2.0 * (frac - starts[k_of]) / fr[k_of] - 1.0, -1.0, 1.0)
        ops = nlp.interval_ops
        basis = barycentric_basis(ops.support[ops.colloc])
        out = np.empty((len(t), nlp.problem.n))
        for k in np.unique(k_of):
            sel = k_of == k
            out[sel] = basis.matrix(tau[sel]) @ cs.nodal[k]
        return out


def solution_reference(problem: OcpProblem, mesh: Mesh, scheme="lgl-int",
                       options: Optional[SolverOptions] = None) -> SolutionReference:
    return SolutionReference(solve_ocp(problem, mesh, scheme, options))
