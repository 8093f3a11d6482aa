"""Acceptance gate: one test per criterion, each printing a pass/fail line at the end of the run."""

import time

import numpy as np
import pytest
from numpy.polynomial import legendre as L

from lglocp.basis import NodeFamily, barycentric_basis, make_rule
from lglocp.cli import monotone_decay
from lglocp.covector import adjoint_residuals, error_norms, xp_values
from lglocp.matrices import degree_condition_residual, lgl_operators
from lglocp.nlp import SolverOptions
from lglocp.problems import (Example1OdeReference, example1, example2_builder,
                             example2_reference, reference_example1)
from lglocp.solve import solve_ocp, solve_sequence
from lglocp.transcription import Mesh, build_layout

TOL = 1e-10
OPTIONS = SolverOptions(kkt_tolerance=TOL)


def _integral(k):
    return 0.0 if k % 2 else 2.0 / (k + 1)


def _node_product(tau, i):
    return np.prod([tau[i] - tau[j] for j in range(len(tau)) if j != i])


# -- shared Example 1 solves (criteria 7-9) -------------------------------------

@pytest.fixture(scope="module")
def convergence_runs():
    start = time.perf_counter()
    runs = solve_sequence(example1(), 1, [5, 10, 15, 20, 25], "lgl-int", OPTIONS)
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def equivalence_runs():
    start = time.perf_counter()
    runs = {s: solve_sequence(example1(), 1, [5, 10, 20], s, OPTIONS) for s in ("lgl-int", "lgl-aug")}
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def example2_runs():
    start = time.perf_counter()
    problem = example2_builder(5.0)
    runs = {s: solve_ocp(problem, Mesh(40, 3), s) for s in ("lgr", "lgl-int")}
    return runs, time.perf_counter() - start


# -- criteria -------------------------------------------------------------------

def test_criterion_01_quadrature_exactness(record_criterion):
    start = time.perf_counter()
    worst = 0.0
    for family in NodeFamily:
        for n in range(2, 21):
            rule = make_rule(family, n)
            for k in range(rule.exactness_degree + 1):
                worst = max(worst, abs(rule.weights @ rule.nodes**k - _integral(k)))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 1.0
    assert record_criterion(1, ok, f"max monomial error {worst:.2e} (<= 1e-12), {elapsed:.2f}s")


def test_criterion_02_leading_block(record_criterion):
    start = time.perf_counter()
    worst = 0.0
    for n in range(2, 21):
        ops = lgl_operators(make_rule("lgl", n))
        sol = np.linalg.solve(ops.aug_diff[:, 1:], ops.aug_diff[:, 0])
        worst = max(worst, np.abs(sol - np.r_[-np.ones(n - 1), 0.0]).max())
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 1.0
    assert record_criterion(2, ok, f"max deviation from [-1; 0] {worst:.2e} (<= 1e-10), {elapsed:.2f}s")


def test_criterion_03_integration_oracles(record_criterion):
    start = time.perf_counter()
    g, gw = L.leggauss(40)
    err_a = err_ap = 0.0
    for n in range(2, 16):
        ops = lgl_operators(make_rule("lgl", n))
        tau = ops.rule.nodes
        basis = barycentric_basis(tau)
        quad = np.array([(b + 1) / 2 * gw @ basis.matrix(-1 + (b + 1) * (g + 1) / 2) for b in tau[1:]])
        err_a = max(err_a, np.abs(ops.integ - quad).max())
        closed = np.array([1.0 / _node_product(tau, i) for i in range(n)]) / n
        err_ap = max(err_ap, np.abs(ops.ap / closed - 1.0).max())
    elapsed = time.perf_counter() - start
    ok = err_a <= 1e-10 and err_ap <= 1e-10 and elapsed < 1.0
    assert record_criterion(3, ok, f"A vs quadrature {err_a:.2e}, A_p vs product {err_ap:.2e} rel "
                                   f"(<= 1e-10), {elapsed:.2f}s")


def test_criterion_04_dual_diff(record_criterion):
    start = time.perf_counter()
    worst = max(np.abs((o := lgl_operators(make_rule("lgl", n))).dual_diff - o.diff).max()
                for n in range(2, 21))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-11 and elapsed < 1.0
    assert record_criterion(4, ok, f"max |D_dag - D| {worst:.2e} (<= 1e-11), {elapsed:.2f}s")


def test_criterion_05_degree_condition(record_criterion):
    start = time.perf_counter()
    low, high = 0.0, np.inf
    for n in range(3, 21):
        ops = lgl_operators(make_rule("lgl", n))
        tau = ops.rule.nodes
        for k in range(n - 1):
            low = max(low, abs(degree_condition_residual(ops, tau**k)))
        high = min(high, abs(degree_condition_residual(ops, tau ** (n - 1))))
    elapsed = time.perf_counter() - start
    ok = low <= 1e-10 and high >= 1e-3 and elapsed < 1.0
    assert record_criterion(5, ok, f"degree <= N-2 max {low:.2e} (<= 1e-10), tau^(N-1) min {high:.2e} "
                                   f"(>= 1e-3), {elapsed:.2f}s")


def test_criterion_06_adjoint_integral_structure(record_criterion):
    start = time.perf_counter()
    tail = body = 0.0
    for n in range(3, 16):
        ops = lgl_operators(make_rule("lgl", n))
        Ad = ops.adjoint_integ
        tail = max(tail, np.abs(Ad[:, -1] - ops.rule.weights[-1]).max())
        for j in range(Ad.shape[1] - 1):
            body = max(body, abs(degree_condition_residual(ops, Ad[:, j])))
    elapsed = time.perf_counter() - start
    ok = tail <= 1e-12 and body <= 1e-10 and elapsed < 1.0
    assert record_criterion(6, ok, f"last column vs w_N {tail:.2e} (<= 1e-12), interior degree test "
                                   f"{body:.2e} (<= 1e-10), {elapsed:.2f}s")


def test_criterion_07_example1_convergence(record_criterion, convergence_runs):
    runs, elapsed = convergence_runs
    closed, ode = reference_example1(), Example1OdeReference()
    t = np.linspace(0, 2, 41)
    oracle_gap = max(np.abs(closed.state(t) - ode.state(t)).max(),
                     np.abs(closed.costate(t) - ode.costate(t)).max())
    converged = all(a.converged for a in runs.values())
    errs = {n: error_norms(a, closed) for n, a in runs.items()}
    fine = errs[25]
    seq = [errs[n] for n in (5, 10, 15, 20)]
    decay = all(monotone_decay([e[k] for e in seq]) for k in ("state", "control", "costate"))
    ok = (converged and oracle_gap <= 1e-11 and fine["state"] <= 1e-9 and fine["control"] <= 1e-9
          and fine["costate"] <= 1e-7 and decay and elapsed < 30)
    table = " ".join(f"N={n}:{errs[n]['state']:.1e}/{errs[n]['control']:.1e}/{errs[n]['costate']:.1e}"
                     for n in sorted(errs))
    assert record_criterion(7, ok, f"converged={converged} decay={decay} errors(x/u/lambda) {table}; "
                                   f"closed form vs ODE {oracle_gap:.1e}, {elapsed:.1f}s")


def test_criterion_08_scheme_equivalence(record_criterion, equivalence_runs):
    runs, elapsed = equivalence_runs
    worst = {"state": 0.0, "control": 0.0, "costate": 0.0, "xp": 0.0}
    converged = True
    for n in (5, 10, 20):
        a, b = runs["lgl-int"][n], runs["lgl-aug"][n]
        converged &= a.converged and b.converged
        worst["state"] = max(worst["state"], np.abs(a.states() - b.states()).max())
        worst["control"] = max(worst["control"], np.abs(a.controls() - b.controls()).max())
        worst["costate"] = max(worst["costate"], np.abs(a.costates.nodal - b.costates.nodal).max())
        worst["xp"] = max(worst["xp"], np.abs(xp_values(a) - b.nlp.unpack(b.variables)[1]).max())
    ok = converged and max(worst.values()) <= 1e-8 and elapsed < 30
    detail = " ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert record_criterion(8, ok, f"converged={converged} max differences: {detail} (<= 1e-8), "
                                   f"{elapsed:.1f}s")


def test_criterion_09_adjoint_correspondence(record_criterion, convergence_runs, equivalence_runs):
    arts = list(convergence_runs[0].values())
    for runs in equivalence_runs[0].values():
        arts += list(runs.values())
    arts = [a for a in arts if a.converged]
    res = [adjoint_residuals(a) for a in arts]
    degree = max(r["degree"] for r in res)
    rows = max(max(r["state_rows"], r["control_rows"]) for r in res)
    ok = len(arts) == 11 and degree <= 1e-8 and rows <= 10 * TOL
    assert record_criterion(9, ok, f"{len(arts)} solves, degree residual {degree:.1e} (<= 1e-8), "
                                   f"adjoint rows {rows:.1e} (<= {10 * TOL:.0e})")


def test_criterion_10_hamiltonian(record_criterion, example2_runs):
    runs, elapsed = example2_runs
    lgr, lgl = runs["lgr"].hamiltonian, runs["lgl-int"].hamiltonian
    converged = all(a.converged for a in runs.values())
    ratio = lgl.mean_abs / lgr.mean_abs
    oscillates = abs(lgl.mean) <= lgl.amplitude
    ok = converged and ratio <= 0.2 and oscillates and elapsed < 300
    assert record_criterion(10, ok, f"converged={converged} mean|H| LGL {lgl.mean_abs:.3g} vs LGR "
                                    f"{lgr.mean_abs:.3g} (ratio {ratio:.2f}, need <= 0.2); LGL mean "
                                    f"{lgl.mean:.3g} within amplitude {lgl.amplitude:.3g}: "
                                    f"{oscillates}, {elapsed:.1f}s")


def test_criterion_11_objective_ordering(record_criterion):
    start = time.perf_counter()
    reference = example2_reference(5.0, 40)
    problem = example2_builder(5.0)
    rows, ok = [], reference.artifacts.converged
    for n in (3, 5, 7):
        e = {}
        for scheme in ("lgl-int", "lgr"):
            art = solve_ocp(problem, Mesh(40, n), scheme)
            ok &= art.converged
            e[scheme] = abs(art.objective - reference.objective)
        ok &= e["lgl-int"] <= e["lgr"]
        rows.append(f"N={n}: LGL {e['lgl-int']:.2e} LGR {e['lgr']:.2e}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 600
    assert record_criterion(11, ok, "; ".join(rows) + f", {elapsed:.1f}s")


def test_criterion_12_layout_counts(record_criterion):
    start = time.perf_counter()
    expected = {"lgl-int": lambda M, N: M * (N - 1) + 1, "lgr": lambda M, N: M * N + 1,
                "lg": lambda M, N: M * (N + 1) + 1}
    bad = [(s, M, N) for s, f in expected.items() for M in (1, 2, 5, 10) for N in range(2, 9)
           if build_layout(Mesh(M, N), s, 1, 1).total_per_state != f(M, N)]
    elapsed = time.perf_counter() - start
    ok = not bad and elapsed < 1.0
    assert record_criterion(12, ok, f"{84 - len(bad)}/84 (M, N, family) counts exact, {elapsed:.2f}s")
