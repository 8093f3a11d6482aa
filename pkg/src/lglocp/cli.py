"""Command-line front end: quadrature rules, single solves and the two studies."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .basis import NodeFamily, make_rule
from .covector import error_norms
from .nlp import SolverError, SolverOptions
from .problems import REGISTRY, get_problem
from .solve import solve_ocp, solve_sequence
from .transcription import Mesh, Scheme

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64

SCHEME_CHOICES = ("lg", "lgr", "lgl-int", "lgl-aug")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunResult:
    problem: str
    scheme: str
    m: int
    n: int
    converged: bool
    iterations: int
    objective: float
    kkt_residual: float
    errors: Optional[dict]
    hamiltonian: Optional[dict]
    wall_seconds: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        return cls(**json.loads(text))


def _reference_for(entry):
    return entry.reference() if entry.reference is not None else None


def run_solve(problem_name, scheme, m, n, tol=1e-10, with_errors=True, reference=None) -> RunResult:
    entry = get_problem(problem_name)
    scheme = Scheme.parse(scheme)
    problem = entry.builder()
    options = SolverOptions(kkt_tolerance=tol)
    art = solve_ocp(problem, Mesh(m, n), scheme, options)
    errors = None
    if with_errors:
        reference = reference if reference is not None else _reference_for(entry)
        if reference is not None:
            errors = error_norms(art, reference)
    H = art.hamiltonian
    return RunResult(
        problem=problem_name, scheme=scheme.value, m=m, n=n,
        converged=bool(art.converged), iterations=int(art.report.iterations),
        objective=float(art.objective), kkt_residual=float(art.report.kkt_residual),
        errors=errors,
        hamiltonian={"times": H.times.tolist(), "values": H.values.tolist(),
                     "mean": H.mean, "amplitude": H.amplitude},
        wall_seconds=float(art.wall_seconds),
    )


def parse_n_range(text: str):
    """``A:B:STEP`` (inclusive of B) or a single integer."""
    parts = text.split(":")
    try:
        nums = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"bad N range {text!r}") from None
    if len(nums) == 1:
        nums = [nums[0], nums[0], 1]
    elif len(nums) == 2:
        nums.append(1)
    if len(nums) != 3 or nums[2] <= 0 or nums[1] < nums[0]:
        raise UsageError(f"bad N range {text!r}")
    return list(range(nums[0], nums[1] + 1, nums[2]))


def parse_schemes(text: str):
    try:
        return [Scheme.parse(s.strip()) for s in text.split(",") if s.strip()]
    except ValueError as err:
        raise UsageError(str(err)) from None


def monotone_decay(errors, factor=10.0, floor=1e-10):
    """True if each error drops by ``factor`` per step until it is within ``factor`` of ``floor``."""
    for a, b in zip(errors[:-1], errors[1:]):
        if a <= factor * floor:
            break
        if not b * factor <= a:
            return False
    return True


def convergence_study(problem_name, schemes, n_values, m, tol=1e-10):
    """Rows ``(scheme, n, state_err, control_err, costate_err, objective_err)`` and convergence flags.

    Each scheme is solved finest N first, warm-starting every coarser N from
    the previous solution. Failed solves give NaN errors.
    """
    entry = get_problem(problem_name)
    if entry.reference is None:
        raise UsageError(f"problem {problem_name!r} has no reference solution")
    reference = entry.reference()
    problem = entry.builder()
    options = SolverOptions(kkt_tolerance=tol)
    rows, all_converged = [], True
    for scheme in schemes:
        solved = solve_sequence(problem, m, n_values, scheme, options)
        for n in n_values:
            art = solved[n]
            ok = not isinstance(art, SolverError) and art.converged
            all_converged &= ok
            if ok:
                e = error_norms(art, reference)
                errs = (e["state"], e["control"], e["costate"], abs(art.objective - reference.objective))
            else:
                errs = (float("nan"),) * 4
            rows.append((scheme.value, n) + errs)
    return rows, all_converged


def hamiltonian_study(problem_name, schemes, m, n):
    entry = get_problem(problem_name)
    problem = entry.builder()
    if not problem.horizon.free:
        raise UsageError(f"problem {problem_name!r} does not have a free final time")
    profiles = []
    for scheme in schemes:
        res = run_solve(problem_name, scheme, m, n, with_errors=False)
        H = res.hamiltonian
        values = np.asarray(H["values"])
        profiles.append({"scheme": res.scheme, "converged": res.converged,
                         "objective": res.objective, "times": H["times"], "values": H["values"],
                         "mean": H["mean"], "mean_abs": float(np.abs(values).mean()),
                         "amplitude": H["amplitude"]})
    return {"problem": problem_name, "m": m, "n": n, "profiles": profiles}


# -- commands -------------------------------------------------------------------

def cmd_rule(args):
    try:
        rule = make_rule(NodeFamily[args.family.upper()], args.n)
    except ValueError as err:
        raise UsageError(str(err)) from None
    nodes = [float(v) for v in rule.nodes]
    weights = [float(v) for v in rule.weights]
    if args.json:
        print(json.dumps({"family": args.family, "n": args.n, "nodes": nodes, "weights": weights}))
    else:
        for x, w in zip(nodes, weights):
            print(f"{x:.17g} {w:.17g}")
    return EXIT_OK


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text + "\n")
    else:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def cmd_solve(args):
    try:
        res = run_solve(args.problem, args.scheme, args.m, args.n, args.tol)
    except SolverError as err:
        report = err.report
        res = RunResult(args.problem, Scheme.parse(args.scheme).value, args.m, args.n, False,
                        getattr(report, "iterations", 0), float("nan"),
                        float(getattr(report, "kkt_residual", float("nan"))), None, None, 0.0)
        print(f"solver error: {err}", file=sys.stderr)
    _write(args.out, res.to_json())
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_study_convergence(args):
    schemes = parse_schemes(args.schemes)
    n_values = parse_n_range(args.n_range)
    rows, converged = convergence_study(args.problem, schemes, n_values, args.m)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "n", "state_err", "control_err", "costate_err", "objective_err"])
        for r in rows:
            writer.writerow([r[0], r[1]] + [repr(float(v)) for v in r[2:]])
    for scheme in schemes:
        sub = [r for r in rows if r[0] == scheme.value]
        flags = [monotone_decay([r[k] for r in sub]) for k in (2, 3, 4)]
        print(f"{scheme.value}: monotone decay state={flags[0]} control={flags[1]} costate={flags[2]}")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_study_hamiltonian(args):
    schemes = parse_schemes(args.schemes)
    out = hamiltonian_study(args.problem, schemes, args.m, args.n)
    _write(args.out, json.dumps(out, indent=1))
    for p in out["profiles"]:
        print(f"{p['scheme']}: converged={p['converged']} mean={p['mean']:.6g} "
              f"mean_abs={p['mean_abs']:.6g} amplitude={p['amplitude']:.6g}")
    return EXIT_OK if all(p["converged"] for p in out["profiles"]) else EXIT_NOT_CONVERGED


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lglocp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("rule", help="print quadrature nodes and weights")
    p.add_argument("--family", required=True, choices=[f.name.lower() for f in NodeFamily])
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_rule)

    p = sub.add_parser("solve", help="solve a registered problem")
    p.add_argument("--problem", required=True, choices=sorted(REGISTRY))
    p.add_argument("--scheme", required=True, choices=SCHEME_CHOICES)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("study", help="convergence or Hamiltonian study")
    studies = p.add_subparsers(dest="study", required=True, parser_class=_Parser)
    c = studies.add_parser("convergence")
    c.add_argument("--problem", required=True, choices=sorted(REGISTRY))
    c.add_argument("--schemes", required=True)
    c.add_argument("--n-range", required=True)
    c.add_argument("--m", type=int, default=1)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_study_convergence)
    h = studies.add_parser("hamiltonian")
    h.add_argument("--problem", required=True, choices=sorted(REGISTRY))
    h.add_argument("--schemes", required=True)
    h.add_argument("--m", type=int, required=True)
    h.add_argument("--n", type=int, required=True)
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_study_hamiltonian)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("m", "n"):
        if getattr(args, name, 1) < 1:
            parser.error(f"--{name} must be positive")
    try:
        return args.func(args)
    except (UsageError, ValueError) as err:
        parser.print_usage(sys.stderr)
        print(f"lglocp: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
