"""Error decay of each scheme on the scalar example as the number of nodes grows.

    python3 scripts/convergence_study.py --out conv.csv
"""
import argparse
import csv

from lglocp.cli import convergence_study, monotone_decay, parse_n_range, parse_schemes


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--schemes", default="lgl-int,lgl-aug,lgr,lg")
    parser.add_argument("--n-range", default="5:25:5")
    parser.add_argument("--tol", type=float, default=1e-10)
    parser.add_argument("--out", default="convergence.csv")
    args = parser.parse_args()

    schemes = parse_schemes(args.schemes)
    rows, converged = convergence_study("example1", schemes, parse_n_range(args.n_range), 1, args.tol)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scheme", "n", "state_err", "control_err", "costate_err", "objective_err"])
        writer.writerows(rows)

    print(f"{'scheme':8} {'N':>3} {'state':>9} {'control':>9} {'costate':>9} {'objective':>9}")
    for r in rows:
        print(f"{r[0]:8} {r[1]:3d} " + " ".join(f"{v:9.2e}" for v in r[2:]))
    for scheme in schemes:
        sub = [r for r in rows if r[0] == scheme.value]
        print(scheme.value, "monotone decay:", all(monotone_decay([r[k] for r in sub]) for k in (2, 3, 4)))
    if not converged:
        print("warning: some solves did not converge (NaN rows)")


if __name__ == "__main__":
    main()
