"""Hamiltonian profile of the free-final-time orbit transfer under LGL and LGR collocation.

    python3 scripts/hamiltonian_study.py --revs 5 --m 40 --n 3
"""
import argparse

import numpy as np

from lglocp.problems import example2_builder, example2_reference
from lglocp.solve import solve_ocp
from lglocp.transcription import Mesh


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--revs", type=float, default=5.0)
    parser.add_argument("--m", type=int, default=40)
    parser.add_argument("--n", type=int, default=3)
    parser.add_argument("--profile", action="store_true", help="print H at every node")
    args = parser.parse_args()

    problem = example2_builder(args.revs)
    reference = example2_reference(args.revs, args.m)
    print(f"reference objective {reference.objective:.12g}")
    for scheme in ("lgl-int", "lgr"):
        art = solve_ocp(problem, Mesh(args.m, args.n), scheme)
        H = art.hamiltonian
        print(f"{scheme:8} converged={art.converged} iters={art.report.iterations} "
              f"objective err={abs(art.objective - reference.objective):.3e} "
              f"mean={H.mean:.4g} mean|H|={H.mean_abs:.4g} amplitude={H.amplitude:.4g}")
        if args.profile:
            for t, h in zip(H.times, H.values):
                print(f"  {t:10.5f} {h: .6e}")
        tail = np.asarray(H.values)[np.asarray(H.times) >= 0.75 * H.times[-1]]
        print(f"{'':8} trailing quarter: min {tail.min():.4g} max {tail.max():.4g}")


if __name__ == "__main__":
    main()
