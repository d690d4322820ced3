"""Least noise level per (n, epsilon) with T = n, pointwise and pairwise.

Blank sigma2 cells are infeasible. The last column is the sufficient
epsilon threshold for delta = 1/n^2.
"""
import argparse

from dpsgd_lab.privacy import DpTarget, find_beta, min_epsilon_for_beta


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[128, 512, 1024, 4096, 16384])
    ap.add_argument("--epsilon", type=float, nargs="+", default=[0.5, 1, 2, 4, 8])
    ap.add_argument("--delta", type=float, default=1e-5)
    args = ap.parse_args()

    print("which,n," + ",".join(f"eps={e:g}" for e in args.epsilon) + ",min_eps_remark")
    for which in ("pointwise", "pairwise"):
        for n in args.n:
            cells = []
            for e in args.epsilon:
                cal = find_beta(n, n, 1.0, DpTarget(e, args.delta), which)
                cells.append(f"{cal.sigma2:.4g}" if cal.feasible else "")
            print(f"{which},{n}," + ",".join(cells) + f",{min_epsilon_for_beta(n):.4g}")


if __name__ == "__main__":
    main()
