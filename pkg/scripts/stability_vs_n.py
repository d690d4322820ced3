"""Paired-run stability of noise-free SGD on realizable least squares vs n,
next to the smooth-case stability bound."""
import argparse

from dpsgd_lab.analysis import BoundInputs, estimate_stability, stability_bound_smooth
from dpsgd_lab.problems import realizable_least_squares
from dpsgd_lab.sgd import SgdConfig, make_schedule


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[25, 50, 100, 200, 400])
    ap.add_argument("--mc-runs", type=int, default=200)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    prob = realizable_least_squares(d=args.d, seed=args.seed)
    print("n,T,eta,value,std_err,bound")
    for n in args.n:
        sched = make_schedule("smooth_general", n, args.d, 4.0, 1e-5, prob.loss)
        cfg = SgdConfig(prob.loss, sched, radius=prob.radius)
        est = estimate_stability(prob, cfg, n, mc_runs=args.mc_runs, seed=args.seed)
        inputs = BoundInputs.from_loss(prob.loss, n, sched.T, args.d, sched.eta, risks=est.mean_risks)
        bound = stability_bound_smooth(inputs, sched.T)
        print(f"{n},{sched.T},{sched.eta:.6g},{est.value:.6g},{est.std_err:.3g},{bound:.6g}")


if __name__ == "__main__":
    main()
