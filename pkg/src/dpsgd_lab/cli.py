"""Command-line entry point: ``dpsgd-lab <subcommand>``.

Exit codes: 0 success, 2 config error, 3 privacy infeasible, 4 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, TrainConfig, parse_config, parse_sweep_spec

EXIT_OK, EXIT_CONFIG, EXIT_PRIVACY, EXIT_RUNTIME = 0, 2, 3, 4


class Infeasible(Exception):
    pass


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _csv_out(header, rows) -> None:
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


def _read_config(path: str, seed=None) -> TrainConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    cfg = parse_config(text)
    return cfg if seed is None else replace(cfg, seed=seed)


def _setup(cfg: TrainConfig):
    """Problem, schedule and noise level for a training config."""
    from .privacy import DpTarget, find_beta, verify_run_privacy
    from .problems import make_problem
    from .sgd import SgdConfig, make_schedule

    try:
        problem = make_problem(cfg.problem_name, **cfg.problem_kwargs())
        sched = make_schedule(cfg.regime, cfg.n, cfg.d, cfg.epsilon, cfg.delta, problem.loss, cfg.c)
    except ValueError as exc:
        raise ConfigError([str(exc)]) from None
    privacy = {"claimed": False}
    if cfg.sigma2_override is not None:
        sigma2 = cfg.sigma2_override
    else:
        which = "pairwise" if problem.pairwise else "pointwise"
        cal = find_beta(cfg.n, sched.T, problem.loss.G, DpTarget(cfg.epsilon, cfg.delta), which)
        if not cal.feasible:
            raise Infeasible(f"no feasible beta for n={cfg.n}, T={sched.T}, "
                             f"epsilon={cfg.epsilon:g}, delta={cfg.delta:g}")
        eps, delta = verify_run_privacy(cal, cfg.n, sched.T, problem.loss.G, which)
        sigma2 = cal.sigma2
        privacy = {"claimed": True, "beta": cal.beta, "lambda": cal.lam,
                   "epsilon_achieved": eps, "delta": delta}
    sgd = SgdConfig(problem.loss, sched, sigma2=sigma2, radius=problem.radius, seed=cfg.seed)
    return problem, sgd, privacy


# subcommands -----------------------------------------------------------------

def cmd_calibrate(args) -> int:
    from .privacy import (DpTarget, PrivacyError, beta_grid, calibrate, find_beta,
                          verify_run_privacy)
    target = DpTarget(args.epsilon, args.delta)
    T = args.T or args.n
    if args.best:
        cals = [find_beta(args.n, T, args.G, target, args.which)]
    else:
        betas = args.beta or beta_grid().tolist()
        cals = [calibrate(args.n, T, args.G, target, b, args.which) for b in betas]
    rows = []
    for cal in cals:
        eps = None
        if cal.feasible:
            try:
                eps = verify_run_privacy(cal, args.n, T, args.G, args.which)[0]
            except PrivacyError:
                eps = None
        rows.append((cal.beta, cal.lam, cal.sigma2, cal.feasible, eps))
    _csv_out(("beta", "lambda", "sigma2", "feasible", "eps_achieved"), rows)
    if args.best and not cals[0].feasible:
        return EXIT_PRIVACY
    return EXIT_OK


def cmd_min_eps(args) -> int:
    from .privacy import min_epsilon_for_beta
    _csv_out(("n", "min_epsilon"), [(args.n, min_epsilon_for_beta(args.n))])
    return EXIT_OK


def cmd_train(args) -> int:
    from .sgd import run
    cfg = _read_config(args.config, args.seed)
    problem, sgd, privacy = _setup(cfg)
    data = problem.sample(cfg.n, cfg.seed)
    report = run(sgd, data)
    out = report.to_dict(timing=args.timing)
    out["excess_risk"] = problem.excess_risk(report.w_priv)
    out["privacy"] = privacy
    out["config"] = cfg.to_toml()
    json.dump(out, sys.stdout, sort_keys=True, indent=1)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_stability(args) -> int:
    from .analysis import BoundInputs, estimate_stability, stability_bound
    cfg = _read_config(args.config, args.seed)
    problem, sgd, _ = _setup(cfg)
    est = estimate_stability(problem, sgd, cfg.n, mc_runs=args.mc_runs, seed=cfg.seed,
                             n_indices=min(args.indices, cfg.n))
    bi = BoundInputs.from_loss(problem.loss, cfg.n, sgd.schedule.T, cfg.d, sgd.schedule.eta,
                               sgd.sigma2, risks=est.mean_risks)
    smooth = problem.loss.is_smooth
    rows = []
    for t, (v, se) in sorted(est.spot_checks.items()):
        rows.append((t, v, se, stability_bound(bi, t - 1, smooth, problem.pairwise), est.mc_runs))
    rows.append((est.t + 1, est.value, est.std_err,
                 stability_bound(bi, est.t, smooth, problem.pairwise), est.mc_runs))
    _csv_out(("t", "value", "std_err", "bound", "mc_runs"), rows)
    return EXIT_OK


def cmd_gap(args) -> int:
    from .analysis import estimate_generalization_gap
    cfg = _read_config(args.config, args.seed)
    problem, sgd, _ = _setup(cfg)
    mean, se = estimate_generalization_gap(problem, sgd, cfg.n, mc_runs=args.mc_runs, seed=cfg.seed)
    _csv_out(("n", "gap_mean", "std_err", "mc_runs"), [(cfg.n, mean, se, args.mc_runs)])
    return EXIT_OK


def cmd_bounds(args) -> int:
    from .analysis import BoundInputs, hold_path, optimization_bound, stability_bound
    from .numerics import derive_seed
    from .sgd import risk_function, run
    cfg = _read_config(args.config, args.seed)
    problem, sgd, _ = _setup(cfg)
    T = sgd.schedule.T
    paths, fstar = np.zeros(T), 0.0
    for r in range(args.mc_runs):
        s = derive_seed(cfg.seed, cfg.n, r)
        data = problem.sample(cfg.n, s)
        rep = run(replace(sgd, seed=s), data)
        paths += hold_path(rep.iterate_risks, T)
        fstar += risk_function(problem.loss, data)(problem.w_star)
    bi = BoundInputs.from_loss(problem.loss, cfg.n, T, cfg.d, sgd.schedule.eta, sgd.sigma2,
                               w_star_norm=float(np.linalg.norm(problem.w_star)),
                               f_star_empirical=fstar / args.mc_runs, risks=paths / args.mc_runs)
    smooth = problem.loss.is_smooth
    ts = sorted({max(1, T // 4), max(1, T // 2), T})
    rows = [(t, optimization_bound(bi, t, smooth), stability_bound(bi, t, smooth, problem.pairwise))
            for t in ts]
    _csv_out(("t", "optimization_bound", "stability_bound"), rows)
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .experiments import emit_report, plan, run_sweep
    try:
        spec = parse_sweep_spec(Path(args.spec).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"cannot read {args.spec}: {exc.strerror}"]) from None
    if args.seed is not None:
        spec = replace(spec, seed_base=args.seed)
    if args.dry_run:
        rows = [(p.n, p.epsilon, None if p.calibration is None else p.calibration.beta,
                 p.sigma2, p.eta, p.T) for p in plan(spec)]
        _csv_out(("n", "epsilon", "beta", "sigma2", "eta", "T"), rows)
        return EXIT_OK
    if not args.out:
        raise ConfigError(["sweep needs --out unless --dry-run is given"])
    result = run_sweep(spec, args.out, jobs=args.jobs)
    csv_path, _ = emit_report(result, args.out)
    sys.stdout.write(csv_path.read_text())
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    ok = run_selftest(corrupt_L=args.corrupt_L, out=sys.stdout)
    return EXIT_OK if ok else EXIT_RUNTIME


# parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="master seed; overrides the config's seed")
    common.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker processes for Monte-Carlo work (default: all cores)")

    p = argparse.ArgumentParser(prog="dpsgd-lab", description="DP-SGD laboratory.",
                                parents=[common])
    p.add_argument("--version", action="version", version=f"dpsgd-lab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", parents=[common],
                       help="noise calibration table (CSV: beta,lambda,sigma2,feasible,eps_achieved)")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--T", type=int, default=None, help="iterations (default n)")
    c.add_argument("--G", type=float, default=1.0, help="Lipschitz constant")
    c.add_argument("--epsilon", type=float, required=True)
    c.add_argument("--delta", type=float, required=True)
    c.add_argument("--which", choices=("pointwise", "pairwise"), default="pointwise")
    c.add_argument("--beta", type=float, action="append",
                   help="beta to evaluate (repeatable; default: the full search grid)")
    c.add_argument("--best", action="store_true", help="print only the least-noise feasible beta")
    c.set_defaults(func=cmd_calibrate)

    m = sub.add_parser("min-eps", parents=[common],
                       help="sufficient epsilon for a feasible beta when T=n, delta=1/n^2 (CSV: n,min_epsilon)")
    m.add_argument("--n", type=int, required=True)
    m.set_defaults(func=cmd_min_eps)

    t = sub.add_parser("train", parents=[common], help="one DP-SGD run; prints a JSON report")
    t.add_argument("config", help="TOML config file")
    t.add_argument("--timing", action="store_true", help="include wall time (not reproducible)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("stability", parents=[common],
                       help="paired-run stability estimate vs bound (CSV: t,value,std_err,bound,mc_runs)")
    s.add_argument("config")
    s.add_argument("--mc-runs", type=int, default=200)
    s.add_argument("--indices", type=int, default=8, help="replacement indices per run")
    s.set_defaults(func=cmd_stability)

    g = sub.add_parser("gap", parents=[common],
                       help="generalization gap F - F_S of the output (CSV: n,gap_mean,std_err,mc_runs)")
    g.add_argument("config")
    g.add_argument("--mc-runs", type=int, default=50)
    g.set_defaults(func=cmd_gap)

    b = sub.add_parser("bounds", parents=[common],
                       help="optimization and stability bounds at T/4, T/2, T "
                            "(CSV: t,optimization_bound,stability_bound)")
    b.add_argument("config")
    b.add_argument("--mc-runs", type=int, default=20, help="runs averaged for E[F_S(w_j)]")
    b.set_defaults(func=cmd_bounds)

    w = sub.add_parser("sweep", parents=[common],
                       help="excess-risk sweep; writes report.csv, report.json, records.jsonl")
    w.add_argument("--spec", required=True, help="TOML sweep spec")
    w.add_argument("--out", help="output directory (resumable)")
    w.add_argument("--dry-run", action="store_true", help="print the calibration plan only")
    w.set_defaults(func=cmd_sweep)

    st = sub.add_parser("selftest", parents=[common], help="fast invariant checks (< 60 s)")
    st.add_argument("--corrupt-L", action="store_true", help=argparse.SUPPRESS)
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    from .experiments import InfeasibleSweep
    from .privacy import PrivacyError
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except (Infeasible, InfeasibleSweep, PrivacyError) as exc:
        print(f"privacy infeasible: {exc}", file=sys.stderr)
        return EXIT_PRIVACY
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
