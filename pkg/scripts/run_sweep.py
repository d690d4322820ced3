"""Run a sweep spec and print the per-n table and fitted slope.

    python scripts/run_sweep.py scripts/configs/sweep_logistic_general.toml --out runs/logistic
"""
import argparse
import sys
from pathlib import Path

from dpsgd_lab.config import parse_sweep_spec
from dpsgd_lab.experiments import InfeasibleSweep, emit_report, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("spec", type=Path)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--jobs", type=int, default=None)
    args = ap.parse_args()

    spec = parse_sweep_spec(args.spec.read_text())
    try:
        result = run_sweep(spec, args.out, jobs=args.jobs)
    except InfeasibleSweep as exc:
        sys.exit(f"infeasible: {exc}")
    csv_path, _ = emit_report(result, args.out)
    print(csv_path.read_text(), end="")
    if result.fit:
        print(f"slope {result.fit.slope:.4f}  r2 {result.fit.r2:.4f}")
    else:
        print(f"no fit: {result.fit_error}")


if __name__ == "__main__":
    main()
