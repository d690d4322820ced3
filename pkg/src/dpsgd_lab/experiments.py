"""Excess-risk sweeps over n (or epsilon), with resumable per-run records and
CSV/JSON reports."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import multiprocessing as mp
import numpy as np

from .analysis import RateFit, fit_rate
from .numerics import derive_seed
from .privacy import (Calibration, DpTarget, PrivacyError, find_beta, min_epsilon_for_beta,
                      verify_run_privacy)
from .problems import Problem, make_problem
from .sgd import Schedule, SgdConfig, make_schedule, run

CSV_HEADER = ("n", "mean_excess", "stderr", "sigma2", "eta", "T")
EPS_HEADER = ("epsilon", "mean_excess", "stderr", "sigma2", "eta", "T")
RECORDS = "records.jsonl"


class InfeasibleSweep(PrivacyError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    problem: str
    regime: str
    n_values: tuple
    epsilon: float = 8.0
    delta: float = 1e-5
    mc_runs: int = 50
    c: float = 1.0
    seed_base: int = 0
    private: bool = True
    problem_params: dict = field(default_factory=dict)
    epsilon_values: tuple = ()  # non-empty: sweep epsilon at the single n in n_values

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        object.__setattr__(self, "epsilon_values", tuple(float(e) for e in self.epsilon_values))
        object.__setattr__(self, "problem_params", dict(self.problem_params))
        errs = self.violations()
        if errs:
            raise ValueError("; ".join(errs))

    def violations(self) -> list[str]:
        errs = []
        if self.epsilon_values:
            if len(self.n_values) != 1:
                errs.append("an epsilon sweep needs exactly one n")
            if len(self.epsilon_values) < 4:
                errs.append("epsilon_values needs at least 4 entries")
            if any(not e > 0 for e in self.epsilon_values):
                errs.append("epsilon must be positive")
        else:
            if len(self.n_values) < 4:
                errs.append("n_values needs at least 4 entries")
            if list(self.n_values) != sorted(set(self.n_values)):
                errs.append("n_values must be strictly increasing")
        if any(n < 2 for n in self.n_values):
            errs.append("every n must be >= 2")
        if self.mc_runs < 20:
            errs.append("mc_runs must be >= 20")
        if not self.epsilon > 0:
            errs.append("epsilon must be positive")
        if not 0.0 < self.delta < 1.0:
            errs.append("delta must lie in (0,1)")
        if not self.c > 0:
            errs.append("c must be positive")
        return errs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["n_values"] = list(self.n_values)
        d["epsilon_values"] = list(self.epsilon_values)
        return d

    def content_hash(self) -> str:
        """Git-style blob hash of the canonical JSON spec."""
        body = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    @property
    def points(self) -> list[tuple[int, float]]:
        """(n, epsilon) cells of the sweep, in order."""
        if self.epsilon_values:
            return [(self.n_values[0], e) for e in self.epsilon_values]
        return [(n, self.epsilon) for n in self.n_values]


@dataclass
class CellSummary:
    n: int
    epsilon: float
    mean_excess: float
    stderr: float
    sigma2: float
    eta: float
    T: int
    beta: Optional[float] = None


@dataclass
class SweepResult:
    spec: SweepSpec
    cells: list
    fit: Optional[RateFit]
    records: list
    fit_error: str = ""

    @property
    def by_epsilon(self) -> bool:
        return bool(self.spec.epsilon_values)


@dataclass(frozen=True)
class CellPlan:
    n: int
    epsilon: float
    eta: float
    T: int
    sigma2: float
    calibration: Optional[Calibration]


def plan(spec: SweepSpec, problem: Optional[Problem] = None) -> list[CellPlan]:
    """Schedule and verified noise level for every cell; fails closed."""
    problem = problem or make_problem(spec.problem, **spec.problem_params)
    which = "pairwise" if problem.pairwise else "pointwise"
    out, bad = [], []
    for n, eps in spec.points:
        sched = make_schedule(spec.regime, n, problem.d, eps, spec.delta, problem.loss, spec.c)
        if not spec.private:
            out.append(CellPlan(n, eps, sched.eta, sched.T, 0.0, None))
            continue
        cal = find_beta(n, sched.T, problem.loss.G, DpTarget(eps, spec.delta), which)
        if not cal.feasible:
            bad.append((n, eps))
            out.append(CellPlan(n, eps, sched.eta, sched.T, float("nan"), cal))
            continue
        achieved, _ = verify_run_privacy(cal, n, sched.T, problem.loss.G, which)
        if achieved > eps + 1e-12:
            raise PrivacyError(f"accountant gives epsilon {achieved!r} > target {eps!r} at n={n}")
        out.append(CellPlan(n, eps, sched.eta, sched.T, cal.sigma2, cal))
    if bad:
        hints = []
        for n, eps in bad:
            hint = f"n={n}, epsilon={eps:g}"
            if n > 18:
                hint += f" (sufficient epsilon for T=n, delta=1/n^2: {min_epsilon_for_beta(n):.6g})"
            hints.append(hint)
        raise InfeasibleSweep("no feasible beta for " + "; ".join(hints))
    return out


# workers -------------------------------------------------------------------

_WORKER: dict = {}


def _init_worker(spec_dict: dict) -> None:
    spec = SweepSpec(**spec_dict)
    _WORKER["spec"] = spec
    _WORKER["problem"] = make_problem(spec.problem, **spec.problem_params)


def _run_one(task: tuple) -> dict:
    spec, problem = _WORKER["spec"], _WORKER["problem"]
    cell_idx, run_idx, eta, T, sigma2 = task
    n, eps = spec.points[cell_idx]
    seed = derive_seed(spec.seed_base, n, run_idx, cell_idx) if spec.epsilon_values \
        else derive_seed(spec.seed_base, n, run_idx)
    data = problem.sample(n, seed)
    sched = Schedule(eta=eta, T=T, regime=spec.regime, c=spec.c)
    cfg = SgdConfig(problem.loss, sched, sigma2=sigma2, radius=problem.radius, seed=seed,
                    record_every=0)
    rep = run(cfg, data)
    return {"n": n, "epsilon": eps, "run": run_idx, "seed": seed,
            "excess": problem.excess_risk(rep.w_priv)}


def _record_key(rec: dict) -> tuple:
    return (int(rec["n"]), float(rec["epsilon"]), int(rec["run"]))


def _load_records(path: Path) -> dict:
    done = {}
    if path.exists():
        for line in path.read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                done[_record_key(rec)] = rec
    return done


def run_sweep(spec: SweepSpec, out_dir=None, jobs: Optional[int] = None,
              problem: Optional[Problem] = None) -> SweepResult:
    """Run every (cell, run) pair, reusing records already in ``out_dir``."""
    problem = problem or make_problem(spec.problem, **spec.problem_params)
    plans = plan(spec, problem)
    path = Path(out_dir) / RECORDS if out_dir is not None else None
    done = _load_records(path) if path is not None else {}
    order, todo = [], []
    for ci, cp in enumerate(plans):
        for r in range(spec.mc_runs):
            key = (cp.n, float(cp.epsilon), r)
            order.append(key)
            if key not in done:
                todo.append((ci, r, cp.eta, cp.T, cp.sigma2))
    if todo:
        jobs = jobs or os.cpu_count() or 1
        if jobs > 1 and len(todo) > 1:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(jobs, mp_context=ctx, initializer=_init_worker,
                                     initargs=(spec.to_dict(),)) as ex:
                fresh = list(ex.map(_run_one, todo, chunksize=max(1, len(todo) // (4 * jobs))))
        else:
            _WORKER["spec"], _WORKER["problem"] = spec, problem
            fresh = [_run_one(t) for t in todo]
        for rec in fresh:
            done[_record_key(rec)] = rec
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            with tmp.open("w") as fh:
                for key in order:
                    fh.write(json.dumps(done[key], sort_keys=True) + "\n")
            tmp.replace(path)
    records = [done[k] for k in order]

    cells = []
    for cp in plans:
        xs = np.array([done[(cp.n, float(cp.epsilon), r)]["excess"] for r in range(spec.mc_runs)])
        cells.append(CellSummary(cp.n, cp.epsilon, float(xs.mean()),
                                 float(xs.std(ddof=1) / math.sqrt(xs.size)),
                                 cp.sigma2, cp.eta, cp.T,
                                 cp.calibration.beta if cp.calibration else None))
    fit, err = None, ""
    try:
        if spec.epsilon_values:
            fit = fit_rate([(1.0 / c.epsilon, c.mean_excess) for c in cells])
        else:
            fit = fit_rate([(c.n, c.mean_excess) for c in cells])
    except ValueError as exc:
        err = str(exc)
    return SweepResult(spec, cells, fit, records, err)


# reports -------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def emit_report(result: SweepResult, out_dir) -> tuple[Path, Path]:
    """Write report.csv and report.json into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = out / "report.csv", out / "report.json"
    header = EPS_HEADER if result.by_epsilon else CSV_HEADER
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for c in result.cells:
            first = c.epsilon if result.by_epsilon else c.n
            w.writerow([_fmt(first), _fmt(c.mean_excess), _fmt(c.stderr), _fmt(c.sigma2),
                        _fmt(c.eta), _fmt(c.T)])
    fit = result.fit
    meta = {
        "spec": result.spec.to_dict(),
        "config_hash": result.spec.content_hash(),
        "seeds": {"seed_base": result.spec.seed_base,
                  "derivation": "derive_seed(seed_base, n, run[, cell])"},
        "fit": None if fit is None else {"slope": fit.slope, "intercept": fit.intercept,
                                         "r2": fit.r2, "x": "1/epsilon" if result.by_epsilon else "n"},
        "fit_error": result.fit_error,
        "beta": [c.beta for c in result.cells],
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, meta_path


def read_report(path) -> list[tuple]:
    """Parse report.csv back into typed rows."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return [(float(r[0]) if "." in r[0] or "e" in r[0] else int(r[0]), float(r[1]), float(r[2]),
             float(r[3]), float(r[4]), int(r[5])) for r in rows[1:]]
