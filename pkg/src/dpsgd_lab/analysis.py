"""Closed-form stability and optimization bounds, and the Monte-Carlo
estimators that are checked against them.

Bounds take a :class:`BoundInputs` whose ``risks`` entry holds the mean
empirical risk E[F_S(w_j)] for j = 1..T (Monte-Carlo averages when measured).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .losses import Dataset, Holder, MarginLoss, c_alpha_1, c_alpha_2, self_bound_rhs
from .numerics import RngState, derive_seed, uniform_sphere
from .problems import Problem
from .sgd import SgdConfig, risk_function, run

E = math.e
_PICK_STREAM = 11
_REPLACEMENT_STREAM = 12


@dataclass(frozen=True)
class BoundInputs:
    n: int
    T: int
    d: int
    eta: float
    sigma2: float
    L: float
    G: float
    alpha: float
    c1: float
    c2: Optional[float] = None  # undefined for smooth losses
    c3: Optional[float] = None
    w_star_norm: float = 0.0
    f_star_empirical: float = 0.0
    risks: Optional[tuple] = None  # E[F_S(w_j)], j = 1..T

    def __post_init__(self):
        if self.n < 1 or self.T < 1 or self.d < 1:
            raise ValueError("n, T and d must be positive")
        if not self.eta >= 0 or not self.sigma2 >= 0:
            raise ValueError("eta and sigma2 must be nonnegative")
        if self.risks is not None:
            object.__setattr__(self, "risks", tuple(float(r) for r in self.risks))

    @classmethod
    def from_loss(cls, loss: MarginLoss, n: int, T: int, d: int, eta: float,
                  sigma2: float = 0.0, w_star_norm: float = 0.0,
                  f_star_empirical: float = 0.0, risks=None,
                  pairwise: Optional[bool] = None) -> "BoundInputs":
        """Fill the smoothness constants from the loss certificate.

        ``c3`` follows the pointwise or pairwise definition (the pairwise
        one carries an extra sqrt(e)); ``pairwise`` defaults to the loss's own
        flag.
        """
        pairwise = loss.pairwise if pairwise is None else pairwise
        c2 = c3 = None
        if isinstance(loss.smoothness, Holder):
            c2 = c_alpha_2(loss)
            c3 = holder_c3(loss.alpha, loss.L, pairwise)
        return cls(n=n, T=T, d=d, eta=eta, sigma2=sigma2, L=loss.L, G=loss.G,
                   alpha=loss.alpha, c1=c_alpha_1(loss), c2=c2, c3=c3,
                   w_star_norm=w_star_norm, f_star_empirical=f_star_empirical,
                   risks=risks)


def holder_c3(alpha: float, L: float, pairwise: bool = False) -> float:
    if not 0.0 <= alpha < 1.0:
        raise ValueError("c_{alpha,3} needs alpha in [0,1)")
    base = (1.0 - alpha) / (1.0 + alpha)
    if pairwise:
        base *= E
    return math.sqrt(base) * (2.0 ** (-alpha) * L) ** (1.0 / (1.0 - alpha))


def _risk_prefix(inputs: BoundInputs, t: int) -> np.ndarray:
    if inputs.risks is None:
        raise ValueError("missing per-iterate risks")
    if t < 0:
        raise ValueError("t must be nonnegative")
    if len(inputs.risks) < t:
        raise ValueError(f"missing per-iterate risks: need {t}, have {len(inputs.risks)}")
    r = np.asarray(inputs.risks[:t], dtype=float)
    if np.any(r < 0):
        raise ValueError("risks must be nonnegative")
    return r


def _holder_parts(inputs: BoundInputs, t: int):
    a = inputs.alpha
    if not 0.0 <= a < 1.0:
        raise ValueError("Hölder bound needs alpha in [0,1)")
    if inputs.c3 is None:
        raise ValueError("Hölder bound needs c3")
    r = _risk_prefix(inputs, t)
    # plug-in (E F)^p >= E[F^p] for p <= 1 (Jensen), so this stays an upper bound
    powered = r ** (2.0 * a / (1.0 + a)) if a > 0 else np.ones_like(r)
    floor = inputs.c3 ** 2 * E * t * inputs.eta ** (2.0 / (1.0 - a))
    return floor, float(np.sum(inputs.eta ** 2 * powered))


def stability_bound_smooth(inputs: BoundInputs, t: int) -> float:
    r = _risk_prefix(inputs, t)
    return 8.0 * E * (1.0 + t / inputs.n) * inputs.L / inputs.n * float(np.sum(inputs.eta ** 2 * r))


def stability_bound_holder(inputs: BoundInputs, t: int) -> float:
    floor, s = _holder_parts(inputs, t)
    return floor + 4.0 * E * inputs.c1 ** 2 * (1.0 + t / inputs.n) / inputs.n * s


def stability_bound_pairwise_smooth(inputs: BoundInputs, t: int) -> float:
    r = _risk_prefix(inputs, t)
    return 16.0 * inputs.L * (1.0 + 2.0 * t / inputs.n) * E / inputs.n * float(np.sum(inputs.eta ** 2 * r))


def stability_bound_pairwise_holder(inputs: BoundInputs, t: int) -> float:
    floor, s = _holder_parts(inputs, t)
    return 8.0 * E * inputs.c1 ** 2 * (1.0 + 2.0 * t / inputs.n) / inputs.n * s + floor


def stability_bound(inputs: BoundInputs, t: int, smooth: bool, pairwise: bool = False) -> float:
    if pairwise:
        return (stability_bound_pairwise_smooth if smooth else stability_bound_pairwise_holder)(inputs, t)
    return (stability_bound_smooth if smooth else stability_bound_holder)(inputs, t)


def optimization_bound(inputs: BoundInputs, t: int, smooth: bool) -> float:
    """Upper bound on sum_j eta (E F_S(w_j) - F_S(w*)) for j = 1..t, constant eta.

    The same expression serves both engines.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    eta, w2, fs = inputs.eta, inputs.w_star_norm ** 2, inputs.f_star_empirical
    sd = inputs.sigma2 * inputs.d
    noise = 3.0 * t * eta ** 2 * sd
    if smooth:
        L = inputs.L
        return ((0.5 + 3.0 * L * eta) * w2
                + 3.0 * L * t * (3.0 * eta ** 3 * sd + 2.0 * eta ** 2 * fs)
                + noise)
    a = inputs.alpha
    if not 0.0 <= a < 1.0:
        raise ValueError("Hölder bound needs alpha in [0,1)")
    if inputs.c2 is None:
        raise ValueError("Hölder bound needs c2")
    inner = 2.0 * eta * w2 + t * (6.0 * eta ** 3 * sd + 4.0 * eta ** 2 * fs
                                  + 3.0 * inputs.c2 * eta ** ((3.0 - a) / (1.0 - a)))
    return (0.5 * w2
            + 0.75 * inputs.c1 ** 2 * (t * eta ** 2) ** ((1.0 - a) / (1.0 + a))
            * inner ** (2.0 * a / (1.0 + a))
            + noise)


def self_bounding_violations(loss: MarginLoss, probes: int = 10_000, seed: int = 0,
                             rel_tol: float = 1e-9) -> int:
    """Count random (w, z) probes where ||grad f|| exceeds the self-bound.

    w is uniform in the radius-R ball (R=4 when unconstrained); features lie
    on the radius-B sphere for half the probes and inside the ball otherwise.
    Margin losses only see w through the score, so ||grad f|| = |phi'| ||x||.
    """
    g = RngState(seed, 0).generator
    d = 5
    R = loss.radius if math.isfinite(loss.radius) else 4.0
    B = loss.feature_bound

    def features(k):
        x = uniform_sphere(g, k, d, B)
        inner = g.random(k) < 0.5
        x[inner] *= g.random(int(inner.sum()))[:, None] ** (1.0 / d)
        return x

    def labels(k):
        if loss.kind in ("logistic", "hinge"):
            return g.choice([-1.0, 1.0], size=k)
        return g.uniform(-loss.label_bound, loss.label_bound, size=k)

    w = uniform_sphere(g, probes, d, R) * g.random(probes)[:, None] ** (1.0 / d)
    x, y = features(probes), labels(probes)
    if loss.pairwise:
        x2, y2 = features(probes), labels(probes)
        x = x - x2
        t, active = loss.pair_target(y, y2)
    else:
        t, active = y, np.ones(probes)
    u = np.einsum("ij,ij->i", w, x)
    f = active * loss.phi(u, t)
    gnorm = active * np.abs(loss.dphi(u, t)) * np.linalg.norm(x, axis=1)
    return int(np.sum(gnorm > self_bound_rhs(loss, f) * (1.0 + rel_tol) + 1e-300))


# estimators ----------------------------------------------------------------

@dataclass
class StabilityEstimate:
    t: int
    value: float
    mc_runs: int
    std_err: float
    spot_checks: dict = field(default_factory=dict)  # t -> (value, std_err)
    mean_risks: Optional[np.ndarray] = None  # E[F_S(w_j)], j = 1..T, base trajectories


def hold_path(recorded: Sequence, T: int) -> np.ndarray:
    """Expand (t, value) samples to a length-T path, holding each value forward."""
    if not recorded:
        raise ValueError("no recorded risks")
    ts = np.array([int(t) for t, _ in recorded])
    vs = np.array([float(v) for _, v in recorded])
    pos = np.searchsorted(ts, np.arange(1, T + 1), side="right") - 1
    return vs[np.clip(pos, 0, None)]


def _mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def estimate_stability(problem: Problem, config: SgdConfig, n: int, mc_runs: int = 200,
                       replacement_indices: Optional[Sequence[int]] = None,
                       seed: int = 0, n_indices: int = 8, spot_fractions=(0.25, 0.5),
                       identical: bool = False) -> StabilityEstimate:
    """Mean ||w_{T+1} - w_{T+1}^{(i)}||^2 over runs and replacement indices.

    Each run draws S and a fresh replacement pool S', then for every chosen
    index i runs the original and the perturbed trajectory with the same
    index and noise streams. Indices are 1-based; by default ``n_indices`` of
    them are drawn once from ``seed``. ``identical=True`` replaces z_i by
    itself (a zero control).
    """
    if mc_runs < 10:
        raise ValueError("mc_runs must be >= 10")
    if replacement_indices is None:
        if n_indices > n:
            raise ValueError(f"n={n} too small for {n_indices} replacement indices")
        g = RngState(seed, _PICK_STREAM).generator
        replacement_indices = sorted(int(i) + 1 for i in g.choice(n, n_indices, replace=False))
    idx = [int(i) for i in replacement_indices]
    if not idx or min(idx) < 1 or max(idx) > n:
        raise ValueError(f"replacement indices must lie in [1, {n}]")
    T = config.schedule.T
    spots = sorted({max(1, int(T * f)) for f in spot_fractions})
    per_run, per_spot = [], {s: [] for s in spots}
    risk_sum = np.zeros(T)
    for r in range(mc_runs):
        run_seed = derive_seed(seed, n, r)
        data = problem.sample(n, run_seed)
        fresh = problem.sample(n, derive_seed(seed, n, r, _REPLACEMENT_STREAM))
        base_cfg = replace(config, seed=run_seed, record_every=1, checkpoints=tuple(spots))
        base = run(base_cfg, data)
        risk_sum += hold_path(base.iterate_risks, T)
        quiet = replace(base_cfg, record_every=0)
        diffs, spot_diffs = [], {s: [] for s in spots}
        for i in idx:
            k = i - 1
            other = data if identical else data.replace_row(k, fresh.X[k], fresh.y[k])
            pert = run(quiet, other)
            diffs.append(float(np.sum((base.w_last - pert.w_last) ** 2)))
            for s in spots:
                spot_diffs[s].append(float(np.sum((base.checkpoints[s] - pert.checkpoints[s]) ** 2)))
        per_run.append(np.mean(diffs))
        for s in spots:
            per_spot[s].append(np.mean(spot_diffs[s]))
    value, se = _mean_se(per_run)
    return StabilityEstimate(t=T, value=value, mc_runs=mc_runs, std_err=se,
                             spot_checks={s: _mean_se(v) for s, v in per_spot.items()},
                             mean_risks=risk_sum / mc_runs)


def estimate_generalization_gap(problem: Problem, config: SgdConfig, n: int, mc_runs: int = 50,
                                seed: int = 0,
                                trainer: Optional[Callable[[Dataset, int], np.ndarray]] = None
                                ) -> tuple[float, float]:
    """Monte-Carlo mean and standard error of F(w) - F_S(w) for the trained w.

    ``trainer(data, run_seed)`` overrides the default DP-SGD run; it lets
    callers plug in data-independent outputs as a control.
    """
    if mc_runs < 2:
        raise ValueError("mc_runs must be >= 2")
    gaps = []
    for r in range(mc_runs):
        run_seed = derive_seed(seed, n, r)
        data = problem.sample(n, run_seed)
        if trainer is None:
            w = run(replace(config, seed=run_seed, record_every=0), data).w_priv
        else:
            w = np.asarray(trainer(data, run_seed), dtype=float)
        gaps.append(problem.population_risk(w) - risk_function(problem.loss, data)(w))
    return _mean_se(gaps)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: tuple  # (ln n, ln risk)


def fit_rate(points: Sequence[tuple]) -> RateFit:
    """Least-squares line through (ln n, ln risk)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 4:
        raise ValueError("rate fit needs at least 4 points")
    bad = [n for n, v in pts if not v > 0]
    if bad:
        raise ValueError(f"nonpositive excess risk at n={bad}; increase the Monte-Carlo runs")
    if any(n <= 0 for n, _ in pts):
        raise ValueError("n must be positive")
    x = np.log([n for n, _ in pts])
    y = np.log([v for _, v in pts])
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("rate fit needs distinct n values")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    syy = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if syy == 0 else 1.0 - float(np.sum(resid ** 2)) / syy
    return RateFit(slope, intercept, r2, tuple(zip(x.tolist(), y.tolist())))
