"""Projected DP-SGD for pointwise and pairwise losses, and step-size schedules.

Both engines start at w_1 = 0, draw a fresh uniform index (or ordered
distinct pair) every step, add N(0, sigma2 I) to the sampled gradient, project
onto the ball and return the average of w_1..w_T.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from .losses import Dataset, Holder, MarginLoss, PairwiseLoss, PointwiseLoss, Smooth
from .numerics import (INDEX_STREAM, NOISE_STREAM, RngState, gaussian_matrix,
                       uniform_distinct_pairs, uniform_indices)

REGIMES = ("smooth_general", "smooth_lownoise", "holder_general", "holder_lownoise")
_CHUNK = 4096


@dataclass(frozen=True)
class Schedule:
    eta: float
    T: int
    regime: str
    c: float = 1.0

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if self.T < 1:
            raise ValueError("T must be >= 1")


def _ceil_pow(n: int, exponent: Fraction) -> int:
    """Exact ceil(n ** (p/q)) in integer arithmetic."""
    p, q = exponent.numerator, exponent.denominator
    target = n ** p
    m = max(1, math.ceil(n ** (p / q)) - 2)
    while m ** q < target:
        m += 1
    while m > 1 and (m - 1) ** q >= target:
        m -= 1
    return m


def _as_fraction(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10_000)


def make_schedule(regime: str, n: int, d: int, epsilon: float, delta: float,
                  loss: MarginLoss, c: float = 1.0) -> Schedule:
    """Constant step size and horizon for one of the four regimes.

    T takes the stated order with unit constant (ceiling). The step is capped
    at min(2/L, 1).
    """
    regime = regime.replace("ö", "o")
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if n < 1 or d < 1 or not c > 0:
        raise ValueError("n, d and c must be positive")
    priv = epsilon / math.sqrt(d * math.log(1.0 / delta))
    smooth = isinstance(loss.smoothness, Smooth)
    if regime.startswith("smooth") and not smooth:
        raise ValueError(f"{regime} needs a smooth loss, got {loss.name} with alpha={loss.alpha}")
    if regime.startswith("holder") and not isinstance(loss.smoothness, Holder):
        raise ValueError(f"{regime} needs a Hölder loss (alpha<1), got {loss.name}")

    if regime == "smooth_general":
        eta, T = c * min(1.0 / math.sqrt(n), priv), n
    elif regime == "smooth_lownoise":
        eta, T = c * priv, n
    elif regime == "holder_general":
        a = _as_fraction(loss.alpha)
        if a >= Fraction(1, 2):
            eta, T = c * min(1.0 / math.sqrt(n), priv), n
        else:
            T = _ceil_pow(n, (2 - a) / (1 + a))
            eta = c * min(n ** (3.0 * (float(a) - 1.0) / (2.0 * (1.0 + float(a)))), priv)
    else:
        a = _as_fraction(loss.alpha)
        T = _ceil_pow(n, Fraction(2) / (1 + a))
        af = float(a)
        eta = c * min(n ** ((af * af + 2.0 * af - 3.0) / (2.0 * (1.0 + af))),
                      n * priv / T)
    eta = min(eta, 2.0 / loss.L, 1.0)
    return Schedule(eta=eta, T=int(T), regime=regime, c=c)


@dataclass
class SgdConfig:
    loss: MarginLoss
    schedule: Schedule
    sigma2: float = 0.0
    radius: float = math.inf
    seed: int = 0
    record_every: Optional[int] = None  # None: max(1, T // 256); 0: off
    checkpoints: tuple = ()

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError("sigma2 must be nonnegative")
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def record_interval(self) -> int:
        if self.record_every is None:
            return max(1, self.schedule.T // 256)
        return self.record_every


@dataclass
class RunReport:
    w_priv: np.ndarray
    w_last: np.ndarray
    iterate_risks: list = field(default_factory=list)  # (t, F_S(w_t))
    final_risk: Optional[float] = None
    eta: float = 0.0
    T: int = 0
    sigma2: float = 0.0
    seed: int = 0
    noise_sq_mean: float = 0.0
    wall_time: float = 0.0
    checkpoints: dict = field(default_factory=dict)  # t -> w_t

    def to_dict(self, timing: bool = False) -> dict:
        out = {
            "w_priv": [float(v) for v in self.w_priv],
            "w_last": [float(v) for v in self.w_last],
            "iterate_risks": [[int(t), float(r)] for t, r in self.iterate_risks],
            "final_risk": self.final_risk,
            "eta": self.eta,
            "T": self.T,
            "sigma2": self.sigma2,
            "seed": self.seed,
            "seeds": {"index_stream": [self.seed, INDEX_STREAM],
                      "noise_stream": [self.seed, NOISE_STREAM]},
            "noise_sq_mean": self.noise_sq_mean,
        }
        if timing:
            out["wall_time"] = self.wall_time
        return out


# empirical risks -----------------------------------------------------------

def empirical_risk(loss: PointwiseLoss, w, data: Dataset) -> float:
    if data.n < 1:
        raise ValueError("empty dataset")
    return float(np.mean(loss.values(np.asarray(w, dtype=float), data.X, data.y)))


def empirical_pairwise_risk(loss: PairwiseLoss, w, data: Dataset, block: int = 512) -> float:
    """Average of f(w; z_i, z_j) over all n(n-1) ordered distinct pairs."""
    n = data.n
    if n < 2:
        raise ValueError("pairwise learning needs n >= 2")
    s = data.X @ np.asarray(w, dtype=float)
    y = data.y
    total = 0.0
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        vals = loss.values_from_scores(s[lo:hi, None], y[lo:hi, None], s[None, :], y[None, :])
        rows = np.arange(lo, hi)
        vals[rows - lo, rows] = 0.0
        total += float(vals.sum())
    return total / (n * (n - 1))


def risk_function(loss: MarginLoss, data: Dataset):
    if loss.pairwise:
        return lambda w: empirical_pairwise_risk(loss, w, data)
    return lambda w: empirical_risk(loss, w, data)


# engine --------------------------------------------------------------------

class NonFiniteIterate(RuntimeError):
    pass


def _engine(config: SgdConfig, data: Dataset, pairwise: bool) -> RunReport:
    loss, sched = config.loss, config.schedule
    T, eta = sched.T, sched.eta
    n, d = data.n, data.d
    X, Y = data.X, data.y
    R = config.radius
    R2 = R * R
    sigma = math.sqrt(config.sigma2)
    idx_rng = RngState(config.seed, INDEX_STREAM)
    noise_rng = RngState(config.seed, NOISE_STREAM)
    every = config.record_interval
    risk = risk_function(loss, data) if every else None
    checkpoints = set(int(t) for t in config.checkpoints)
    kind_deriv = loss.dphi_scalar
    auc = pairwise and getattr(loss, "pair_mode", "") == "auc"

    start = time.perf_counter()
    w = np.zeros(d)
    total = np.zeros(d)
    comp = np.zeros(d)  # Kahan compensation across chunks
    risks = []
    saved = {}
    noise_sq = 0.0
    t = 0
    while t < T:
        m = min(_CHUNK, T - t)
        if pairwise:
            ii, jj = uniform_distinct_pairs(idx_rng, n, m)
        else:
            ii = uniform_indices(idx_rng, n, m)
        noise = gaussian_matrix(noise_rng, m, d, sigma) if sigma > 0 else None
        if noise is not None:
            noise_sq += float(np.einsum("ij,ij->", noise, noise))
        buf = np.empty((m, d))
        for k in range(m):
            t += 1
            buf[k] = w
            if every and (t - 1) % every == 0:
                risks.append((t, risk(w)))
            if t in checkpoints:
                saved[t] = w.copy()
            i = ii[k]
            if pairwise:
                j = jj[k]
                if auc:
                    yi, yj = Y[i], Y[j]
                    if yi == yj:
                        g = None
                    else:
                        x = X[i] - X[j]
                        g = kind_deriv(float(x @ w), 0.5 * (yi - yj)) * x
                else:
                    x = X[i] - X[j]
                    g = kind_deriv(float(x @ w), Y[i] - Y[j]) * x
            else:
                x = X[i]
                g = kind_deriv(float(x @ w), Y[i]) * x
            if noise is not None:
                step = noise[k] if g is None else g + noise[k]
            elif g is None:
                continue
            else:
                step = g
            v = w - eta * step
            nv = float(v @ v)
            if nv > R2:
                v *= R / math.sqrt(nv)
            w = v
        if not np.all(np.isfinite(buf)) or not np.all(np.isfinite(w)):
            raise NonFiniteIterate(f"non-finite iterate before step {t}")
        # Kahan-compensated accumulation of chunk sums
        yk = buf.sum(axis=0) - comp
        tk = total + yk
        comp = (tk - total) - yk
        total = tk
    w_priv = total / T
    if math.isfinite(R):
        nrm = float(np.linalg.norm(w_priv))
        if nrm > R:  # rounding only
            w_priv *= R / nrm
    report = RunReport(w_priv=w_priv, w_last=w, iterate_risks=risks, eta=eta, T=T,
                       sigma2=config.sigma2, seed=config.seed,
                       noise_sq_mean=noise_sq / (T * d) if sigma > 0 else 0.0,
                       checkpoints=saved)
    if every:
        report.final_risk = risk(w_priv)
    report.wall_time = time.perf_counter() - start
    return report


def run_pointwise(config: SgdConfig, data: Dataset) -> RunReport:
    if data.n < 1:
        raise ValueError("need at least one example")
    if config.loss.pairwise:
        raise ValueError("run_pointwise needs a pointwise loss")
    return _engine(config, data, pairwise=False)


def run_pairwise(config: SgdConfig, data: Dataset) -> RunReport:
    if data.n < 2:
        raise ValueError("pairwise learning needs n >= 2")
    if not config.loss.pairwise:
        raise ValueError("run_pairwise needs a pairwise loss")
    return _engine(config, data, pairwise=True)


def run(config: SgdConfig, data: Dataset) -> RunReport:
    return (run_pairwise if config.loss.pairwise else run_pointwise)(config, data)
