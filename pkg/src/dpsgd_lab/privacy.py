"""RDP accounting and noise calibration for the DP-SGD engines.

Per-step privacy comes from the closed-form subsampled Gaussian RDP bound
``rho = 3.5 p^2 lam Delta^2 / sigma^2`` (valid only under its two side
conditions), steps compose additively and the total converts to
``(rho + log(1/delta)/(lam - 1), delta)``-DP. All logarithms are natural.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Literal, Optional

import numpy as np

Which = Literal["pointwise", "pairwise"]

# sigma^2 coefficient of the calibration formula, per algorithm
_COEF = {"pointwise": 14.0, "pairwise": 56.0}
# sampling rate numerator: one point (1/n) or one pair touching a point (2/n)
_RATE = {"pointwise": 1.0, "pairwise": 2.0}

BETA_GRID_STEP = 1e-3


class PrivacyError(ValueError):
    """A privacy claim was requested outside the hypotheses that make it sound."""


@dataclass(frozen=True)
class DpTarget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0,1)")


@dataclass(frozen=True)
class RdpClaim:
    lam: float
    rho: float

    def __post_init__(self):
        if not self.lam > 1:
            raise ValueError("Rényi order must exceed 1")
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")


@dataclass(frozen=True)
class Sensitivity:
    delta2: float

    def __post_init__(self):
        if not self.delta2 >= 0:
            raise ValueError("sensitivity must be nonnegative")


@dataclass(frozen=True)
class Calibration:
    beta: float
    sigma2: float
    lam: float
    feasible: bool
    which: Which
    n: int = 0
    T: int = 0
    G: float = 0.0
    epsilon: float = 0.0
    delta: float = 0.0
    reason: str = ""


def gradient_sensitivity(G: float) -> Sensitivity:
    """l2-sensitivity of one sampled gradient under one-record replacement."""
    if not G > 0:
        raise ValueError("G must be positive")
    return Sensitivity(2.0 * G)


def subsampled_rdp(p: float, lam: float, sensitivity: Sensitivity, sigma2: float) -> RdpClaim:
    if not 0 < p <= 1:
        raise ValueError("sampling rate must lie in (0,1]")
    if not lam > 1:
        raise ValueError("Rényi order must exceed 1")
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    d2 = sensitivity.delta2 ** 2
    if d2 == 0:
        return RdpClaim(lam, 0.0)
    if sigma2 < 0.67 * d2:
        raise PrivacyError(
            f"noise condition violated: sigma2={sigma2:.6g} < 0.67*Delta^2={0.67 * d2:.6g}")
    arg = 1.0 / (lam * p * (1.0 + sigma2 / d2))
    if arg <= 0 or lam - 1.0 > 2.0 * sigma2 / (3.0 * d2) * math.log(arg):
        raise PrivacyError(
            f"order condition violated: lambda-1={lam - 1:.6g} exceeds "
            f"(2 sigma2/3 Delta^2) log(1/(lambda p (1+sigma2/Delta^2)))")
    return RdpClaim(lam, 3.5 * p * p * lam * d2 / sigma2)


def compose(claims: Iterable[RdpClaim], lam: Optional[float] = None) -> RdpClaim:
    """Add RDP parameters at a shared order. Empty input needs ``lam``."""
    claims = list(claims)
    if not claims:
        if lam is None:
            raise ValueError("empty composition needs an explicit order")
        return RdpClaim(lam, 0.0)
    order = claims[0].lam if lam is None else lam
    if any(c.lam != order for c in claims):
        raise ValueError("all claims must share the same Rényi order")
    return RdpClaim(order, math.fsum(c.rho for c in claims))


def rdp_to_dp(claim: RdpClaim, delta: float) -> float:
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0,1)")
    return claim.rho + math.log(1.0 / delta) / (claim.lam - 1.0)


def rdp_order(target: DpTarget, beta: float) -> float:
    return math.log(1.0 / target.delta) / ((1.0 - beta) * target.epsilon) + 1.0


def calibrated_sigma2(n: int, T: int, G: float, target: DpTarget, beta, which: Which = "pointwise"):
    """Noise variance of the algorithm's calibration formula (array-friendly in beta)."""
    lam = np.log(1.0 / target.delta) / ((1.0 - beta) * target.epsilon) + 1.0
    return _COEF[which] * G * G * T / (beta * n * n * target.epsilon) * lam


def _conditions(n, G, sigma2, lam, which: Which):
    """Both feasibility conditions, vectorised over sigma2/lam arrays."""
    s = np.asarray(sigma2, dtype=float) / (G * G)
    lam = np.asarray(lam, dtype=float)
    noise_ok = s >= 2.68
    arg = n / (_RATE[which] * lam * (1.0 + s / 4.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        logarg = np.where(arg > 0, np.log(np.where(arg > 0, arg, 1.0)), -np.inf)
        order_ok = (arg > 1.0) & (lam - 1.0 <= s / 6.0 * logarg)
    return noise_ok & order_ok


def _calibrate(n, T, G, target, beta, which: Which) -> Calibration:
    if n < 1 or T < 1:
        raise ValueError("n and T must be positive")
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0,1)")
    lam = rdp_order(target, beta)
    sigma2 = float(calibrated_sigma2(n, T, G, target, beta, which))
    reason = ""
    if which == "pairwise" and n < 2:
        feasible, reason = False, "pairwise learning needs n >= 2"
    else:
        feasible = bool(_conditions(n, G, sigma2, lam, which))
        if not feasible:
            reason = ("sigma2 < 2.68 G^2" if sigma2 < 2.68 * G * G
                      else "order condition fails")
    return Calibration(beta=float(beta), sigma2=sigma2, lam=lam, feasible=feasible,
                       which=which, n=n, T=T, G=G, epsilon=target.epsilon,
                       delta=target.delta, reason=reason)


def calibrate_pointwise(n: int, T: int, G: float, target: DpTarget, beta: float) -> Calibration:
    return _calibrate(n, T, G, target, beta, "pointwise")


def calibrate_pairwise(n: int, T: int, G: float, target: DpTarget, beta: float) -> Calibration:
    return _calibrate(n, T, G, target, beta, "pairwise")


def calibrate(n, T, G, target, beta, which: Which) -> Calibration:
    return _calibrate(n, T, G, target, beta, which)


def beta_grid() -> np.ndarray:
    """Candidate beta values: the 1e-3 linear grid merged with a log-spaced
    grid (40 points per decade) from 1e-9 up to 0.1.

    Large epsilon with T ~ n forces small beta to keep sigma2 >= 2.68 G^2,
    where the linear grid is either empty or too coarse (0.001 -> 0.002 halves
    sigma2).
    """
    linear = np.round(np.arange(1, 1000) * BETA_GRID_STEP, 12)
    geometric = np.logspace(-9, -1, 321)
    return np.unique(np.concatenate([geometric, linear]))


def find_beta(n: int, T: int, G: float, target: DpTarget, which: Which = "pointwise") -> Calibration:
    """Scan the beta grid and return the feasible calibration with least sigma2.

    When nothing is feasible the returned calibration has ``feasible=False``
    and carries the least-noise grid point for display.
    """
    betas = beta_grid()
    lam = np.log(1.0 / target.delta) / ((1.0 - betas) * target.epsilon) + 1.0
    sig = calibrated_sigma2(n, T, G, target, betas, which)
    if which == "pairwise" and n < 2:
        ok = np.zeros_like(betas, dtype=bool)
    else:
        ok = _conditions(n, G, sig, lam, which)
    if ok.any():
        idx = np.flatnonzero(ok)
        k = idx[np.argmin(sig[idx])]
        return _calibrate(n, T, G, target, float(betas[k]), which)
    k = int(np.argmin(sig))
    cal = _calibrate(n, T, G, target, float(betas[k]), which)
    return replace(cal, feasible=False, reason="no feasible beta on the grid")


def min_epsilon_for_beta(n: int) -> float:
    """Sufficient epsilon for a feasible beta when T = n and delta = 1/n^2."""
    if n <= 18:
        raise ValueError("threshold requires n > 18")
    c = n ** (1.0 / 3.0) - 1.0
    return (7.0 * c + 4.0 * math.log(n) * n + 7.0) / (2.0 * n * c)


def verify_run_privacy(cal: Calibration, n: int, T: int, G: float,
                       which: Which = "pointwise") -> tuple[float, float]:
    """Re-derive the run's (epsilon, delta) from the accountant primitives.

    Raises :class:`PrivacyError` if the calibration is infeasible or any
    per-step claim falls outside the subsampling bound's hypotheses.
    """
    if not cal.feasible:
        raise PrivacyError(f"calibration infeasible: {cal.reason}")
    p = _RATE[which] / n
    if p > 1:
        raise PrivacyError("sampling rate exceeds 1")
    step = subsampled_rdp(p, cal.lam, gradient_sensitivity(G), cal.sigma2)
    total = RdpClaim(cal.lam, step.rho * T)
    return rdp_to_dp(total, cal.delta), cal.delta
