"""Synthetic learning problems with a known minimizer and population risk.

Features are uniform on the sphere of radius B. Quadratic risks have closed
forms; the others use a frozen Monte-Carlo sample (drawn once from the problem
seed) as ground truth, with label randomness integrated out analytically
where the label law is known.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special

from .losses import Dataset, MarginLoss, builtin_pairwise, builtin_pointwise
from .numerics import DATA_STREAM, RngState, uniform_sphere

ORACLE_SAMPLES = 1_000_000
_PROBLEM_STREAM = 7
_ORACLE_STREAM = 8


@dataclass
class Problem:
    name: str
    loss: MarginLoss
    d: int
    w_star: np.ndarray
    f_star: float
    feature_bound: float
    label_bound: float
    radius: float
    sampler: Callable[[np.random.Generator, int], tuple]
    risk: Callable[[np.ndarray], float]
    oracle_samples: int = 0  # 0 means closed form
    oracle_stderr: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def pairwise(self) -> bool:
        return self.loss.pairwise

    def sample(self, n: int, seed: int) -> Dataset:
        X, y = self.sampler(RngState(seed, DATA_STREAM).generator, n)
        return Dataset(X, y)

    def population_risk(self, w) -> float:
        return float(self.risk(np.asarray(w, dtype=float)))

    def excess_risk(self, w) -> float:
        return self.population_risk(w) - self.f_star


def _direction(seed: int, d: int) -> np.ndarray:
    g = RngState(seed, _PROBLEM_STREAM).generator
    return uniform_sphere(g, 1, d, 1.0)[0]


def _oracle_gen(seed: int) -> np.random.Generator:
    return RngState(seed, _ORACLE_STREAM).generator


def _sphere_sampler(B: float, d: int):
    def draw(g, n):
        return uniform_sphere(g, n, d, B)
    return draw


# realizable quadratics ------------------------------------------------------

def realizable_least_squares(d: int = 10, B: float = 1.0, R: float = 1.0, seed: int = 0) -> Problem:
    """y = <w*, x> exactly, ||w*|| = R/2; risk is ||w - w*||^2 B^2 / d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    w_star = _direction(seed, d) * (R / 2.0)
    Y = B * R / 2.0
    loss = builtin_pointwise("least_squares", feature_bound=B, radius=R, label_bound=Y)
    draw_x = _sphere_sampler(B, d)

    def sampler(g, n):
        X = draw_x(g, n)
        return X, X @ w_star

    def risk(w):
        v = w - w_star
        return float(v @ v) * B * B / d

    return Problem("realizable_least_squares", loss, d, w_star, 0.0, B, Y, R, sampler, risk,
                   params=dict(d=d, B=B, R=R, seed=seed))


def realizable_pairwise(d: int = 10, B: float = 1.0, R: float = 1.0, seed: int = 0) -> Problem:
    """Pairwise analogue for ``pair_squared``: risk is 2 ||w - w*||^2 B^2 / d."""
    base = realizable_least_squares(d, B, R, seed)
    loss = builtin_pairwise("pair_squared", feature_bound=B, radius=R, label_bound=base.label_bound)
    w_star = base.w_star

    def risk(w):
        v = w - w_star
        return 2.0 * float(v @ v) * B * B / d

    return Problem("realizable_pairwise", loss, d, w_star, 0.0, B, base.label_bound, R,
                   base.sampler, risk, params=dict(d=d, B=B, R=R, seed=seed))


# separable hinge problems ---------------------------------------------------

def _margin_acceptance(d: int, margin: float, B: float) -> float:
    r = margin / B
    if r >= 1:
        return 0.0
    if d == 1:
        return 1.0
    # <u, x>^2 / B^2 ~ Beta(1/2, (d-1)/2) for x uniform on the sphere
    return float(special.betaincc(0.5, (d - 1) / 2.0, r * r))


def _margin_sampler(u: np.ndarray, margin: float, B: float, d: int):
    accept = _margin_acceptance(d, margin, B)
    if accept < 0.01:
        raise ValueError(f"margin {margin} accepts only {accept:.2%} of draws; use a larger margin")
    cut = margin * (1.0 + 1e-12)

    def draw(g, n):
        out = np.empty((n, d))
        filled = 0
        while filled < n:
            need = n - filled
            X = uniform_sphere(g, int(need / accept * 1.1) + 16, d, B)
            X = X[np.abs(X @ u) >= cut][:need]
            out[filled:filled + len(X)] = X
            filled += len(X)
        y = np.sign(out @ u)
        return out, y

    return draw


def separable_hinge(d: int = 10, margin: float = 0.1, B: float = 1.0, seed: int = 0,
                    R: Optional[float] = None, oracle_samples: int = ORACLE_SAMPLES,
                    q: float = 1.0) -> Problem:
    """q-powered hinge classification with |<u, x>| >= margin and w* = u / margin.

    q=1 is the plain hinge (alpha=0); q in (1, 2) gives alpha = q - 1.
    """
    if not margin > 0:
        raise ValueError("margin must be positive")
    u = _direction(seed, d)
    w_star = u / margin
    R = 2.0 * float(np.linalg.norm(w_star)) if R is None else float(R)
    if np.linalg.norm(w_star) > R:
        raise ValueError("radius must contain w*")
    loss = builtin_pointwise("hinge" if q == 1.0 else "hinge_q", feature_bound=B, radius=R, q=q)
    draw = _margin_sampler(u, margin, B, d)
    cache = {}

    def oracle():
        if "X" not in cache:
            cache["X"], cache["y"] = draw(_oracle_gen(seed), oracle_samples)
        return cache["X"], cache["y"]

    def risk(w):
        X, y = oracle()
        return float(np.mean(loss.values(w, X, y)))

    return Problem("separable_hinge", loss, d, w_star, 0.0, B, 1.0, R, draw, risk,
                   oracle_samples=oracle_samples,
                   params=dict(d=d, margin=margin, B=B, seed=seed, R=R, q=q))


def separable_auc(d: int = 10, margin: float = 0.1, B: float = 1.0, seed: int = 0,
                  R: Optional[float] = None, oracle_samples: int = ORACLE_SAMPLES,
                  q: float = 1.0) -> Problem:
    """AUC hinge on margin-separated labels; w* = u / (2 margin)."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    u = _direction(seed, d)
    w_star = u / (2.0 * margin)
    R = 2.0 * float(np.linalg.norm(w_star)) if R is None else float(R)
    if np.linalg.norm(w_star) > R:
        raise ValueError("radius must contain w*")
    loss = builtin_pairwise("auc_hinge" if q == 1.0 else "auc_hinge_q", feature_bound=B,
                            radius=R, q=q)
    draw = _margin_sampler(u, margin, B, d)
    cache = {}

    def oracle():
        if "Z" not in cache:
            g = _oracle_gen(seed)
            X1, y1 = draw(g, oracle_samples)
            X2, y2 = draw(g, oracle_samples)
            keep = y1 != y2
            # only discordant pairs contribute; store them oriented as (+, -)
            cache["Z"] = (X1 - X2)[keep] * y1[keep, None]
            cache["frac"] = keep.mean()
        return cache["Z"], cache["frac"]

    def risk(w):
        Z, frac = oracle()
        return float(frac * np.mean(np.maximum(0.0, 1.0 - Z @ w) ** q))

    return Problem("separable_auc", loss, d, w_star, 0.0, B, 1.0, R, draw, risk,
                   oracle_samples=oracle_samples,
                   params=dict(d=d, margin=margin, B=B, seed=seed, R=R, q=q))


# noisy logistic problems ----------------------------------------------------

def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _softplus(a):
    return np.logaddexp(0.0, a)


def _minimize_weighted_logistic(Z, a, b, R, tol=1e-10, max_iter=100):
    """Minimise mean(a softplus(-Z w) + b softplus(Z w)) over ||w|| <= R.

    Newton steps with backtracking; falls back to projected gradient when the
    unconstrained minimiser leaves the ball.
    """
    N, d = Z.shape

    def obj(w):
        s = Z @ w
        return float(np.mean(a * _softplus(-s) + b * _softplus(s)))

    def grad_hess(w):
        s = Z @ w
        sg = _sigmoid(s)
        r = (a + b) * sg - a
        g = Z.T @ r / N
        h = (Z * ((a + b) * sg * (1 - sg))[:, None]).T @ Z / N
        return g, h

    w = np.zeros(d)
    f = obj(w)
    for _ in range(max_iter):
        g, h = grad_hess(w)
        if np.linalg.norm(g) <= tol:
            break
        step = np.linalg.solve(h + 1e-12 * np.eye(d), g)
        t, accepted = 1.0, False
        while t > 1e-10:
            cand = w - t * step
            fc = obj(cand)
            if fc <= f - 1e-4 * t * float(g @ step):
                accepted = True
                break
            t *= 0.5
        if not accepted:  # at the rounding floor of the objective
            break
        w, f = cand, fc
        if np.linalg.norm(w) > 2.0 * R:  # heading for the boundary; hand over
            break
    if np.linalg.norm(w) <= R:
        return w
    # boundary solution: projected gradient with a Lipschitz step
    L = float(np.max(np.sum(Z * Z, axis=1))) * float(np.max(a + b)) / 4.0
    w = w * (R / np.linalg.norm(w))
    for _ in range(20000):
        g, _h = grad_hess(w)
        v = w - g / L
        nv = np.linalg.norm(v)
        if nv > R:
            v *= R / nv
        if np.linalg.norm(v - w) * L <= 1e-6:
            w = v
            break
        w = v
    return w


def _logistic_labels(d, B, R, label_flip, seed):
    """P(y = +1 | x) and a sampler for flipped logistic-model labels."""
    if not 0.0 <= label_flip <= 0.5:
        raise ValueError("label_flip must lie in [0, 0.5]")
    w_true = _direction(seed, d) * (R / 2.0)
    draw_x = _sphere_sampler(B, d)

    def p_pos(X):
        return (1.0 - 2.0 * label_flip) * _sigmoid(X @ w_true) + label_flip

    def sampler(g, n):
        X = draw_x(g, n)
        y = np.where(g.random(n) < p_pos(X), 1.0, -1.0)
        return X, y

    return p_pos, sampler


def noisy_logistic(d: int = 10, B: float = 1.0, R: float = 4.0, label_flip: float = 0.1,
                   seed: int = 0, oracle_samples: int = ORACLE_SAMPLES) -> Problem:
    """Logistic-model labels in {-1, +1} flipped with probability ``label_flip``.

    The generating direction has norm R/2. The oracle averages the exact
    conditional expected loss over a frozen feature sample; w* minimises that
    oracle over the ball.
    """
    loss = builtin_pointwise("logistic", feature_bound=B, radius=R)
    p_pos, sampler = _logistic_labels(d, B, R, label_flip, seed)
    Xo = uniform_sphere(_oracle_gen(seed), oracle_samples, d, B)
    p = p_pos(Xo)
    q = 1.0 - p

    def risk(w):
        s = Xo @ w
        return float(np.mean(p * _softplus(-s) + q * _softplus(s)))

    w_star = _minimize_weighted_logistic(Xo, p, q, R)
    s = Xo @ w_star
    per = p * _softplus(-s) + q * _softplus(s)
    return Problem("noisy_logistic", loss, d, w_star, float(per.mean()), B, 1.0, R, sampler, risk,
                   oracle_samples=oracle_samples,
                   oracle_stderr=float(per.std() / math.sqrt(oracle_samples)),
                   params=dict(d=d, B=B, R=R, label_flip=label_flip, seed=seed))


def noisy_pairwise_logistic(d: int = 10, B: float = 1.0, R: float = 4.0, label_flip: float = 0.1,
                            seed: int = 0, oracle_samples: int = ORACLE_SAMPLES) -> Problem:
    """Pairwise AUC-logistic counterpart of :func:`noisy_logistic`."""
    loss = builtin_pairwise("auc_logistic", feature_bound=B, radius=R)
    p_pos, sampler = _logistic_labels(d, B, R, label_flip, seed)
    g = _oracle_gen(seed)
    X1 = uniform_sphere(g, oracle_samples, d, B)
    X2 = uniform_sphere(g, oracle_samples, d, B)
    p1, p2 = p_pos(X1), p_pos(X2)
    Z = X1 - X2
    del X1, X2
    a = p1 * (1.0 - p2)  # y = +1, y' = -1
    b = (1.0 - p1) * p2  # y = -1, y' = +1

    def risk(w):
        s = Z @ w
        return float(np.mean(a * _softplus(-s) + b * _softplus(s)))

    w_star = _minimize_weighted_logistic(Z, a, b, R)
    s = Z @ w_star
    per = a * _softplus(-s) + b * _softplus(s)
    return Problem("noisy_pairwise_logistic", loss, d, w_star, float(per.mean()), B, 1.0, R,
                   sampler, risk, oracle_samples=oracle_samples,
                   oracle_stderr=float(per.std() / math.sqrt(oracle_samples)),
                   params=dict(d=d, B=B, R=R, label_flip=label_flip, seed=seed))


PROBLEMS = {
    "realizable_least_squares": realizable_least_squares,
    "realizable_pairwise": realizable_pairwise,
    "separable_hinge": separable_hinge,
    "separable_auc": separable_auc,
    "noisy_logistic": noisy_logistic,
    "noisy_pairwise_logistic": noisy_pairwise_logistic,
}


def make_problem(name: str, **params) -> Problem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)
