"""Convex pointwise and pairwise losses with certified constants.

Every builtin loss depends on the model only through a scalar score
``u = w @ x`` (pointwise) or ``u = w @ (x - x')`` (pairwise), so values and
gradients are ``phi(u, t)`` and ``phi'(u, t) * x`` for a scalar link ``phi``
and a target ``t`` derived from the label(s).

Constants (G, L, alpha, M) are computed from the declared feature bound B,
ball radius R and label bound Y when the loss is built. They are never fitted
to data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Union

import numpy as np

_EXP_CLIP = 500.0
_REL_TOL = 1e-9


@dataclass(frozen=True)
class Smooth:
    L: float

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def alpha(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Holder:
    alpha: float
    L: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("Hölder exponent alpha must lie in [0,1)")
        if not self.L > 0:
            raise ValueError("L must be positive")


SmoothnessClass = Union[Smooth, Holder]


@dataclass(frozen=True)
class Example:
    x: np.ndarray
    y: float


# scalar links --------------------------------------------------------------

def _softplus(a):
    # log(1 + e^a) with the exact asymptote a beyond the clip point
    a = np.asarray(a, dtype=float)
    inner = np.log1p(np.exp(np.minimum(a, _EXP_CLIP)))
    return np.where(a > _EXP_CLIP, a, inner)


def _sigmoid(a):
    a = np.clip(np.asarray(a, dtype=float), -_EXP_CLIP, _EXP_CLIP)
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _link_value(kind: str, q: float, u, t):
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind == "logistic":
        return _softplus(-t * u)
    if kind == "square":
        return (u - t) ** 2
    if kind == "hinge":
        return np.maximum(0.0, 1.0 - t * u) ** q
    if kind == "qnorm":
        return np.abs(t - u) ** q
    raise ValueError(kind)


def _link_deriv(kind: str, q: float, u, t):
    u = np.asarray(u, dtype=float)
    t = np.asarray(t, dtype=float)
    if kind == "logistic":
        return -t * _sigmoid(-t * u)
    if kind == "square":
        return 2.0 * (u - t)
    if kind == "hinge":
        h = 1.0 - t * u
        # h == 0 is the kink; 0 is in the subdifferential
        if q == 1.0:
            return np.where(h > 0, -t, 0.0)
        return np.where(h > 0, -q * t * np.maximum(h, 0.0) ** (q - 1.0), 0.0)
    if kind == "qnorm":
        r = t - u
        if q == 1.0:
            return -np.sign(r)
        return -q * np.sign(r) * np.abs(r) ** (q - 1.0)
    raise ValueError(kind)


def _link_deriv_scalar(kind: str, q: float, u: float, t: float) -> float:
    # plain-float twin of _link_deriv for the SGD inner loop
    if kind == "square":
        return 2.0 * (u - t)
    if kind == "logistic":
        a = t * u
        if a >= 0:
            e = math.exp(-min(a, _EXP_CLIP))
            return -t * e / (1.0 + e)
        return -t / (1.0 + math.exp(max(a, -_EXP_CLIP)))
    if kind == "hinge":
        h = 1.0 - t * u
        if h <= 0:
            return 0.0
        return -t if q == 1.0 else -q * t * h ** (q - 1.0)
    if kind == "qnorm":
        r = t - u
        if r == 0:
            return 0.0
        s = 1.0 if r > 0 else -1.0
        return -s if q == 1.0 else -q * s * abs(r) ** (q - 1.0)
    raise ValueError(kind)


# loss objects --------------------------------------------------------------

@dataclass(frozen=True)
class MarginLoss:
    name: str
    kind: str
    q: float
    G: float
    smoothness: SmoothnessClass
    M: float
    feature_bound: float
    radius: float
    label_bound: float

    @property
    def alpha(self) -> float:
        return self.smoothness.alpha

    @property
    def L(self) -> float:
        return self.smoothness.L

    @property
    def is_smooth(self) -> bool:
        return isinstance(self.smoothness, Smooth)

    def with_smoothness(self, smoothness: SmoothnessClass) -> "MarginLoss":
        """Copy with a different smoothness certificate (test hook for
        negative controls)."""
        return replace(self, smoothness=smoothness)

    def phi(self, u, t):
        return _link_value(self.kind, self.q, u, t)

    def dphi(self, u, t):
        return _link_deriv(self.kind, self.q, u, t)

    def dphi_scalar(self, u: float, t: float) -> float:
        return _link_deriv_scalar(self.kind, self.q, u, t)


@dataclass(frozen=True)
class PointwiseLoss(MarginLoss):
    pairwise = False

    def value(self, w, x, y) -> float:
        return float(self.phi(np.dot(w, x), y))

    def gradient(self, w, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return float(self.dphi(np.dot(w, x), y)) * x

    def values(self, w, X, y) -> np.ndarray:
        return self.phi(X @ w, y)


@dataclass(frozen=True)
class PairwiseLoss(MarginLoss):
    """Pairwise loss f(w; z, z') = weight(y, y') * phi(w @ (x - x'), t(y, y')).

    ``auc`` pairs only count discordant labels, with target (y - y')/2; the
    ``diff`` convention regresses on y - y' for every pair.
    """

    pair_mode: str = "auc"
    pairwise = True

    def pair_target(self, y, y2):
        y = np.asarray(y, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.pair_mode == "auc":
            return 0.5 * (y - y2), (y != y2).astype(float)
        return y - y2, np.ones(np.broadcast(y, y2).shape)

    def value(self, w, x, y, x2, y2) -> float:
        t, wt = self.pair_target(y, y2)
        u = np.dot(w, np.asarray(x, dtype=float) - np.asarray(x2, dtype=float))
        return float(wt * self.phi(u, t))

    def gradient(self, w, x, y, x2, y2) -> np.ndarray:
        t, wt = self.pair_target(y, y2)
        diff = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
        if wt == 0:
            return np.zeros_like(diff)
        return float(self.dphi(np.dot(w, diff), t)) * diff

    def values_from_scores(self, s, y, s2, y2):
        t, wt = self.pair_target(y, y2)
        out = self.phi(np.asarray(s) - np.asarray(s2), t)
        return np.where(wt > 0, out, 0.0)


Loss = Union[PointwiseLoss, PairwiseLoss]


def _check_q(q: float) -> float:
    q = float(q)
    if not 1.0 <= q <= 2.0:
        raise ValueError("q must lie in [1,2]")
    return q


def _power_class(q: float, L: float) -> SmoothnessClass:
    # q = 2 is Lipschitz-smooth, q in [1,2) is (q-1)-Hölder
    return Smooth(L) if q == 2.0 else Holder(q - 1.0, L)


def _certify(kind: str, q: float, B: float, R: float, Y: float):
    """(G, smoothness, M) for a margin link on features of norm <= B,
    weights of norm <= R and targets of magnitude <= Y."""
    if kind == "logistic":
        return B, Smooth(B * B / 4.0), math.log(2.0)
    if kind == "square":
        return 2.0 * B * (B * R + Y), Smooth(2.0 * B * B), Y * Y
    if kind == "hinge":
        G = q * B * (1.0 + B * R) ** (q - 1.0)
        return G, _power_class(q, q * B ** q), 1.0
    if kind == "qnorm":
        G = q * B * (B * R + Y) ** (q - 1.0)
        return G, _power_class(q, q * 2.0 ** (2.0 - q) * B ** q), Y ** q
    raise ValueError(kind)


POINTWISE_NAMES = ("logistic", "least_squares", "hinge", "qnorm")
PAIRWISE_NAMES = ("auc_logistic", "auc_hinge", "pair_squared")


def builtin_pointwise(name: str, feature_bound: float = 1.0, radius: float = 1.0,
                      label_bound: float = 1.0, q: float = 1.0) -> PointwiseLoss:
    """Build a registered pointwise loss.

    ``logistic`` and ``hinge`` expect labels in {-1, +1}; ``least_squares`` and
    ``qnorm`` take real labels with ``|y| <= label_bound``.
    """
    B, R, Y = float(feature_bound), float(radius), float(label_bound)
    if not (B > 0 and R > 0 and Y >= 0):
        raise ValueError("bounds must be positive")
    if math.isinf(R) and name != "logistic":
        raise ValueError(f"{name} needs a finite radius to certify its Lipschitz constant")
    if name == "logistic":
        kind, q, Y = "logistic", 1.0, 1.0
    elif name == "least_squares":
        kind, q = "square", 2.0
    elif name in ("hinge", "hinge_q"):
        kind, q, Y = "hinge", _check_q(q), 1.0
    elif name in ("qnorm", "qnorm_q"):
        kind, q = "qnorm", _check_q(q)
    else:
        raise ValueError(f"unknown pointwise loss {name!r}")
    G, smooth, M = _certify(kind, q, B, R, Y)
    return PointwiseLoss(name=name, kind=kind, q=q, G=G, smoothness=smooth, M=M,
                         feature_bound=B, radius=R, label_bound=Y)


def builtin_pairwise(name: str, feature_bound: float = 1.0, radius: float = 1.0,
                     label_bound: float = 1.0, q: float = 1.0) -> PairwiseLoss:
    """Build a registered pairwise loss. Pair features x - x' have norm <= 2B."""
    B, R, Y = float(feature_bound), float(radius), float(label_bound)
    if not (B > 0 and R > 0 and Y >= 0):
        raise ValueError("bounds must be positive")
    if math.isinf(R) and name != "auc_logistic":
        raise ValueError(f"{name} needs a finite radius to certify its Lipschitz constant")
    if name == "auc_logistic":
        kind, q, mode, Y = "logistic", 1.0, "auc", 1.0
    elif name in ("auc_hinge", "auc_hinge_q"):
        kind, q, mode, Y = "hinge", _check_q(q), "auc", 1.0
    elif name == "pair_squared":
        kind, q, mode = "square", 2.0, "diff"
    else:
        raise ValueError(f"unknown pairwise loss {name!r}")
    target_bound = 1.0 if mode == "auc" else 2.0 * Y
    G, smooth, M = _certify(kind, q, 2.0 * B, R, target_bound)
    return PairwiseLoss(name=name, kind=kind, q=q, G=G, smoothness=smooth, M=M,
                        feature_bound=B, radius=R, label_bound=Y, pair_mode=mode)


def make_loss(name: str, **bounds) -> Loss:
    if name in PAIRWISE_NAMES or name == "auc_hinge_q":
        return builtin_pairwise(name, **bounds)
    return builtin_pointwise(name, **bounds)


# self-bounding constants ---------------------------------------------------

def c_alpha_1(loss: MarginLoss) -> float:
    s = loss.smoothness
    if isinstance(s, Smooth):
        return math.sqrt(2.0 * s.L)
    a, L = s.alpha, s.L
    if a == 0.0:
        return loss.M + L
    return (1.0 + 1.0 / a) ** (a / (1.0 + a)) * L ** (1.0 / (1.0 + a))


def c_alpha_2(loss: MarginLoss) -> float:
    s = loss.smoothness
    if isinstance(s, Smooth):
        raise ValueError("c_{alpha,2} undefined for alpha=1")
    c1 = c_alpha_1(loss)
    a = s.alpha
    if a == 0.0:
        return c1 * c1
    return ((1.0 - a) / (1.0 + a) * (2.0 * a / (1.0 + a)) ** (2.0 * a / (1.0 - a))
            * c1 ** ((2.0 + 2.0 * a) / (1.0 - a)))


def c_alpha_3(loss: MarginLoss) -> float:
    s = loss.smoothness
    if isinstance(s, Smooth):
        raise ValueError("c_{alpha,3} undefined for alpha=1")
    a = s.alpha
    return math.sqrt((1.0 - a) / (1.0 + a)) * (2.0 ** (-a) * s.L) ** (1.0 / (1.0 - a))


def self_bound_rhs(loss: MarginLoss, value):
    """Right-hand side of the self-bounding inequality at loss value(s) ``value``."""
    v = np.maximum(np.asarray(value, dtype=float), 0.0)
    if loss.is_smooth:
        out = np.sqrt(2.0 * loss.L * v)
    else:
        a = loss.alpha
        out = c_alpha_1(loss) * v ** (a / (1.0 + a))
    return float(out) if out.ndim == 0 else out


def check_self_bounding(loss: MarginLoss, w, *z) -> bool:
    """Whether ||grad f|| <= self-bound(f) at (w, z) or (w, z, z').

    ``z`` is an :class:`Example` (twice for pairwise losses) or the raw
    ``x, y`` / ``x, y, x2, y2`` arguments.
    """
    args = []
    for item in z:
        args.extend((item.x, item.y) if isinstance(item, Example) else (item,))
    f = loss.value(w, *args)
    g = float(np.linalg.norm(loss.gradient(w, *args)))
    return g <= self_bound_rhs(loss, f) * (1.0 + _REL_TOL) + 1e-300


@dataclass(frozen=True)
class Dataset:
    """n examples as a feature matrix and a label vector."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be (n, d) and y must be (n,)")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Example:
        return Example(self.X[i], float(self.y[i]))

    def replace_row(self, i: int, x, y) -> "Dataset":
        X = self.X.copy()
        Y = self.y.copy()
        X[i] = x
        Y[i] = y
        return Dataset(X, Y)
