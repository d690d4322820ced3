"""Strict TOML configs for the ``train``/``stability``/``gap``/``bounds`` and
``sweep`` subcommands.

Unknown keys are rejected and every violation is reported at once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .experiments import SweepSpec
from .losses import PAIRWISE_NAMES, POINTWISE_NAMES
from .problems import PROBLEMS
from .sgd import REGIMES

# loss name -> problem used when the config names none
DEFAULT_PROBLEM = {
    "least_squares": "realizable_least_squares",
    "logistic": "noisy_logistic",
    "hinge": "separable_hinge",
    "hinge_q": "separable_hinge",
    "pair_squared": "realizable_pairwise",
    "auc_hinge": "separable_auc",
    "auc_hinge_q": "separable_auc",
    "auc_logistic": "noisy_pairwise_logistic",
}
_HINGE = {"hinge", "hinge_q", "auc_hinge", "auc_hinge_q"}
_TRAIN_KEYS = ("loss", "regime", "n", "d", "epsilon", "delta", "radius", "seed", "c",
               "sigma2-override", "alpha", "problem", "problem-params")


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class TrainConfig:
    loss: str
    regime: str
    n: int
    d: int = 10
    epsilon: float = 1.0
    delta: float = 1e-5
    radius: Optional[float] = None
    seed: int = 0
    c: float = 1.0
    sigma2_override: Optional[float] = None
    alpha: Optional[float] = None
    problem: Optional[str] = None
    problem_params: dict = field(default_factory=dict)

    @property
    def problem_name(self) -> str:
        return self.problem or DEFAULT_PROBLEM[self.loss]

    def problem_kwargs(self) -> dict:
        kw = dict(self.problem_params)
        kw["d"] = self.d
        kw["seed"] = kw.get("seed", 0)
        if self.radius is not None:
            kw["R"] = self.radius
        if self.alpha is not None:
            kw["q"] = 1.0 + self.alpha
        return kw

    def to_toml(self) -> str:
        """Canonical TOML echo; parses back to an equal config."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or f.name == "problem_params":
                continue
            out.append(f"{f.name.replace('_', '-')} = {_toml_value(v)}")
        if self.problem_params:
            out.append("")
            out.append("[problem-params]")
            for k in sorted(self.problem_params):
                out.append(f"{k} = {_toml_value(self.problem_params[k])}")
        return "\n".join(out) + "\n"


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot encode {type(v).__name__}")


def _load(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None


def _number(doc, key, errs, kind=float, default=None):
    if key not in doc:
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errs.append(f"{key} must be a number")
        return default
    if kind is int:
        if isinstance(v, float) and not v.is_integer():
            errs.append(f"{key} must be an integer")
            return default
        return int(v)
    return float(v)


def parse_config(text: str) -> TrainConfig:
    """Parse and validate a training config, collecting every violation."""
    doc = _load(text)
    errs = [f"unknown key {k!r}" for k in doc if k not in _TRAIN_KEYS]
    for key in ("loss", "regime", "n"):
        if key not in doc:
            errs.append(f"missing required key {key!r}")

    loss = doc.get("loss")
    if loss is not None and loss not in POINTWISE_NAMES + PAIRWISE_NAMES + ("hinge_q", "auc_hinge_q"):
        errs.append(f"unknown loss {loss!r}")
    regime = doc.get("regime")
    if isinstance(regime, str):
        regime = regime.replace("ö", "o")
    if regime is not None and regime not in REGIMES:
        errs.append(f"unknown regime {regime!r}; choose from {', '.join(REGIMES)}")

    n = _number(doc, "n", errs, int)
    d = _number(doc, "d", errs, int, 10)
    eps = _number(doc, "epsilon", errs, float, 1.0)
    delta = _number(doc, "delta", errs, float, 1e-5)
    radius = _number(doc, "radius", errs, float)
    seed = _number(doc, "seed", errs, int, 0)
    c = _number(doc, "c", errs, float, 1.0)
    s2 = _number(doc, "sigma2-override", errs, float)
    alpha = _number(doc, "alpha", errs, float)

    if n is not None and n < 1:
        errs.append("n must be >= 1")
    if d is not None and d < 1:
        errs.append("d must be >= 1")
    if eps is not None and not eps > 0:
        errs.append("epsilon must be positive")
    if delta is not None and not 0.0 < delta < 1.0:
        errs.append("delta must lie in (0,1)")
    if radius is not None and not radius > 0:
        errs.append("radius must be positive")
    if seed is not None and not 0 <= seed < 2 ** 63:
        errs.append("seed must lie in [0, 2^63)")
    if c is not None and not c > 0:
        errs.append("c must be positive")
    if s2 is not None and not s2 >= 0:
        errs.append("sigma2-override must be nonnegative")
    if alpha is not None:
        if isinstance(regime, str) and regime.startswith("holder") and not 0.0 <= alpha < 1.0:
            errs.append("alpha must lie in [0,1) for Hölder smoothness (alpha=1 is the smooth case)")
        elif not 0.0 <= alpha <= 1.0:
            errs.append("alpha must lie in [0,1]")
        if loss is not None and loss not in _HINGE:
            errs.append("alpha is only adjustable for hinge-type losses (q = 1 + alpha)")

    problem = doc.get("problem")
    if problem is not None and problem not in PROBLEMS:
        errs.append(f"unknown problem {problem!r}")
    params = doc.get("problem-params", {})
    if not isinstance(params, dict):
        errs.append("problem-params must be a table")
        params = {}
    if loss in DEFAULT_PROBLEM and problem is not None and problem in PROBLEMS:
        if DEFAULT_PROBLEM[loss] != problem:
            errs.append(f"problem {problem!r} does not use loss {loss!r}")
    if loss is not None and loss not in DEFAULT_PROBLEM and not errs:
        errs.append(f"no synthetic problem for loss {loss!r}")
    if loss in ("least_squares", "logistic", "pair_squared", "auc_logistic") and \
            isinstance(regime, str) and regime.startswith("holder"):
        errs.append(f"{regime} needs a Hölder loss (alpha<1); {loss} is smooth")
    for bad in ("d", "R", "q"):
        if bad in params:
            errs.append(f"set {bad!r} through the top-level keys, not problem-params")

    if errs:
        raise ConfigError(errs)
    return TrainConfig(loss=loss, regime=regime, n=n, d=d, epsilon=eps, delta=delta,
                       radius=radius, seed=seed, c=c, sigma2_override=s2, alpha=alpha,
                       problem=problem, problem_params=dict(params))


_SWEEP_KEYS = tuple(f.name for f in fields(SweepSpec))


def parse_sweep_spec(text: str) -> SweepSpec:
    doc = _load(text)
    errs = [f"unknown key {k!r}" for k in doc if k not in _SWEEP_KEYS]
    for key in ("problem", "regime", "n_values"):
        if key not in doc:
            errs.append(f"missing required key {key!r}")
    if "problem" in doc and doc["problem"] not in PROBLEMS:
        errs.append(f"unknown problem {doc['problem']!r}")
    if "regime" in doc and str(doc["regime"]).replace("ö", "o") not in REGIMES:
        errs.append(f"unknown regime {doc['regime']!r}")
    if errs:
        raise ConfigError(errs)
    kw = {k: doc[k] for k in _SWEEP_KEYS if k in doc}
    kw["regime"] = str(kw["regime"]).replace("ö", "o")
    try:
        return SweepSpec(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc).split("; ")) from None
