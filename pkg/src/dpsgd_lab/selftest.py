"""Fast invariant checks behind ``dpsgd-lab selftest``."""
from __future__ import annotations

import math
import sys
import time
from typing import Callable

import numpy as np

from .analysis import fit_rate, self_bounding_violations
from .losses import Dataset, Holder, Smooth, builtin_pairwise, builtin_pointwise
from .numerics import RngState, project_ball, uniform_sphere
from .privacy import (DpTarget, PrivacyError, calibrate, find_beta, min_epsilon_for_beta,
                      verify_run_privacy)
from .sgd import Schedule, SgdConfig, make_schedule, run


def builtin_losses():
    return [
        builtin_pointwise("logistic", radius=4.0),
        builtin_pointwise("least_squares"),
        builtin_pointwise("hinge"),
        builtin_pointwise("hinge_q", q=1.5),
        builtin_pointwise("qnorm", q=1.5),
        builtin_pairwise("auc_logistic", radius=4.0),
        builtin_pairwise("auc_hinge"),
        builtin_pairwise("auc_hinge_q", q=1.5),
        builtin_pairwise("pair_squared"),
    ]


def halve_L(loss):
    s = loss.smoothness
    return loss.with_smoothness(Smooth(s.L / 2) if isinstance(s, Smooth) else Holder(s.alpha, s.L / 2))


def audit_grid(count: int = 1000, seed: int = 0):
    """Random (n, T, epsilon, delta, beta, which) tuples for the soundness audit.

    Yields (calibration, n, T, G, which) twice per tuple: once at a random
    beta and once at the beta chosen by find_beta.
    """
    g = RngState(seed, 0).generator
    for _ in range(count):
        n = int(round(math.exp(g.uniform(math.log(50), math.log(1e5)))))
        T = int(round(math.exp(g.uniform(math.log(n), 2 * math.log(n)))))
        eps = float(math.exp(g.uniform(math.log(0.5), math.log(8.0))))
        delta = 1.0 / n ** 2 if g.random() < 0.5 else 1e-5
        which = "pairwise" if g.random() < 0.5 else "pointwise"
        beta = float(g.uniform(1e-4, 0.999))
        G = float(g.uniform(0.1, 5.0))
        target = DpTarget(eps, delta)
        yield calibrate(n, T, G, target, beta, which), n, T, G, which
        yield find_beta(n, T, G, target, which), n, T, G, which


def audit_failures(count: int = 1000, seed: int = 0) -> tuple[int, int]:
    """(feasible tuples checked, tuples whose achieved epsilon exceeds the target)."""
    feasible = bad = 0
    for cal, n, T, G, which in audit_grid(count, seed):
        if not cal.feasible:
            continue
        feasible += 1
        try:
            eps, _ = verify_run_privacy(cal, n, T, G, which)
        except PrivacyError:
            bad += 1
            continue
        if eps > cal.epsilon + 1e-12:
            bad += 1
    return feasible, bad


def _check_projection():
    assert np.allclose(project_ball([3.0, 4.0], 1.0), [0.6, 0.8])
    g = RngState(1, 0).generator
    for w in g.normal(scale=3.0, size=(200, 4)):
        p = project_ball(w, 1.5)
        assert np.linalg.norm(p) <= 1.5 * (1 + 1e-12)
        assert np.allclose(project_ball(p, 1.5), p, rtol=1e-14, atol=0)


def _self_bounding(corrupt: bool):
    def check():
        for loss in builtin_losses():
            probe = halve_L(loss) if corrupt else loss
            v = self_bounding_violations(probe, 2000, seed=3)
            assert v == 0, f"{loss.name}: {v} violations"
    return check


def _check_accountant():
    feasible, bad = audit_failures(1000)
    assert feasible > 0, "audit grid has no feasible points"
    assert bad == 0, f"{bad} of {feasible} feasible calibrations exceed their target"


def _check_remark():
    for n in (100, 1000, 10_000):
        eps = min_epsilon_for_beta(n) * 1.01
        assert find_beta(n, n, 1.0, DpTarget(eps, 1.0 / n ** 2)).feasible, f"n={n}"


def _check_fit_rate():
    ns = [128, 256, 512, 1024, 2048]
    for slope in (-0.5, -1.0):
        fit = fit_rate([(n, 3.0 * n ** slope) for n in ns])
        assert abs(fit.slope - slope) <= 1e-9 and abs(fit.r2 - 1.0) <= 1e-12


def _check_schedules():
    hinge = builtin_pointwise("hinge")
    half = builtin_pointwise("hinge_q", q=1.5)
    for n in (64, 125, 343, 1000, 1024):
        assert make_schedule("holder_lownoise", n, 10, 8.0, 1e-5, hinge).T == n * n
        T = make_schedule("holder_lownoise", n, 10, 8.0, 1e-5, half).T
        assert T ** 3 >= n ** 4 and (T - 1) ** 3 < n ** 4, f"n={n}: T={T}"


def _check_engine():
    loss = builtin_pointwise("least_squares")
    g = RngState(5, 0).generator
    X = uniform_sphere(g, 40, 3, 1.0)
    y = X @ np.array([0.2, -0.1, 0.3])
    data = Dataset(X, y)
    cfg = SgdConfig(loss, Schedule(0.1, 300, "smooth_general"), sigma2=0.5, radius=1.0, seed=9)
    a, b = run(cfg, data), run(cfg, data)
    assert np.array_equal(a.w_priv, b.w_priv)
    assert np.linalg.norm(a.w_priv) <= 1.0 + 1e-12


def checks(corrupt_L: bool = False) -> list[tuple[str, Callable[[], None]]]:
    return [
        ("projection", _check_projection),
        ("self-bounding probes", _self_bounding(corrupt_L)),
        ("accountant grid audit", _check_accountant),
        ("beta existence threshold", _check_remark),
        ("fit_rate planted slopes", _check_fit_rate),
        ("hölder low-noise horizon", _check_schedules),
        ("engine determinism", _check_engine),
    ]


def run_selftest(corrupt_L: bool = False, out=sys.stdout) -> bool:
    ok = True
    for name, fn in checks(corrupt_L):
        start = time.perf_counter()
        try:
            fn()
            status, detail = "PASS", ""
        except AssertionError as exc:
            status, detail, ok = "FAIL", f"  {exc}", False
        elapsed = time.perf_counter() - start
        out.write(f"{status} {name} ({elapsed:.3f}s){detail}\n")
    out.write("selftest " + ("passed" if ok else "FAILED") + "\n")
    return ok
