import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsgd_lab.analysis import BoundInputs, optimization_bound
from dpsgd_lab.losses import Dataset, builtin_pairwise, builtin_pointwise
from dpsgd_lab.numerics import RngState, uniform_sphere
from dpsgd_lab.problems import realizable_least_squares
from dpsgd_lab.sgd import (Schedule, SgdConfig, empirical_pairwise_risk, empirical_risk,
                           make_schedule, run, run_pairwise, run_pointwise)


def linear_data(n, d, seed=0, scale=0.5):
    g = RngState(seed, 0).generator
    X = uniform_sphere(g, n, d, 1.0)
    w = uniform_sphere(g, 1, d, scale)[0]
    return Dataset(X, X @ w), w


# schedules -----------------------------------------------------------------

def test_smooth_general_example():
    s = make_schedule("smooth_general", 10_000, 10, 1.0, 1e-5, builtin_pointwise("logistic"))
    assert s.eta == pytest.approx(0.01) and s.T == 10_000
    # quoted as 0.09321; the exact value is 0.093198
    assert 1 / math.sqrt(10 * math.log(1e5)) == pytest.approx(0.09321, abs=2e-5)


def test_holder_lownoise_alpha_zero():
    s = make_schedule("holder_lownoise", 1024, 10, 8.0, 1e-5, builtin_pointwise("hinge"))
    assert s.T == 1_048_576


def test_holder_general_half_uses_smooth_style():
    loss = builtin_pointwise("hinge_q", q=1.5)
    s = make_schedule("hölder_general", 1024, 10, 8.0, 1e-5, loss)
    assert s.T == 1024
    assert s.eta == pytest.approx(min(1 / 32, 8 / math.sqrt(10 * math.log(1e5)), 2 / loss.L, 1.0))


@pytest.mark.parametrize("n", [64, 100, 125, 343, 512, 729, 1000, 1024])
def test_holder_lownoise_horizons_are_exact(n):
    assert make_schedule("holder_lownoise", n, 10, 8.0, 1e-5, builtin_pointwise("hinge")).T == n * n
    T = make_schedule("holder_lownoise", n, 10, 8.0, 1e-5, builtin_pointwise("hinge_q", q=1.5)).T
    assert T ** 3 >= n ** 4 > (T - 1) ** 3


def test_step_is_capped():
    loss = builtin_pointwise("least_squares", feature_bound=2.0)
    s = make_schedule("smooth_lownoise", 10, 1, 1e3, 0.5, loss)
    assert s.eta == pytest.approx(2.0 / loss.L)


def test_regime_mismatch():
    with pytest.raises(ValueError, match="smooth"):
        make_schedule("smooth_general", 100, 2, 1.0, 1e-5, builtin_pointwise("hinge"))
    with pytest.raises(ValueError, match="Hölder"):
        make_schedule("holder_general", 100, 2, 1.0, 1e-5, builtin_pointwise("logistic"))
    with pytest.raises(ValueError, match="unknown regime"):
        make_schedule("fast", 100, 2, 1.0, 1e-5, builtin_pointwise("logistic"))


# pointwise engine -----------------------------------------------------------

def test_single_step_returns_origin():
    data, _ = linear_data(20, 3)
    cfg = SgdConfig(builtin_pointwise("least_squares"), Schedule(0.5, 1, "smooth_general"), sigma2=4.0)
    assert np.array_equal(run(cfg, data).w_priv, np.zeros(3))


def test_zero_step_never_moves():
    data, _ = linear_data(20, 3)
    cfg = SgdConfig(builtin_pointwise("least_squares"), Schedule(0.0, 200, "smooth_general"),
                    sigma2=1.0, record_every=10)
    rep = run(cfg, data)
    assert np.array_equal(rep.w_priv, np.zeros(3))
    assert len({r for _, r in rep.iterate_risks}) == 1


def test_interpolation_drives_risk_to_zero():
    data, w_true = linear_data(50, 4, seed=3)
    sol, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
    assert empirical_risk(builtin_pointwise("least_squares"), sol, data) < 1e-20
    cfg = SgdConfig(builtin_pointwise("least_squares"), Schedule(0.2, 10_000, "smooth_lownoise"),
                    radius=1.0)
    rep = run(cfg, data)
    assert rep.iterate_risks[-1][1] <= rep.iterate_risks[0][1]
    assert empirical_risk(cfg.loss, rep.w_last, data) < 1e-3
    assert np.allclose(rep.w_last, w_true, atol=0.05)


def test_mean_of_iterates():
    data, _ = linear_data(30, 3, seed=1)
    cfg = SgdConfig(builtin_pointwise("least_squares"), Schedule(0.3, 500, "smooth_general"),
                    sigma2=0.3, radius=0.7, seed=2, record_every=0)
    ws = [run(SgdConfig(cfg.loss, Schedule(0.3, t, "smooth_general"), sigma2=0.3, radius=0.7,
                        seed=2, record_every=0), data).w_last for t in range(1, 500)]
    # w_last of a t-step run is w_{t+1}; iterates w_1..w_T are 0 then these
    iterates = np.vstack([np.zeros(3)] + ws)
    assert np.allclose(run(cfg, data).w_priv, iterates.mean(axis=0), rtol=1e-12, atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), R=st.floats(0.05, 2.0))
def test_iterates_stay_in_ball(seed, R):
    data, _ = linear_data(10, 3, seed=seed % 7)
    cfg = SgdConfig(builtin_pointwise("least_squares"), Schedule(0.5, 64, "smooth_general"),
                    sigma2=25.0, radius=R, seed=seed, checkpoints=tuple(range(1, 65)), record_every=0)
    rep = run(cfg, data)
    assert max(np.linalg.norm(w) for w in rep.checkpoints.values()) <= R * (1 + 1e-12)
    assert np.linalg.norm(rep.w_priv) <= R * (1 + 1e-12)


def test_replay_is_identical():
    data, _ = linear_data(40, 5, seed=4)
    cfg = SgdConfig(builtin_pointwise("logistic", radius=2.0), Schedule(0.1, 300, "smooth_general"),
                    sigma2=2.0, radius=2.0, seed=11)
    signed = Dataset(data.X, np.sign(data.y) + (data.y == 0))
    a, b = run(cfg, signed).to_dict(), run(cfg, signed).to_dict()
    assert a == b


def test_engine_guards():
    data, _ = linear_data(5, 2)
    point = SgdConfig(builtin_pointwise("least_squares"), Schedule(0.1, 5, "smooth_general"))
    pair = SgdConfig(builtin_pairwise("pair_squared"), Schedule(0.1, 5, "smooth_general"))
    with pytest.raises(ValueError):
        run_pointwise(pair, data)
    with pytest.raises(ValueError):
        run_pairwise(point, data)
    with pytest.raises(ValueError, match="n >= 2"):
        run_pairwise(pair, Dataset(data.X[:1], data.y[:1]))
    with pytest.raises(ValueError):
        SgdConfig(point.loss, point.schedule, sigma2=-1.0)


# pairwise engine ------------------------------------------------------------

def test_pairwise_realizable_regression():
    data, _ = linear_data(40, 3, seed=6)
    cfg = SgdConfig(builtin_pairwise("pair_squared"), Schedule(0.1, 10_000, "smooth_lownoise"),
                    radius=1.0, seed=3)
    rep = run(cfg, data)
    assert empirical_pairwise_risk(cfg.loss, rep.w_last, data) < 1e-3


def test_auc_equal_labels_never_move():
    g = RngState(0, 0).generator
    data = Dataset(uniform_sphere(g, 15, 3, 1.0), np.ones(15))
    cfg = SgdConfig(builtin_pairwise("auc_hinge"), Schedule(0.5, 500, "holder_general"), seed=1)
    rep = run(cfg, data)
    assert np.array_equal(rep.w_priv, np.zeros(3))


def test_pairwise_replay_is_identical():
    data, _ = linear_data(25, 3, seed=8)
    cfg = SgdConfig(builtin_pairwise("pair_squared"), Schedule(0.1, 400, "smooth_general"),
                    sigma2=1.0, radius=1.0, seed=5)
    assert run(cfg, data).to_dict() == run(cfg, data).to_dict()


# empirical risks -------------------------------------------------------------

def test_single_point_risk():
    loss = builtin_pointwise("least_squares")
    data = Dataset(np.array([[0.6, 0.8]]), np.array([0.5]))
    w = np.array([0.3, 0.4])
    assert empirical_risk(loss, w, data) == pytest.approx(loss.value(w, data.X[0], 0.5))


def test_pairwise_two_points():
    loss = builtin_pairwise("auc_logistic")
    data = Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, -1.0]))
    w = np.array([0.2, -0.7])
    want = 0.5 * (loss.value(w, data.X[0], 1.0, data.X[1], -1.0)
                  + loss.value(w, data.X[1], -1.0, data.X[0], 1.0))
    assert empirical_pairwise_risk(loss, w, data) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("name", ["auc_logistic", "auc_hinge", "pair_squared"])
def test_pairwise_risk_matches_double_loop(name):
    loss = builtin_pairwise(name)
    g = RngState(12, 0).generator
    X = uniform_sphere(g, 50, 4, 1.0) * g.random((50, 1))
    y = np.sign(g.normal(size=50)) if name != "pair_squared" else g.uniform(-1, 1, 50)
    data = Dataset(X, y)
    w = uniform_sphere(g, 1, 4, 0.8)[0]
    brute = 0.0
    for i in range(50):
        for j in range(50):
            if i != j:
                brute += loss.value(w, X[i], y[i], X[j], y[j])
    assert empirical_pairwise_risk(loss, w, data, block=7) == pytest.approx(brute / 2450, rel=1e-12)


# optimization bound invariant ----------------------------------------------------

def test_noise_free_optimization_sum_below_bound():
    prob = realizable_least_squares(d=5, seed=1)
    n = 100
    loss = prob.loss
    sched = make_schedule("smooth_general", n, 5, 1.0, 1e-5, loss)
    totals = []
    for seed in range(50):
        data = prob.sample(n, seed)
        cfg = SgdConfig(loss, sched, radius=prob.radius, seed=seed, record_every=1)
        rep = run(cfg, data)
        fs = empirical_risk(loss, prob.w_star, data)
        totals.append(sched.eta * sum(r - fs for _, r in rep.iterate_risks))
    inputs = BoundInputs.from_loss(loss, n, sched.T, 5, sched.eta,
                                   w_star_norm=float(np.linalg.norm(prob.w_star)))
    assert np.mean(totals) <= 2 * optimization_bound(inputs, sched.T, smooth=True)


def test_excess_risk_shrinks_with_T():
    prob = realizable_least_squares(d=5, seed=2)
    data = prob.sample(200, 0)
    means = []
    for T in (50, 200, 800):
        vals = [prob.excess_risk(run(SgdConfig(prob.loss, Schedule(0.2, T, "smooth_lownoise"),
                                               radius=prob.radius, seed=s, record_every=0),
                                     data).w_priv) for s in range(50)]
        means.append(np.mean(vals))
    assert all(b <= a * 1.05 for a, b in zip(means, means[1:]))
