import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsgd_lab.analysis import self_bounding_violations
from dpsgd_lab.losses import (Example, Holder, Smooth, builtin_pairwise, builtin_pointwise,
                              c_alpha_1, c_alpha_2, c_alpha_3, check_self_bounding, make_loss)
from dpsgd_lab.numerics import RngState, uniform_sphere
from dpsgd_lab.selftest import builtin_losses, halve_L

D = 4
LOSSES = builtin_losses()
IDS = [f"{l.name}-q{l.q:g}" for l in LOSSES]


def hinge_with(smoothness):
    return builtin_pointwise("hinge").with_smoothness(smoothness)


def random_case(loss, g):
    R = loss.radius if math.isfinite(loss.radius) else 4.0
    B = loss.feature_bound

    def point():
        x = uniform_sphere(g, 1, D, B)[0] * g.random() ** (1 / D)
        if loss.kind in ("logistic", "hinge"):
            y = float(g.choice([-1.0, 1.0]))
        else:
            y = float(g.uniform(-loss.label_bound, loss.label_bound))
        return x, y

    w = uniform_sphere(g, 1, D, R)[0] * g.random() ** (1 / D)
    w2 = uniform_sphere(g, 1, D, R)[0] * g.random() ** (1 / D)
    z = point() + (point() if loss.pairwise else ())
    return w, w2, z


# spec examples ---------------------------------------------------------------

def test_logistic_at_origin():
    loss = builtin_pointwise("logistic")
    x = np.array([0.6, -0.8])
    assert loss.value(np.zeros(2), x, 1.0) == pytest.approx(math.log(2), rel=1e-15)
    assert np.allclose(loss.gradient(np.zeros(2), x, -1.0), 0.5 * x)


def test_hinge_flat_beyond_margin():
    loss = builtin_pointwise("hinge", radius=5.0)
    w, x = np.array([2.0, 0.0]), np.array([1.0, 0.0])
    assert loss.value(w, x, 1.0) == 0.0
    assert np.array_equal(loss.gradient(w, x, 1.0), [0.0, 0.0])


def test_hinge_kink_gets_zero_subgradient():
    loss = builtin_pointwise("hinge")
    assert np.array_equal(loss.gradient(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.0), [0, 0])


def test_least_squares_interpolation_point():
    loss = builtin_pointwise("least_squares")
    w, x = np.array([1.0, 0.0]), np.array([1.0, 0.0])
    assert loss.value(w, x, 1.0) == 0.0
    assert np.array_equal(loss.gradient(w, x, 1.0), [0.0, 0.0])


def test_auc_hinge_concordant_pair_is_zero():
    loss = builtin_pairwise("auc_hinge", radius=3.0)
    w, x, x2 = np.array([0.3, -1.0]), np.array([0.5, 0.1]), np.array([-0.2, 0.4])
    assert loss.value(w, x, 1.0, x2, 1.0) == 0.0
    assert np.array_equal(loss.gradient(w, x, -1.0, x2, -1.0), [0.0, 0.0])


def test_pair_squared_interpolating():
    loss = builtin_pairwise("pair_squared")
    w = np.array([0.5, -0.25])
    x, x2 = np.array([0.2, 0.4]), np.array([-0.6, 0.1])
    assert loss.value(w, x, w @ x, x2, w @ x2) == pytest.approx(0.0, abs=1e-30)


def test_auc_logistic_at_origin():
    loss = builtin_pairwise("auc_logistic")
    assert loss.value(np.zeros(2), np.ones(2), 1.0, -np.ones(2), -1.0) == pytest.approx(math.log(2))


def test_logistic_extreme_scores_stay_finite():
    loss = builtin_pointwise("logistic", radius=math.inf)
    x = np.array([1.0])
    assert loss.value(np.array([1e4]), x, -1.0) == pytest.approx(1e4)
    assert loss.value(np.array([1e4]), x, 1.0) == 0.0
    assert np.all(np.isfinite(loss.gradient(np.array([1e4]), x, -1.0)))


def test_c_alpha_1_values():
    assert c_alpha_1(hinge_with(Holder(0.0, 2.0))) == pytest.approx(3.0)
    assert c_alpha_1(hinge_with(Holder(0.5, 1.0))) == pytest.approx(3 ** (1 / 3), rel=1e-12)
    assert c_alpha_1(hinge_with(Smooth(2.0))) == pytest.approx(2.0)


def test_c_alpha_2_values():
    assert c_alpha_2(hinge_with(Holder(0.0, 2.0))) == pytest.approx(9.0)
    assert c_alpha_2(hinge_with(Holder(0.5, 1.0))) == pytest.approx(4 / 3, rel=1e-12)
    with pytest.raises(ValueError):
        c_alpha_2(hinge_with(Smooth(1.0)))


def test_c_alpha_2_continuous_in_alpha():
    # steep near alpha=1 (exponent 1/(1-alpha)), so scan finely
    alphas = np.linspace(0.01, 0.9, 8001)
    vals = np.array([c_alpha_2(hinge_with(Holder(a, 1.0))) for a in alphas])
    assert np.all(np.isfinite(vals))
    assert np.max(np.abs(np.diff(np.log(vals)))) < 0.05


def test_c_alpha_3_values():
    assert c_alpha_3(hinge_with(Holder(0.0, 2.0))) == pytest.approx(2.0)
    assert c_alpha_3(hinge_with(Holder(0.5, 1.0))) == pytest.approx(math.sqrt(1 / 3) * 0.5, rel=1e-12)
    assert c_alpha_3(hinge_with(Holder(0.5, 1e-300))) < 1e-290
    with pytest.raises(ValueError, match="alpha=1"):
        c_alpha_3(hinge_with(Smooth(1.0)))


def test_certificates_match_declared_bounds():
    ls = builtin_pointwise("least_squares", feature_bound=2.0, radius=1.5, label_bound=1.0)
    assert ls.G == pytest.approx(2 * 2 * (2 * 1.5 + 1))
    assert ls.smoothness == Smooth(8.0)
    h = builtin_pointwise("hinge_q", q=1.5, feature_bound=1.0, radius=1.0)
    assert h.smoothness == Holder(0.5, 1.5)
    assert builtin_pointwise("hinge_q", q=2.0).is_smooth
    pair = builtin_pairwise("auc_logistic", feature_bound=1.0)
    assert pair.G == 2.0 and pair.L == 1.0


def test_unknown_loss():
    with pytest.raises(ValueError):
        make_loss("huber")


def test_radius_required_for_unbounded_gradients():
    with pytest.raises(ValueError, match="finite radius"):
        builtin_pointwise("least_squares", radius=math.inf)


def test_check_self_bounding_zero_value():
    loss = builtin_pointwise("least_squares")
    assert check_self_bounding(loss, np.array([1.0, 0.0]), Example(np.array([1.0, 0.0]), 1.0))


# properties over every builtin loss -----------------------------------------

@pytest.mark.parametrize("loss", LOSSES, ids=IDS)
def test_self_bounding_probes(loss):
    assert self_bounding_violations(loss, 10_000, seed=1) == 0


def test_self_bounding_scalar_check_agrees():
    g = RngState(4, 0).generator
    for loss in LOSSES:
        for _ in range(200):
            w, _, z = random_case(loss, g)
            assert check_self_bounding(loss, w, *z)


def test_halved_L_is_caught():
    counts = {l.name + str(l.q): self_bounding_violations(halve_L(l), 10_000, seed=1) for l in LOSSES}
    assert counts["logistic1.0"] > 0 and counts["least_squares2.0"] > 0
    assert sum(counts.values()) > 0
    w = np.array([0.1, 0.0])
    z = Example(np.array([1.0, 0.0]), 1.0)
    assert not check_self_bounding(halve_L(builtin_pointwise("logistic")), w, z)


@pytest.mark.parametrize("loss", LOSSES, ids=IDS)
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32), t=st.floats(0, 1))
def test_convex_along_chords(loss, seed, t):
    w, w2, z = random_case(loss, RngState(seed, 0).generator)
    mid = loss.value(t * w + (1 - t) * w2, *z)
    assert mid <= t * loss.value(w, *z) + (1 - t) * loss.value(w2, *z) + 1e-9


@pytest.mark.parametrize("loss", LOSSES, ids=IDS)
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_lipschitz_on_ball(loss, seed):
    w, w2, z = random_case(loss, RngState(seed, 0).generator)
    gap = abs(loss.value(w, *z) - loss.value(w2, *z))
    assert gap <= loss.G * np.linalg.norm(w - w2) + 1e-9
    assert np.linalg.norm(loss.gradient(w, *z)) <= loss.G * (1 + 1e-12)


@pytest.mark.parametrize("loss", LOSSES, ids=IDS)
@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_holder_continuity_of_gradient(loss, seed):
    w, w2, z = random_case(loss, RngState(seed, 0).generator)
    diff = np.linalg.norm(loss.gradient(w, *z) - loss.gradient(w2, *z))
    assert diff <= loss.L * np.linalg.norm(w - w2) ** loss.alpha + 1e-9


@pytest.mark.parametrize("loss", LOSSES, ids=IDS)
@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32))
def test_gradient_matches_finite_differences(loss, seed):
    w, _, z = random_case(loss, RngState(seed, 0).generator)
    x = z[0] - z[2] if loss.pairwise else z[0]
    if loss.pairwise:
        t, active = loss.pair_target(z[1], z[3])
        if active == 0:
            return
    else:
        t = z[1]
    if loss.kind == "hinge" and abs(1 - t * (w @ x)) < 1e-3:
        return
    if loss.kind == "qnorm" and abs(t - w @ x) < 1e-3:
        return
    h = 1e-6
    num = np.array([(loss.value(w + h * e, *z) - loss.value(w - h * e, *z)) / (2 * h)
                    for e in np.eye(D)])
    grad = loss.gradient(w, *z)
    assert np.linalg.norm(num - grad) <= 1e-5 * max(1.0, np.linalg.norm(grad))
