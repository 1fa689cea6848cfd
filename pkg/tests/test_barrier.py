import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import transforms
from valuebarrier.barrier import (TransformSpec, alpha_lower_bound, check_transform, default_threshold,
                                  logit_transform, make_barrier, sample_transform_inputs,
                                  sigma_tilde_inverse, valid_R_interval)
from valuebarrier.envs import default_gridworld
from valuebarrier.network import forward, init_net
from valuebarrier.oracle import value_iteration


def test_default_threshold():
    assert default_threshold(0.99) == pytest.approx(50.0)
    assert default_threshold(0.9) == pytest.approx(5.0)


@pytest.mark.parametrize("i", range(4))
def test_valid_transforms_pass(i):
    spec, interval = transforms.suite()[i]
    res = transforms.run(spec, interval)
    assert res.passed, (spec.name, res)


def test_composite_constant():
    spec, _ = transforms.suite()[3]
    assert spec.C == pytest.approx(0.01)


def test_shift_fails_with_counterexample():
    res = transforms.run(transforms.shifted(), (-10, 10))
    assert not res.passed
    assert res.condition == "iii"
    (x,) = res.counterexample
    assert x < 0 and x + 1 >= 0


def test_shift_fails_sign_at_minus_half():
    res = check_transform(transforms.shifted(), [-0.5], [])
    assert not res and res.counterexample == (-0.5,)


def test_sqrt_fails_linear_growth():
    sqrt_like = TransformSpec(lambda x: np.sign(x) * np.abs(x) ** 0.5, 1.0, "sqrt")
    res = check_transform(sqrt_like, [0.0, 4.0], [[4.0, 9.0]])
    assert not res and res.condition == "i" and res.counterexample == (4.0,)


def test_compressive_fails_difference_condition():
    half = TransformSpec(lambda x: np.where(x >= 0, 2 * x, 0.5 * x), 1.0, "kinked")
    res = check_transform(half, [1.0, -1.0, 0.0], [[-2.0, -1.0]])
    assert not res and res.condition == "ii" and res.counterexample == (-1.0, -2.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(-15, 15))
def test_logit_transform_inverts_bounded_head(z):
    # V = sigmoid(z) / (1 - gamma), so w(V - 50) should give back z
    v_minus_R = (1.0 / (1.0 + np.exp(-z)) - 0.5) * 100.0
    assert logit_transform(0.99).w(v_minus_R) == pytest.approx(z, abs=1e-6)


def test_raw_logit_barrier_matches_value_barrier_sign():
    net = init_net((4, 32, 2), "bounded", 0.99, 5)
    for p in net.params():
        p *= 4.0
    x = np.random.default_rng(0).uniform(-3, 3, size=(2000, 4))
    h_logit = make_barrier(net)(x)
    h_val = make_barrier(net, "value_minus_R", 50.0)(x)
    assert make_barrier(net).mode == "raw_logit"
    np.testing.assert_array_equal(h_logit >= 0, h_val >= 0)
    np.testing.assert_allclose(logit_transform(0.99).w(h_val), h_logit, atol=1e-6)


def test_mode_errors():
    bounded = init_net((4, 8, 2), "bounded", 0.99, 0)
    unbounded = init_net((4, 8, 2), "unbounded", 0.99, 0)
    with pytest.raises(ValueError):
        make_barrier(unbounded, "raw_logit")
    with pytest.raises(ValueError):
        make_barrier(bounded, "raw_logit", R=40.0)
    with pytest.raises(ValueError):
        make_barrier(bounded, "something")
    assert make_barrier(unbounded).mode == "value_minus_R"


def test_tabular_barrier():
    vals = value_iteration(default_gridworld(), 0.99)
    h = make_barrier(vals, R=30.0)
    assert h.source == "tabular"
    np.testing.assert_allclose(h(np.arange(64)), vals.V - 30.0)
    with pytest.raises(ValueError):
        make_barrier(vals, "raw_logit")
    with pytest.raises(ValueError):
        make_barrier(np.zeros(3))


def test_valid_interval_values():
    lo, hi = valid_R_interval(0.99, 4)
    assert lo == pytest.approx((1 - 0.99**4) / 0.01)
    assert lo == pytest.approx(3.940399, abs=1e-6)
    assert hi == pytest.approx(100.0)
    lo2, hi2 = valid_R_interval(0.99, 4, 5.0)
    assert (lo2, hi2) == pytest.approx((lo + 5, 95.0))


def test_valid_interval_rejects_large_eps():
    eps_max = 0.99**4 / 0.02
    with pytest.raises(ValueError):
        valid_R_interval(0.99, 4, eps_max)
    valid_R_interval(0.99, 4, eps_max * (1 - 1e-9))


def test_interval_nonempty_just_below_eps_max():
    eps = 0.99**4 / 0.02 * 0.999
    lo, hi = valid_R_interval(0.99, 4, eps)
    assert lo < hi


@pytest.mark.parametrize("gamma", [0.9, 0.99])
def test_largest_horizon_with_a_noise_margin(gamma):
    # eps = 1/2 is admissible iff gamma^H > 1 - gamma
    H = int(np.floor(np.log(1 - gamma) / np.log(gamma)))
    valid_R_interval(gamma, H, 0.5)
    with pytest.raises(ValueError):
        valid_R_interval(gamma, H + 1, 0.5)


def test_midpoint_threshold_admissible_up_to_h68():
    # the lower end (1 - g^H)/(1 - g) stays below 50 while g^H > 1/2
    inside = [H for H in range(1, 200) if valid_R_interval(0.99, H)[0] < 50.0]
    assert inside == list(range(1, 69))


def test_alpha_lower_bound():
    assert alpha_lower_bound(0.99, 0.0, 50.0) == 0.0
    assert alpha_lower_bound(0.99, 5.0, 50.0) == pytest.approx(10.0 / 55.0)
    with pytest.raises(ValueError):
        alpha_lower_bound(0.99, 5.0, 96.0)
    with pytest.raises(ValueError):
        alpha_lower_bound(0.99, -1.0, 50.0)


def test_sample_inputs_include_zero():
    pts, pairs = sample_transform_inputs(-1, 1, 10, 0)
    assert 0.0 in pts and pairs.shape == (10, 2)


def test_sigma_tilde_domain():
    assert sigma_tilde_inverse().domain == (-0.5, 0.5)
