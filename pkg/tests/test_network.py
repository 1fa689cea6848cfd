import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradcheck import max_relative_error
from valuebarrier.network import (LOGIT_CLAMP, Adam, ValueNet, backward, forward, init_net,
                                  load_checkpoint, parse_checkpoint, save_checkpoint, value_of)


@pytest.mark.parametrize("head", ["bounded", "unbounded"])
@pytest.mark.parametrize("seed", [0, 1])
def test_gradients_match_finite_differences(head, seed):
    assert max_relative_error(head, seed) < 1e-4


def test_zero_weights_give_midpoint():
    net = init_net((4, 8, 2), "bounded", 0.99, 0)
    for p in net.params():
        p[...] = 0.0
    q, logit = forward(net, np.zeros(4))
    np.testing.assert_allclose(q, [50.0, 50.0])
    np.testing.assert_allclose(logit, [0.0, 0.0])


def test_large_logit_saturates_at_scale():
    net = init_net((4, 2), "bounded", 0.99, 0)
    net.weights[0][...] = 0.0
    net.biases[0][...] = [1e4, -1e4]
    q, logit = forward(net, np.zeros(4))
    assert q[0] == pytest.approx(100.0, abs=1e-9) and q[1] == pytest.approx(0.0, abs=1e-9)
    assert np.all(np.abs(logit) == LOGIT_CLAMP)
    _, _, cache = forward(net, np.zeros(4), return_cache=True)
    grads = backward(net, cache, np.ones((1, 2)))
    assert all(np.all(g == 0) for g in grads)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_bounded_head_range(seed):
    rng = np.random.default_rng(seed)
    net = init_net((4, 16, 16, 2), "bounded", 0.99, rng)
    for p in net.params():
        p *= rng.uniform(0.1, 20)
    q, _ = forward(net, rng.uniform(-3, 3, size=(64, 4)))
    assert np.all(q >= 0) and np.all(q <= 100)


def test_unbounded_q_equals_logit():
    net = init_net((4, 8, 2), "unbounded", 0.99, 3)
    q, logit = forward(net, np.ones((5, 4)))
    assert np.array_equal(q, logit)


def test_single_and_batch_agree():
    net = init_net((4, 8, 8, 2), "bounded", 0.99, 4)
    x = np.random.default_rng(0).normal(size=(6, 4))
    batch = forward(net, x)[0]
    for xi, qi in zip(x, batch):
        np.testing.assert_allclose(forward(net, xi)[0], qi, rtol=1e-13)
    np.testing.assert_array_equal(value_of(net, x), batch.max(axis=1))


def test_dimension_mismatch():
    net = init_net((4, 8, 2), "bounded", 0.99, 0)
    with pytest.raises(ValueError):
        forward(net, np.zeros(3))


def test_bad_head():
    with pytest.raises(ValueError):
        ValueNet((4, 2), [np.zeros((4, 2))], [np.zeros(2)], head="softmax")


def test_adam_descends_quadratic():
    rng = np.random.default_rng(0)
    net = init_net((4, 16, 2), "unbounded", 0.99, rng)
    x = rng.normal(size=(32, 4))
    target = rng.normal(size=(32, 2))
    opt = Adam(net, lr=1e-2)

    def loss_and_grad():
        q, _, cache = forward(net, x, return_cache=True)
        err = q - target
        return float(np.mean(err**2)), backward(net, cache, 2 * err / err.size)

    start, _ = loss_and_grad()
    for _ in range(300):
        _, g = loss_and_grad()
        opt.step(net, g)
    assert loss_and_grad()[0] < 0.5 * start


def test_adam_first_step_size():
    # bias-corrected first step moves each parameter by lr * sign(g)
    net = init_net((2, 2), "unbounded", 0.99, 0)
    before = [p.copy() for p in net.params()]
    grads = [np.full_like(p, 3.0) for p in net.params()]
    Adam(net, lr=0.01).step(net, grads)
    for b, p in zip(before, net.params()):
        np.testing.assert_allclose(b - p, 0.01, rtol=1e-6)


def test_adam_rejects_nan():
    net = init_net((2, 2), "unbounded", 0.99, 0)
    grads = [np.full_like(p, np.nan) for p in net.params()]
    with pytest.raises(FloatingPointError):
        Adam(net).step(net, grads)


@pytest.mark.parametrize("head", ["bounded", "unbounded"])
def test_checkpoint_roundtrip(tmp_path, head):
    net = init_net((4, 64, 64, 2), head, 0.99, 11)
    path = tmp_path / "ckpt.txt"
    text = save_checkpoint(net, path)
    assert text.splitlines()[:4] == ["arch=tanh", f"head={head}", "gamma=0.99", "layers=4,64,64,2"]
    back = load_checkpoint(path)
    x = np.random.default_rng(0).uniform(-3, 3, size=(1000, 4))
    np.testing.assert_allclose(forward(back, x)[0], forward(net, x)[0], rtol=0, atol=1e-12)
    for a, b in zip(back.params(), net.params()):
        assert np.array_equal(a, b)


def test_truncated_checkpoint_rejected():
    text = save_checkpoint(init_net((4, 8, 2), "bounded", 0.99, 0))
    with pytest.raises(ValueError):
        parse_checkpoint("\n".join(text.splitlines()[:-1]))
    with pytest.raises(ValueError):
        parse_checkpoint("\n".join(text.splitlines()[1:]))


def test_copy_is_independent():
    net = init_net((4, 8, 2), "bounded", 0.99, 0)
    other = net.copy()
    other.weights[0][0, 0] += 1.0
    assert net.weights[0][0, 0] != other.weights[0][0, 0]
    other.load_params(net)
    assert np.array_equal(other.weights[0], net.weights[0])
