import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from valuebarrier import dqn, envs
from valuebarrier.dqn import (DIVERSE_RESET, NARROW_RESET, SETTINGS, ConfigError, ReplayBuffer, TrainConfig,
                              combined_loss, epsilon_at, greedy_returns, make_streams, metrics_csv,
                              read_metrics_csv, reset_state, td_loss, td_targets, train,
                              unsafe_supervision_loss)
from valuebarrier.mdp import sample_states
from valuebarrier.network import init_net

TINY = dict(total_steps=1500, learning_starts=300, eval_period=500, eval_episodes=3,
            eval_samples=300, batch_size=32, unsafe_batch_size=32, hidden=(16, 16),
            target_update_period=100)


def test_defaults():
    c = TrainConfig()
    assert (c.total_steps, c.gamma, c.batch_size, c.buffer_size) == (500_000, 0.99, 128, 100_000)
    assert (c.arch, c.supervised, c.explore, c.alpha) == ("SIGMOID", True, True, 0.1)


def test_settings_table():
    assert set(SETTINGS) == {"mlp", "sigmoid", "mlp-sup", "sigmoid-sup", "noexp"}
    noexp = TrainConfig.for_setting("noexp")
    assert noexp.head == "bounded" and noexp.supervised and not noexp.explore
    assert TrainConfig.for_setting("mlp").head == "unbounded"
    with pytest.raises(ConfigError):
        TrainConfig.for_setting("big")


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10**7), st.floats(0, 0.999), st.sampled_from(["MLP", "SIGMOID"]),
       st.booleans(), st.booleans(), st.floats(1e-6, 1.0),
       st.lists(st.integers(1, 256), min_size=1, max_size=3), st.integers(0, 2**31))
def test_config_text_roundtrip(steps, gamma, arch, sup, exp, lr, hidden, seed):
    c = TrainConfig(total_steps=steps, gamma=gamma, arch=arch, supervised=sup, explore=exp, lr=lr,
                    hidden=tuple(hidden), seed=seed)
    back = TrainConfig.from_text(c.to_text())
    assert back == c
    assert back.to_text() == c.to_text()


def test_config_comments_and_overrides():
    c = TrainConfig.from_text("# a comment\nseed = 3  # trailing\n\nlr = 0.001\n", seed=5)
    assert c.seed == 5 and c.lr == 0.001


@pytest.mark.parametrize("text, key", [
    ("learning_rate = 0.1\n", "learning_rate"),
    ("batch_size = big\n", "batch_size"),
    ("gamma = 1.5\n", "gamma"),
    ("explore = maybe\n", "explore"),
    ("total_steps\n", "total_steps"),
    ("arch = CNN\n", "arch"),
])
def test_bad_config_names_key(text, key):
    with pytest.raises(ConfigError) as exc:
        TrainConfig.from_text(text)
    assert exc.value.key == key and key in str(exc.value)


def test_epsilon_schedule():
    c = TrainConfig(total_steps=1000)
    assert epsilon_at(c, 0) == 1.0
    assert epsilon_at(c, 50) == pytest.approx(0.525)
    assert epsilon_at(c, 100) == pytest.approx(0.05)
    assert epsilon_at(c, 999) == pytest.approx(0.05)


def test_reset_boxes():
    rng = np.random.default_rng(0)
    xs = np.array([reset_state(TrainConfig(), rng) for _ in range(500)])
    assert np.all(xs >= DIVERSE_RESET[0]) and np.all(xs <= DIVERSE_RESET[1])
    assert not envs.cartpole_unsafe(xs).any()
    assert xs[:, 0].std() > 1.0
    ys = np.array([reset_state(TrainConfig(explore=False), rng) for _ in range(100)])
    assert np.all(np.abs(ys) <= 0.05)


def test_streams_are_independent_and_named():
    a, b = make_streams(1), make_streams(1)
    assert list(a) == ["env", "init", "replay", "metrics", "shield"]
    assert a["env"].random() == b["env"].random()
    assert a["env"].random() != a["init"].random()


def test_replay_buffer_wraps():
    buf = ReplayBuffer(3, 1)
    for i in range(5):
        buf.add([i], i % 2, 1.0, [i + 1], False)
    assert len(buf) == 3
    assert sorted(buf.states[:, 0]) == [2, 3, 4]
    s, a, r, s2, d = buf.sample(np.random.default_rng(0), 100)
    assert set(s[:, 0]) <= {2, 3, 4}
    np.testing.assert_array_equal(s2[:, 0], s[:, 0] + 1)


class TableQ:
    """Lookup-table Q over gridworld state indices."""

    def __init__(self, Q, gamma):
        self.Q, self.gamma = Q, gamma

    def __call__(self, states):
        return self.Q[np.asarray(states, dtype=np.int64).reshape(-1)]


def test_td_targets_reproduce_exact_q():
    from valuebarrier.oracle import value_iteration
    mdp = envs.default_gridworld()
    vals = value_iteration(mdp, 0.99)
    Q = vals.Q(mdp)
    s = np.repeat(np.arange(mdp.n_states), 4)
    a = np.tile(np.arange(4), mdp.n_states)
    keep = ~mdp.unsafe[s]
    s, a = s[keep], a[keep]
    s2 = mdp.next[s, a]
    d = mdp.unsafe[s2].astype(float)
    r = 1.0 - d
    y = td_targets(TableQ(Q, 0.99), r, s2, d)
    np.testing.assert_allclose(y, Q[s, a], atol=1e-9)


def test_td_targets_terminal_has_no_bootstrap():
    net = init_net((4, 8, 2), "bounded", 0.99, 0)
    y = td_targets(net, np.array([0.0, 1.0]), np.zeros((2, 4)), np.array([1.0, 0.0]))
    assert y[0] == 0.0 and y[1] > 1.0


def test_combined_loss_equals_sum_of_parts():
    rng = np.random.default_rng(0)
    net = init_net((4, 16, 2), "bounded", 0.99, rng)
    target = init_net((4, 16, 2), "bounded", 0.99, rng)
    spec = envs.cartpole_spec()
    s = sample_states(spec, rng, 20)
    batch = (s, rng.integers(0, 2, 20), rng.integers(0, 2, 20).astype(float),
             s + 0.01, rng.integers(0, 2, 20).astype(float))
    unsafe = sample_states(spec, rng, 10, "unsafe_only")
    total, td, lu, grads = combined_loss(net, target, batch, unsafe, 0.7)
    td2, g_td = td_loss(net, target, batch)
    lu2, g_u = unsafe_supervision_loss(net, unsafe)
    assert td == pytest.approx(td2) and lu == pytest.approx(lu2)
    assert total == pytest.approx(td2 + 0.7 * lu2)
    for g, a, b in zip(grads, g_td, g_u):
        np.testing.assert_allclose(g, a + 0.7 * b, atol=1e-12)


def test_supervision_rejects_safe_state():
    net = init_net((4, 8, 2), "bounded", 0.99, 0)
    with pytest.raises(ValueError):
        unsafe_supervision_loss(net, np.zeros((1, 4)))


def test_zero_q_on_unsafe_gives_zero_supervision_loss():
    net = init_net((4, 8, 2), "unbounded", 0.99, 0)
    for p in net.params():
        p[...] = 0.0
    loss, grads = unsafe_supervision_loss(net, np.array([[2.5, 0, 0, 0]]))
    assert loss == 0.0


@settings(max_examples=100, deadline=None)
@given(st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-0.3, 0.3), st.floats(-3, 3)),
       st.integers(0, 1))
def test_scalar_fast_path_matches_dynamics(s, a):
    np.testing.assert_allclose(dqn._step_scalar(s, a), envs.cartpole_step(np.array(s), a),
                               rtol=1e-13, atol=1e-13)


def test_greedy_returns_cap_and_failure():
    net = init_net((4, 2), "unbounded", 0.99, 0)
    net.weights[0][...] = 0.0
    net.biases[0][...] = [1.0, 0.0]          # always push left
    ret = greedy_returns(net, np.zeros((2, 4)), 500)
    assert np.all(ret < 500) and ret[0] == ret[1]
    assert greedy_returns(net, np.zeros((1, 4)), 5)[0] == 5


def test_metrics_csv_roundtrip():
    hist = [dqn.MetricsRecord(10, 500.0, 0.1, 0.99, 0.5), dqn.MetricsRecord(20, 1 / 3, 2.0, 1.0, 0.0)]
    text = metrics_csv(hist)
    assert text.splitlines()[0] == "step,return_mean,td_error,m_valid,m_cov"
    assert read_metrics_csv(text) == hist


@pytest.fixture(scope="module")
def tiny_run():
    return train(TrainConfig(seed=3, **TINY))


def test_tiny_training_run(tiny_run):
    res = tiny_run
    assert not res.diverged
    assert [r.step for r in res.history] == [500, 1000, 1500]
    assert res.episodes > 0
    assert res.final is res.history[-1]
    for r in res.history:
        assert 0 <= r.m_valid <= 1 and 0 <= r.m_cov <= 1 and r.return_mean >= 0


def test_replay_labels_follow_safety_reward(tiny_run):
    buf = tiny_run.replay
    n = len(buf)
    unsafe = envs.cartpole_unsafe(buf.next_states[:n])
    np.testing.assert_array_equal(buf.rewards[:n], np.where(unsafe, 0.0, 1.0))
    np.testing.assert_array_equal(buf.terminals[:n].astype(bool), unsafe)
    assert unsafe.any()


def test_training_is_deterministic(tiny_run):
    again = train(TrainConfig(seed=3, **TINY))
    assert metrics_csv(again.history) == metrics_csv(tiny_run.history)
    for a, b in zip(again.net.params(), tiny_run.net.params()):
        assert np.array_equal(a, b)


def test_different_seeds_differ(tiny_run):
    other = train(TrainConfig(seed=4, **TINY))
    assert metrics_csv(other.history) != metrics_csv(tiny_run.history)


def test_divergence_returns_last_good(monkeypatch):
    real = dqn.combined_loss
    calls = {"n": 0}

    def flaky(*a, **k):
        calls["n"] += 1
        out = real(*a, **k)
        if calls["n"] > 400:
            return (float("nan"),) + out[1:]
        return out

    monkeypatch.setattr(dqn, "combined_loss", flaky)
    res = train(TrainConfig(seed=0, **TINY))
    assert res.diverged
    assert [r.step for r in res.history] == [500]
    assert all(np.all(np.isfinite(p)) for p in res.net.params())


def test_noexp_uses_narrow_reset():
    res = train(TrainConfig(seed=1, explore=False, **TINY))
    lo, hi = NARROW_RESET
    buf = res.replay
    first = buf.states[0]
    assert np.all(first >= lo) and np.all(first <= hi)
