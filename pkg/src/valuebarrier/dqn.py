"""Deep Q-learning of the safety value function on cart-pole.

The trainer is single-threaded and a pure function of its config: all
randomness flows from ``config.seed`` through named RNG streams.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import envs
from .barrier import make_barrier
from .mdp import sample_states
from .network import Adam, ValueNet, backward, forward, init_net
from .verification import VerificationConfig, barrier_metrics, td_error_metric

STREAMS = ("env", "init", "replay", "metrics", "shield")

SETTINGS = {
    "mlp": dict(arch="MLP", supervised=False, explore=True),
    "sigmoid": dict(arch="SIGMOID", supervised=False, explore=True),
    "mlp-sup": dict(arch="MLP", supervised=True, explore=True),
    "sigmoid-sup": dict(arch="SIGMOID", supervised=True, explore=True),
    "noexp": dict(arch="SIGMOID", supervised=True, explore=False),
}

NARROW_RESET = (np.full(4, -0.05), np.full(4, 0.05))
DIVERSE_RESET = (np.array([-2.2, -1.0, -0.18, -1.0]), np.array([2.2, 1.0, 0.18, 1.0]))


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass
class TrainConfig:
    total_steps: int = 500_000
    gamma: float = 0.99
    arch: str = "SIGMOID"
    supervised: bool = True
    explore: bool = True
    lr: float = 2.5e-4
    batch_size: int = 128
    buffer_size: int = 100_000
    target_update_period: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.1
    learning_starts: int = 10_000
    train_frequency: int = 1
    unsafe_batch_size: int = 128
    supervision_weight: float = 1.0
    hidden: tuple = (64, 64)
    max_episode_steps: int = 500
    eval_period: int = 10_000
    eval_episodes: int = 10
    eval_samples: int = 10_000
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self):
        if self.total_steps <= 0:
            raise ConfigError("total_steps", "must be positive")
        if not 0 <= self.gamma < 1:
            raise ConfigError("gamma", "must lie in [0, 1)")
        if self.arch not in ("MLP", "SIGMOID"):
            raise ConfigError("arch", "must be MLP or SIGMOID")
        if self.supervision_weight < 0:
            raise ConfigError("supervision_weight", "must be non-negative")
        for key in ("batch_size", "buffer_size", "target_update_period", "train_frequency",
                    "unsafe_batch_size", "max_episode_steps", "eval_period", "eval_episodes",
                    "eval_samples"):
            if getattr(self, key) <= 0:
                raise ConfigError(key, "must be positive")
        if self.lr <= 0:
            raise ConfigError("lr", "must be positive")

    @property
    def head(self) -> str:
        return "bounded" if self.arch == "SIGMOID" else "unbounded"

    def to_text(self) -> str:
        lines = ["# valuebarrier training config"]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, tuple):
                s = ",".join(str(i) for i in v)
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, **overrides) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep:
                raise ConfigError(key or f"line {lineno}", "expected 'key = value'")
            if key not in types:
                raise ConfigError(key, "unknown key")
            values[key] = _parse_value(key, types[key], val)
        values.update(overrides)
        return cls(**values)

    @classmethod
    def for_setting(cls, setting: str, **kw) -> "TrainConfig":
        if setting not in SETTINGS:
            raise ConfigError("setting", f"unknown setting {setting!r}; choose from {sorted(SETTINGS)}")
        return cls(**{**SETTINGS[setting], **kw})


def _parse_value(key, typ, val):
    typ = str(typ)
    try:
        if typ == "bool":
            low = val.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(val)
            return low in ("true", "1", "yes")
        if typ == "int":
            return int(val)
        if typ == "float":
            return float(val)
        if typ == "tuple":
            return tuple(int(v) for v in val.split(",") if v.strip())
        return val
    except ValueError:
        raise ConfigError(key, f"cannot parse {val!r} as {typ}") from None


def make_streams(seed: int) -> dict:
    """Independent named generators split from one master seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(STREAMS, children)}


def reset_state(config: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    """Initial state: the diverse box when exploring, the narrow box otherwise."""
    low, high = DIVERSE_RESET if config.explore else NARROW_RESET
    return rng.uniform(low, high)


def epsilon_at(config: TrainConfig, step: int) -> float:
    span = config.eps_fraction * config.total_steps
    frac = min(1.0, step / span) if span > 0 else 1.0
    return config.eps_start + frac * (config.eps_end - config.eps_start)


# -- replay ------------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity ring buffer sampled uniformly."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity)
        self.count = 0

    def __len__(self):
        return min(self.count, self.capacity)

    def add(self, state, action, reward, next_state, terminal):
        i = self.count % self.capacity
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.terminals[i] = float(terminal)
        self.count += 1

    def sample(self, rng: np.random.Generator, n: int):
        idx = rng.integers(0, len(self), size=n)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])


# -- losses ------------------------------------------------------------------

def td_targets(target_net: ValueNet, rewards, next_states, terminals) -> np.ndarray:
    """``r + gamma * max_u' Q_target(x', u')``, without bootstrap on termination.

    ``target_net`` may also be any callable returning Q-values, in which case
    ``gamma`` is taken from its ``gamma`` attribute.
    """
    if isinstance(target_net, ValueNet):
        q_next = forward(target_net, next_states)[0].max(axis=1)
    else:
        q_next = np.asarray(target_net(next_states)).max(axis=1)
    y = rewards + target_net.gamma * (1.0 - terminals) * q_next
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite TD target")
    return y


def td_loss(net: ValueNet, target_net: ValueNet, batch):
    """Mean squared TD error and its parameter gradients."""
    s, a, r, s2, d = batch
    y = td_targets(target_net, r, s2, d)
    q, _, cache = forward(net, s, return_cache=True)
    rows = np.arange(len(a))
    diff = q[rows, a] - y
    dq = np.zeros_like(q)
    dq[rows, a] = 2.0 * diff / len(a)
    return float(np.mean(diff**2)), backward(net, cache, dq)


def unsafe_supervision_loss(net: ValueNet, unsafe_states, is_unsafe=envs.cartpole_unsafe):
    """Mean of ``Q(x, u)**2`` over unsafe states and all actions."""
    x = np.asarray(unsafe_states, dtype=float)
    if not np.all(is_unsafe(x)):
        raise ValueError("unsafe supervision batch contains a safe state")
    q, _, cache = forward(net, x, return_cache=True)
    dq = 2.0 * q / q.size
    return float(np.mean(q**2)), backward(net, cache, dq)


def combined_loss(net: ValueNet, target_net: ValueNet, batch, unsafe_states=None, weight=1.0):
    """TD loss plus ``weight`` times the unsafe loss in a single forward pass.

    Returns ``(total, td, unsafe, grads)``; identical to summing
    :func:`td_loss` and :func:`unsafe_supervision_loss` separately.
    """
    s, a, r, s2, d = batch
    y = td_targets(target_net, r, s2, d)
    B = len(a)
    x = s if unsafe_states is None else np.concatenate([s, unsafe_states])
    q, _, cache = forward(net, x, return_cache=True)
    rows = np.arange(B)
    diff = q[rows, a] - y
    dq = np.zeros_like(q)
    dq[rows, a] = 2.0 * diff / B
    td = float(np.mean(diff**2))
    lu = 0.0
    if unsafe_states is not None:
        qu = q[B:]
        lu = float(np.mean(qu**2))
        dq[B:] = weight * 2.0 * qu / qu.size
    return td + weight * lu, td, lu, backward(net, cache, dq)


# -- evaluation --------------------------------------------------------------

def greedy_returns(net: ValueNet, starts: np.ndarray, max_steps: int = 500) -> np.ndarray:
    """Undiscounted safety return of the greedy policy from each start, run in lockstep."""
    x = np.array(starts, dtype=float)
    alive = ~envs.cartpole_unsafe(x)
    ret = np.zeros(len(x))
    for _ in range(max_steps):
        if not alive.any():
            break
        a = forward(net, x[alive])[0].argmax(axis=1)
        nxt = envs.cartpole_step(x[alive], a)
        ok = ~envs.cartpole_unsafe(nxt)
        idx = np.flatnonzero(alive)
        ret[idx[ok]] += 1.0
        x[idx] = nxt
        alive[idx[~ok]] = False
    return ret


@dataclass
class MetricsRecord:
    step: int
    return_mean: float
    td_error: float
    m_valid: float
    m_cov: float


CSV_COLUMNS = ("step", "return_mean", "td_error", "m_valid", "m_cov")


def metrics_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for rec in history:
        w.writerow([rec.step] + [repr(float(getattr(rec, c))) for c in CSV_COLUMNS[1:]])
    return buf.getvalue()


def read_metrics_csv(text: str) -> list[MetricsRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [MetricsRecord(int(r["step"]), *(float(r[c]) for c in CSV_COLUMNS[1:])) for r in rows]


class Evaluator:
    """Fixed evaluation sample set so successive records are comparable."""

    def __init__(self, config: TrainConfig, rng: np.random.Generator):
        self.config = config
        self.spec = envs.cartpole_spec()
        self.starts = rng.uniform(*NARROW_RESET, size=(config.eval_episodes, 4))
        self.vconf = VerificationConfig(config.eval_samples, config.alpha, int(rng.integers(2**31)))
        self.states = sample_states(self.spec, np.random.default_rng(self.vconf.seed), config.eval_samples)

    def __call__(self, net: ValueNet, step: int) -> MetricsRecord:
        ret = greedy_returns(net, self.starts, self.config.max_episode_steps)
        td = td_error_metric(lambda x: forward(net, x)[0], net.gamma, self.vconf, self.spec,
                             envs.cartpole_step, states=self.states)
        h = make_barrier(net)
        m = barrier_metrics(h, self.vconf, self.spec, envs.cartpole_step,
                            envs.N_CARTPOLE_ACTIONS, states=self.states)
        return MetricsRecord(step, float(ret.mean()), td, m["m_valid"], m["m_cov"])


# -- training loop -------------------------------------------------------------

@dataclass
class TrainResult:
    net: ValueNet
    history: list = field(default_factory=list)
    config: TrainConfig | None = None
    diverged: bool = False
    episodes: int = 0
    replay: ReplayBuffer | None = None

    @property
    def final(self) -> MetricsRecord | None:
        return self.history[-1] if self.history else None


def _greedy(net: ValueNet, x: np.ndarray) -> int:
    q = forward(net, x)[0]
    return int(q.argmax())


def _step_scalar(s, action):
    # scalar fast path of envs.cartpole_step
    x, x_dot, theta, theta_dot = s
    force = envs.FORCE_MAG if action == 1 else -envs.FORCE_MAG
    total = envs.CART_MASS + envs.POLE_MASS
    pml = envs.POLE_MASS * envs.POLE_HALF_LENGTH
    c, sn = math.cos(theta), math.sin(theta)
    temp = (force + pml * theta_dot * theta_dot * sn) / total
    th_acc = (envs.GRAVITY * sn - c * temp) / (
        envs.POLE_HALF_LENGTH * (4.0 / 3.0 - envs.POLE_MASS * c * c / total))
    x_acc = temp - pml * th_acc * c / total
    dt = envs.DT
    return (x + dt * x_dot, x_dot + dt * x_acc, theta + dt * theta_dot, theta_dot + dt * th_acc)


def train(config: TrainConfig, on_eval=None) -> TrainResult:
    """Run DQN on the safety-preserving cart-pole task.

    Every ``eval_period`` steps a :class:`MetricsRecord` is appended and
    ``on_eval(net, record)`` is called if given. A non-finite loss stops
    training and returns the network from the last evaluation.
    """
    cfg = config
    rngs = make_streams(cfg.seed)
    spec = envs.cartpole_spec()
    net = init_net((4, *cfg.hidden, envs.N_CARTPOLE_ACTIONS), cfg.head, cfg.gamma, rngs["init"])
    target = net.copy()
    opt = Adam(net, lr=cfg.lr)
    buf = ReplayBuffer(min(cfg.buffer_size, cfg.total_steps), 4)
    evaluator = Evaluator(cfg, rngs["metrics"])
    result = TrainResult(net, config=cfg, replay=buf)
    last_good = net.copy()

    env_rng, replay_rng = rngs["env"], rngs["replay"]
    x_lim, th_lim = envs.X_LIMIT, envs.THETA_LIMIT
    state = tuple(reset_state(cfg, env_rng))
    t_ep = 0
    for step in range(cfg.total_steps):
        if env_rng.random() < epsilon_at(cfg, step):
            action = int(env_rng.integers(envs.N_CARTPOLE_ACTIONS))
        else:
            action = _greedy(net, np.asarray(state))
        nxt = _step_scalar(state, action)
        if not all(map(math.isfinite, nxt)):
            raise FloatingPointError(f"non-finite state from dynamics: {nxt}")
        unsafe = abs(nxt[0]) >= x_lim or abs(nxt[2]) >= th_lim
        t_ep += 1
        buf.add(state, action, 0.0 if unsafe else 1.0, nxt, unsafe)
        if unsafe or t_ep >= cfg.max_episode_steps:
            state = tuple(reset_state(cfg, env_rng))
            t_ep = 0
            result.episodes += 1
        else:
            state = nxt

        if step >= cfg.learning_starts and step % cfg.train_frequency == 0:
            batch = buf.sample(replay_rng, cfg.batch_size)
            unsafe_x = None
            if cfg.supervised:
                unsafe_x = sample_states(spec, replay_rng, cfg.unsafe_batch_size, "unsafe_only")
            try:
                total, _, _, grads = combined_loss(net, target, batch, unsafe_x, cfg.supervision_weight)
                if not math.isfinite(total):
                    raise FloatingPointError("non-finite loss")
                opt.step(net, grads)
            except FloatingPointError:
                result.net = last_good
                result.diverged = True
                return result

        if (step + 1) % cfg.target_update_period == 0:
            target.load_params(net)
        if (step + 1) % cfg.eval_period == 0 or step + 1 == cfg.total_steps:
            rec = evaluator(net, step + 1)
            result.history.append(rec)
            last_good = net.copy()
            if on_eval is not None:
                on_eval(net, rec)
    return result


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
