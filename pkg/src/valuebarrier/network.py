"""Small numpy Q-network with hand-written backprop and Adam.

The network maps a state to one output per action. With the ``bounded`` head
each output is ``sigmoid(logit) / (1 - gamma)`` so Q-values stay inside the
range of the optimal value function; the pre-sigmoid logit is exposed because
it is itself a barrier function (it has the same sign as ``Q - 1/(2(1-gamma))``).
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

HEADS = ("unbounded", "bounded")
LOGIT_CLAMP = 30.0


@dataclass
class ValueNet:
    sizes: tuple
    weights: list
    biases: list
    head: str = "bounded"
    gamma: float = 0.99
    activation: str = "tanh"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.activation != "tanh":
            raise ValueError("only tanh hidden activations are supported")
        self.sizes = tuple(int(s) for s in self.sizes)

    @property
    def scale(self) -> float:
        return 1.0 / (1.0 - self.gamma)

    @property
    def n_actions(self) -> int:
        return self.sizes[-1]

    def params(self) -> list:
        """Flat list ``[W0, b0, W1, b1, ...]`` (views, not copies)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "ValueNet":
        return copy.deepcopy(self)

    def load_params(self, other: "ValueNet") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src


def init_net(sizes, head="bounded", gamma=0.99, rng=None) -> ValueNet:
    """Uniform fan-in initialisation, ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
    rng = np.random.default_rng(rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return ValueNet(tuple(sizes), weights, biases, head, gamma)


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)    # input to each layer
    hidden: list = field(default_factory=list)    # tanh outputs
    logit: np.ndarray | None = None
    q: np.ndarray | None = None
    clamped: np.ndarray | None = None              # logit inside clamp range


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def forward(net: ValueNet, x, return_cache: bool = False):
    """Evaluate ``(q, logit)`` for a state or a batch of states.

    For the unbounded head ``logit`` is the raw output and equals ``q``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = x[None, :] if single else x
    if a.shape[-1] != net.sizes[0]:
        raise ValueError(f"expected input dimension {net.sizes[0]}, got {a.shape[-1]}")
    cache = ForwardCache()
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        cache.inputs.append(a)
        z = a @ W + b
        if i < last:
            a = np.tanh(z)
            cache.hidden.append(a)
        else:
            out = z
    if net.head == "bounded":
        logit = np.clip(out, -LOGIT_CLAMP, LOGIT_CLAMP)
        cache.clamped = np.abs(out) < LOGIT_CLAMP
        q = sigmoid(logit) * net.scale
    else:
        logit = out
        q = out
    cache.logit, cache.q = logit, q
    if single:
        q, logit = q[0], logit[0]
    if return_cache:
        return q, logit, cache
    return q, logit


def q_values(net: ValueNet, x) -> np.ndarray:
    return forward(net, x)[0]


def value_of(net: ValueNet, x) -> np.ndarray:
    """State value ``V(x) = max_u Q(x, u)``."""
    return q_values(net, x).max(axis=-1)


def backward(net: ValueNet, cache: ForwardCache, dq) -> list:
    """Gradients of ``sum(dq * q)`` w.r.t. every parameter.

    ``dq`` has the same shape as the batched ``q`` from the forward pass.
    Returns a list congruent with :meth:`ValueNet.params`.
    """
    dq = np.asarray(dq, dtype=float)
    if dq.ndim == 1:
        dq = dq[None, :]
    if net.head == "bounded":
        s = cache.q / net.scale
        # d q / d logit = scale * s * (1 - s); zero where the clamp is active
        delta = dq * net.scale * s * (1.0 - s) * cache.clamped
    else:
        delta = dq
    grads = [None] * (2 * len(net.weights))
    for i in range(len(net.weights) - 1, -1, -1):
        grads[2 * i] = cache.inputs[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            h = cache.hidden[i - 1]
            delta = (delta @ net.weights[i].T) * (1.0 - h * h)
    return grads


def zeros_like(net: ValueNet) -> list:
    return [np.zeros_like(p) for p in net.params()]


class Adam:
    """Adam with bias correction, updating a :class:`ValueNet` in place."""

    def __init__(self, net: ValueNet, lr=2.5e-4, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = zeros_like(net)
        self.v = zeros_like(net)
        self.t = 0

    def step(self, net: ValueNet, grads) -> None:
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradient")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(net.params(), grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(net: ValueNet, grads, opt: Adam) -> ValueNet:
    opt.step(net, grads)
    return net


# -- checkpoint text format --------------------------------------------------

def save_checkpoint(net: ValueNet, path=None) -> str:
    """Serialise to the text format; writes ``path`` when given."""
    lines = [f"arch={net.activation}",
             f"head={net.head}",
             f"gamma={net.gamma!r}",
             "layers=" + ",".join(str(s) for s in net.sizes)]
    for p in net.params():
        lines.append(" ".join(repr(float(v)) for v in p.ravel()))
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def parse_checkpoint(text: str) -> ValueNet:
    lines = text.splitlines()
    header = {}
    for line in lines[:4]:
        key, _, val = line.partition("=")
        header[key.strip()] = val.strip()
    missing = {"arch", "head", "gamma", "layers"} - header.keys()
    if missing:
        raise ValueError(f"checkpoint header missing {sorted(missing)}")
    sizes = tuple(int(s) for s in header["layers"].split(","))
    body = lines[4:]
    n_layers = len(sizes) - 1
    if len(body) != 2 * n_layers:
        raise ValueError(f"expected {2 * n_layers} parameter lines, found {len(body)}")
    weights, biases = [], []
    for i in range(n_layers):
        W = np.array([float(v) for v in body[2 * i].split()]).reshape(sizes[i], sizes[i + 1])
        b = np.array([float(v) for v in body[2 * i + 1].split()]).reshape(sizes[i + 1])
        weights.append(W)
        biases.append(b)
    return ValueNet(sizes, weights, biases, header["head"], float(header["gamma"]), header["arch"])


def load_checkpoint(path) -> ValueNet:
    with open(path) as fh:
        return parse_checkpoint(fh.read())
