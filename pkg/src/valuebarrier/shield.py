"""Runtime shield: keep the nominal action only while its Q-value clears R.

The Q-function provides the one-step lookahead implicitly, so deployment
needs Q evaluations only, never the dynamics model.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .network import ValueNet, forward


@dataclass
class ShieldConfig:
    R: float = 50.0
    nominal: str = "uniform_random"
    episodes: int = 100
    max_steps: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.episodes <= 0:
            raise ValueError("episodes must be positive")
        if self.nominal not in ("uniform_random", "scripted"):
            raise ValueError(f"unknown nominal policy {self.nominal!r}")


def shield_from_q(q_row, nominal_u: int, R: float) -> int:
    """Shield decision given the Q-values of one state.

    ``np.argmax`` returns the first maximiser, so ties go to the lowest index.
    """
    q_row = np.asarray(q_row)
    if q_row[nominal_u] >= R:
        return int(nominal_u)
    return int(np.argmax(q_row))


def shielded_action(net: ValueNet, x, nominal_u: int, R: float) -> int:
    return shield_from_q(forward(net, x)[0], nominal_u, R)


@dataclass
class Trajectory:
    states: list = field(default_factory=list)      # state before each step
    actions: list = field(default_factory=list)
    nominal: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    violated: bool = False

    @property
    def length(self) -> int:
        return len(self.actions)

    @property
    def safe_steps(self) -> int:
        return self.length - int(self.violated)


@dataclass
class ShieldResult:
    mean_length: float
    mean_return: float
    success_rate: float
    lengths: np.ndarray
    trajectories: list


def rollout_shielded(qfun, config: ShieldConfig, reset, dynamics, is_unsafe,
                     n_actions: int, shielded: bool = True, scripted=None) -> ShieldResult:
    """Roll out ``config.episodes`` episodes of the shielded nominal policy.

    ``qfun(x)`` returns the Q-values of a single state; ``reset(rng)`` draws a
    start state. Episode ``i`` uses its own RNG stream for the reset and the
    nominal draws, so ``shielded=False`` replays exactly the same starts and
    nominal choices without intervention. An episode succeeds when it reaches
    ``max_steps`` without entering the unsafe set.
    """
    streams = np.random.SeedSequence(config.seed).spawn(config.episodes)
    trajs = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        x = np.asarray(reset(rng), dtype=float)
        tr = Trajectory()
        for t in range(config.max_steps):
            if config.nominal == "scripted":
                nom = int(scripted(x, t))
            else:
                nom = int(rng.integers(n_actions))
            u = shield_from_q(qfun(x), nom, config.R) if shielded else nom
            tr.states.append(x)
            tr.actions.append(u)
            tr.nominal.append(nom)
            x = np.asarray(dynamics(x, u), dtype=float)
            if bool(np.asarray(is_unsafe(x)).reshape(-1)[0]):
                tr.violated = True
                break
        tr.final_state = x
        trajs.append(tr)
    lengths = np.array([t.length for t in trajs], dtype=float)
    returns = np.array([t.safe_steps for t in trajs], dtype=float)
    success = np.mean([not t.violated for t in trajs])
    return ShieldResult(float(lengths.mean()), float(returns.mean()), float(success), lengths, trajs)


def export_trace(trajectories, out=None) -> str:
    """Per-step CSV rows: episode, t, state components, action, nominal, intervened."""
    if not trajectories:
        raise ValueError("no trajectories to export")
    dim = np.atleast_1d(trajectories[0].states[0]).size if trajectories[0].states else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "t"] + [f"x{i}" for i in range(dim)] + ["action", "nominal", "shield_intervened"])
    for ep, tr in enumerate(trajectories):
        for t, (x, u, nom) in enumerate(zip(tr.states, tr.actions, tr.nominal)):
            w.writerow([ep, t] + [repr(float(v)) for v in np.atleast_1d(x)] + [u, nom, int(u != nom)])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text)
    return text


def summary_csv(result: ShieldResult, R: float, label: str = "") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "R", "episodes", "mean_length", "mean_return", "success_rate"])
    w.writerow([label, repr(float(R)), len(result.lengths), repr(result.mean_length),
                repr(result.mean_return), repr(result.success_rate)])
    return buf.getvalue()


# -- exact check on tabular MDPs -----------------------------------------------

def adversarial_shield_check(mdp, Q: np.ndarray, R: float, starts, depth: int = 6) -> list:
    """Enumerate every nominal action sequence up to ``depth`` from each start.

    Returns ``(start, nominal_sequence)`` pairs whose shielded rollout enters
    the unsafe set; an empty list means the shield held everywhere.
    """
    failures = []
    n_actions = mdp.n_actions

    def dfs(start, s, seq):
        if len(seq) == depth:
            return
        for nom in range(n_actions):
            u = shield_from_q(Q[s], nom, R)
            s2 = int(mdp.next[s, u])
            if mdp.unsafe[s2]:
                failures.append((start, tuple(seq) + (nom,)))
                continue
            dfs(start, s2, seq + [nom])

    for s0 in starts:
        dfs(int(s0), int(s0), [])
    return failures
