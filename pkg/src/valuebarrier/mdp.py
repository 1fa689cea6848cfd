"""Deterministic MDP vocabulary shared across the package.

States are plain float arrays. A :class:`SafetySpec` couples the unsafe-set
predicate with the bounded box used for sampling, and
:func:`wrap_episode_step` turns raw dynamics into the 0/1 safety-preserving
reward with early termination.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

MAX_REJECTION_DRAWS = 10**6
DEFAULT_STEP_CAP = 500


class TerminatedEpisodeError(RuntimeError):
    """Raised when stepping an episode that has already ended."""


@dataclass(frozen=True)
class SafetySpec:
    """Unsafe-set predicate plus the sampling box.

    ``is_unsafe`` must accept a batch of states with shape ``(n, dim)`` and
    return a boolean array of shape ``(n,)``.
    """

    is_unsafe: Callable[[np.ndarray], np.ndarray]
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != high.shape or low.ndim != 1:
            raise ValueError("low/high must be 1-d arrays of equal length")
        if not np.all(high > low):
            raise ValueError("sample box must have strictly positive volume")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    def unsafe(self, state) -> bool:
        """Scalar convenience wrapper around ``is_unsafe``."""
        x = np.asarray(state, dtype=float).reshape(1, -1)
        return bool(self.is_unsafe(x)[0])


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool
    truncated: bool = False


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite state encountered: {x!r}")


def safety_reward(next_state, spec: SafetySpec) -> float:
    """0 when ``next_state`` is unsafe, 1 otherwise."""
    x = np.asarray(next_state, dtype=float)
    _check_finite(x)
    return 0.0 if spec.unsafe(x) else 1.0


def safety_rewards(next_states: np.ndarray, spec: SafetySpec) -> np.ndarray:
    """Vectorised :func:`safety_reward` over a ``(n, dim)`` batch."""
    xs = np.asarray(next_states, dtype=float)
    _check_finite(xs)
    return np.where(spec.is_unsafe(xs), 0.0, 1.0)


class SafetyEpisode:
    """Single episode of an environment under the safety-preserving wrapper.

    ``dynamics(state, action) -> next_state``. Reaching an unsafe state
    terminates the episode with reward 0; reaching ``step_cap`` steps while
    safe truncates it (reward 1, bootstrapping still valid).
    """

    def __init__(self, dynamics, spec: SafetySpec, initial_state, step_cap: int = DEFAULT_STEP_CAP):
        self.dynamics = dynamics
        self.spec = spec
        self.step_cap = step_cap
        self.state = np.asarray(initial_state, dtype=float)
        self.t = 0
        self.done = False

    def step(self, action: int) -> Transition:
        if self.done:
            raise TerminatedEpisodeError("step() called on a finished episode")
        tr = wrap_episode_step(self.dynamics, self.state, action, self.spec,
                               t=self.t, step_cap=self.step_cap)
        self.t += 1
        self.state = tr.next_state
        self.done = tr.terminal or tr.truncated
        return tr


def wrap_episode_step(dynamics, state, action: int, spec: SafetySpec, t: int = 0,
                      step_cap: int = DEFAULT_STEP_CAP) -> Transition:
    """Apply ``dynamics`` once and label the transition.

    ``t`` is the number of steps already taken in the episode, so the step
    that brings the count to ``step_cap`` is flagged truncated.
    """
    x = np.asarray(state, dtype=float)
    _check_finite(x)
    nxt = np.asarray(dynamics(x, action), dtype=float)
    r = safety_reward(nxt, spec)
    terminal = r == 0.0
    truncated = (not terminal) and (t + 1 >= step_cap)
    return Transition(x, int(action), r, nxt, terminal, truncated)


def sample_states(spec: SafetySpec, rng: np.random.Generator, n: int,
                  mode: str = "uniform_box") -> np.ndarray:
    """Draw ``n`` states from the sample box.

    ``mode="unsafe_only"`` rejection-samples the box restricted to the unsafe
    set; more than :data:`MAX_REJECTION_DRAWS` total draws raises.
    """
    if mode == "uniform_box":
        return rng.uniform(spec.low, spec.high, size=(n, spec.dim))
    if mode != "unsafe_only":
        raise ValueError(f"unknown sampling mode {mode!r}")
    out = np.empty((n, spec.dim))
    filled = 0
    drawn = 0
    while filled < n:
        chunk = max(2 * (n - filled), drawn, 16)
        if drawn + chunk > MAX_REJECTION_DRAWS:
            chunk = MAX_REJECTION_DRAWS - drawn
            if chunk <= 0:
                raise RuntimeError(
                    f"rejection sampling exceeded {MAX_REJECTION_DRAWS} draws; "
                    "unsafe set has negligible measure in the sample box")
        xs = rng.uniform(spec.low, spec.high, size=(chunk, spec.dim))
        drawn += chunk
        hits = xs[spec.is_unsafe(xs)]
        take = min(len(hits), n - filled)
        out[filled:filled + take] = hits[:take]
        filled += take
    return out


def sample_state(spec: SafetySpec, rng: np.random.Generator, mode: str = "uniform_box") -> np.ndarray:
    return sample_states(spec, rng, 1, mode)[0]
