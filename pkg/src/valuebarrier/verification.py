"""Sampling-based validity / coverage metrics for candidate barrier functions."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .mdp import SafetySpec, sample_states

PLANES = {"pos-vel": (0, 1), "ang-angvel": (2, 3)}


@dataclass(frozen=True)
class VerificationConfig:
    n_samples: int = 10_000
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")


def _samples(config: VerificationConfig, spec: SafetySpec, states=None) -> np.ndarray:
    if states is not None:
        return np.asarray(states)
    rng = np.random.default_rng(config.seed)
    return sample_states(spec, rng, config.n_samples)


def rho1(h, x, is_unsafe) -> np.ndarray:
    """1 unless ``x`` is unsafe and ``h(x) >= 0``."""
    hx = np.asarray(h(x), dtype=float)
    return np.where(np.asarray(is_unsafe(x)) & (hx >= 0), 0, 1)


def best_successor(h, x, dynamics, n_actions: int) -> np.ndarray:
    """``max_u h(f(x, u))`` by exhaustive enumeration of actions."""
    x = np.asarray(x)
    n = x.shape[0]
    best = np.full(n, -np.inf)
    for u in range(n_actions):
        best = np.maximum(best, h(dynamics(x, np.full(n, u))))
    return best


def rho2(h, alpha: float, x, dynamics, n_actions: int, hx=None) -> np.ndarray:
    """1 unless ``h(x) >= 0`` and every successor drops below ``(1 - alpha) h(x)``."""
    hx = np.asarray(h(x) if hx is None else hx, dtype=float)
    best = best_successor(h, x, dynamics, n_actions)
    return np.where((hx >= 0) & (best < (1.0 - alpha) * hx), 0, 1)


def barrier_metrics(h, config: VerificationConfig, spec: SafetySpec, dynamics,
                    n_actions: int, states=None) -> dict:
    """Compute ``m_valid`` and ``m_cov`` on one shared sample set."""
    x = _samples(config, spec, states)
    hx = np.asarray(h(x), dtype=float)
    unsafe = np.asarray(spec.is_unsafe(x))
    r1 = np.where(unsafe & (hx >= 0), 0, 1)
    r2 = rho2(h, config.alpha, x, dynamics, n_actions, hx=hx)
    return {"m_valid": float(np.mean(r1 * r2)),
            "m_cov": float(np.mean(hx >= 0)),
            "rho1": float(np.mean(r1)),
            "rho2": float(np.mean(r2))}


def m_valid(h, config: VerificationConfig, spec: SafetySpec, dynamics, n_actions: int,
            states=None) -> float:
    return barrier_metrics(h, config, spec, dynamics, n_actions, states)["m_valid"]


def m_cov(h, config: VerificationConfig, spec: SafetySpec, states=None) -> float:
    x = _samples(config, spec, states)
    return float(np.mean(np.asarray(h(x)) >= 0))


def td_error_metric(qfun, gamma: float, config: VerificationConfig, spec: SafetySpec,
                    dynamics, states=None) -> float:
    """Mean absolute one-step Bellman residual of the greedy action.

    ``qfun`` maps a batch of states to ``(n, n_actions)`` Q-values. The
    successor's value is masked to zero when the successor is unsafe, as in
    training.
    """
    x = _samples(config, spec, states)
    q = np.asarray(qfun(x))
    a = q.argmax(axis=1)
    v = q[np.arange(len(a)), a]
    nxt = dynamics(x, a)
    nxt_unsafe = np.asarray(spec.is_unsafe(nxt))
    v_next = np.asarray(qfun(nxt)).max(axis=1)
    target = np.where(nxt_unsafe, 0.0, 1.0 + gamma * v_next)
    return float(np.mean(np.abs(target - v)))


# -- phase diagrams ----------------------------------------------------------

def phase_grid(h, plane: str, resolution: int, spec: SafetySpec) -> list[tuple]:
    """Evaluate ``h`` on a regular grid over one coordinate plane.

    The two off-plane coordinates are held at zero. Rows are
    ``(a, b, h, is_unsafe, in_safe_set)``.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if plane not in PLANES:
        raise ValueError(f"plane must be one of {sorted(PLANES)}")
    i, j = PLANES[plane]
    a = np.linspace(spec.low[i], spec.high[i], resolution)
    b = np.linspace(spec.low[j], spec.high[j], resolution)
    A, B = np.meshgrid(a, b, indexing="ij")
    x = np.zeros((A.size, spec.dim))
    x[:, i] = A.ravel()
    x[:, j] = B.ravel()
    hx = np.asarray(h(x), dtype=float)
    unsafe = np.asarray(spec.is_unsafe(x))
    return [(float(x[k, i]), float(x[k, j]), float(hx[k]), bool(unsafe[k]), bool(hx[k] >= 0))
            for k in range(len(hx))]


def phase_grid_csv(rows, plane: str, R: float, gamma: float, checkpoint_id: str = "") -> str:
    i, j = PLANES[plane]
    fixed = [k for k in range(4) if k not in (i, j)]
    buf = io.StringIO()
    buf.write(f"# plane={plane}\n")
    buf.write("# fixed=" + ",".join(f"x{k}=0" for k in fixed) + "\n")
    buf.write(f"# R={R!r}\n# gamma={gamma!r}\n# checkpoint={checkpoint_id}\n")
    w = csv.writer(buf)
    w.writerow(["a", "b", "h", "is_unsafe", "in_safe_set"])
    for a, b, hv, u, s in rows:
        w.writerow([repr(a), repr(b), repr(hv), int(u), int(s)])
    return buf.getvalue()
