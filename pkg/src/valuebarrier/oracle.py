"""Exact tabular analysis: partition, optimal values and barrier checks.

Everything here works on :class:`~valuebarrier.envs.TabularMDP` and is
exhaustive over the finite state set, so it serves as ground truth for the
sampled metrics used on continuous environments.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .envs import TabularMDP

UNSAFE, SAFE, IRREC = "unsafe", "safe", "irrecoverable"

# slack used when comparing barrier values against zero / each other
COMPARE_ATOL = 1e-9


@dataclass(frozen=True)
class Partition:
    """State labels plus irrecoverability depth.

    ``k[s]`` counts the reward-earning steps an irrecoverable state can still
    take before a violation is forced: 0 when every action enters the unsafe
    set immediately. With this count the optimal value of an irrecoverable
    state is exactly ``(1 - gamma**k) / (1 - gamma)``. ``k`` is -1 for safe
    and unsafe states.
    """

    labels: np.ndarray
    k: np.ndarray
    H: int

    def mask(self, label: str) -> np.ndarray:
        return self.labels == label


@dataclass(frozen=True)
class ExactValues:
    V: np.ndarray
    gamma: float
    sweeps: int = 0

    def Q(self, mdp: TabularMDP) -> np.ndarray:
        """One-step Bellman lookahead ``r + gamma * V(f(x, u))``."""
        nxt_unsafe = mdp.unsafe[mdp.next]
        return np.where(nxt_unsafe, 0.0, 1.0 + self.gamma * self.V[mdp.next])


def compute_partition(mdp: TabularMDP) -> Partition:
    """Label every state unsafe / irrecoverable / safe by backward induction.

    Level 0 holds the states whose every action lands in the unsafe set;
    level k holds the remaining states whose every action lands in the unsafe
    set or a lower level. States never reached by the induction can avoid the
    unsafe set forever and are safe.
    """
    n = mdp.n_states
    doomed = mdp.unsafe.copy()
    k = np.full(n, -1, dtype=np.int64)
    level = 0
    while True:
        new = ~doomed & np.all(doomed[mdp.next], axis=1)
        if not new.any():
            break
        k[new] = level
        doomed |= new
        level += 1
    labels = np.full(n, SAFE, dtype=object)
    labels[mdp.unsafe] = UNSAFE
    labels[~mdp.unsafe & doomed] = IRREC
    H = int(k.max()) if (k >= 0).any() else 0
    return Partition(labels.astype(str), k, H)


def value_iteration(mdp: TabularMDP, gamma: float, tol: float = 1e-9,
                    max_sweeps: int = 1_000_000) -> ExactValues:
    """Optimal values under the safety-preserving reward.

    Unsafe states are terminal (value 0). Iteration starts from the upper
    bound ``1/(1-gamma)`` so values decrease monotonically to the fixed point.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not 0 <= gamma < 1:
        raise ValueError("gamma must lie in [0, 1)")
    V = np.where(mdp.unsafe, 0.0, 1.0 / (1.0 - gamma))
    nxt_unsafe = mdp.unsafe[mdp.next]
    for sweep in range(1, max_sweeps + 1):
        Q = np.where(nxt_unsafe, 0.0, 1.0 + gamma * V[mdp.next])
        V_new = np.where(mdp.unsafe, 0.0, Q.max(axis=1))
        diff = np.max(np.abs(V_new - V))
        V = V_new
        if diff < tol:
            return ExactValues(V, gamma, sweep)
    raise RuntimeError(f"value iteration did not converge in {max_sweeps} sweeps")


def closed_form_values(partition: Partition, gamma: float) -> np.ndarray:
    """V* implied by the partition: 0, (1-g^k)/(1-g), or 1/(1-g)."""
    V = np.where(partition.labels == SAFE, 1.0 / (1.0 - gamma), 0.0)
    irr = partition.labels == IRREC
    V[irr] = (1.0 - gamma ** partition.k[irr]) / (1.0 - gamma)
    return V


def theorem_interval(gamma: float, H: int, eps: float = 0.0) -> tuple[float, float]:
    return (1 - gamma**H) / (1 - gamma) + eps, 1 / (1 - gamma) - eps


@dataclass
class Violation:
    state: int
    condition: str          # "rho1" or "rho2"
    h: float
    best_next_h: float


@dataclass
class TheoremReport:
    name: str
    R: float
    alpha: float
    h: np.ndarray
    best_next_h: np.ndarray
    rho1: np.ndarray
    rho2: np.ndarray
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    partition: Partition | None = None
    V: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_text(self) -> str:
        head = f"{self.name}: {len(self.violations)} violations (R={self.R:g}, alpha={self.alpha:g})"
        lines = [head]
        lines += [f"  warning: {w}" for w in self.warnings]
        for v in self.violations:
            lines.append(f"  state {v.state}: {v.condition} h={v.h:.6g} best_next_h={v.best_next_h:.6g}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["state_index", "label", "k", "V_star", "h", "rho1", "rho2"])
        for s in range(len(self.h)):
            label = self.partition.labels[s] if self.partition is not None else ""
            k = int(self.partition.k[s]) if self.partition is not None else ""
            V = repr(float(self.V[s])) if self.V is not None else ""
            w.writerow([s, label, k, V, repr(float(self.h[s])), int(self.rho1[s]), int(self.rho2[s])])
        return buf.getvalue()


def check_barrier(mdp: TabularMDP, h: np.ndarray, alpha: float, atol: float = COMPARE_ATOL):
    """Exhaustive evaluation of both barrier conditions for a tabular ``h``.

    Returns ``(rho1, rho2, best_next_h, violations)``. ``h >= -atol`` counts
    as inside the safe set, so boundary states are treated conservatively.
    """
    h = np.asarray(h, dtype=float)
    inside = h >= -atol
    best_next = h[mdp.next].max(axis=1)
    rho1 = ~(mdp.unsafe & inside)
    rho2 = ~(inside & (best_next < (1 - alpha) * h - atol))
    violations = []
    for s in np.flatnonzero(~rho1):
        violations.append(Violation(int(s), "rho1", float(h[s]), float(best_next[s])))
    for s in np.flatnonzero(~rho2):
        violations.append(Violation(int(s), "rho2", float(h[s]), float(best_next[s])))
    return rho1, rho2, best_next, violations


def verify_theorem1(mdp: TabularMDP, values: ExactValues, partition: Partition,
                    R: float, alpha: float = 0.1) -> TheoremReport:
    """Check that ``h = V* - R`` is a barrier function on every state."""
    lo, hi = theorem_interval(values.gamma, partition.H)
    warnings = []
    if not (lo < R <= hi + COMPARE_ATOL):
        warnings.append(f"R={R:g} outside admissible interval ({lo:g}, {hi:g}]")
    h = values.V - R
    rho1, rho2, best, viol = check_barrier(mdp, h, alpha)
    return TheoremReport("Theorem 1", R, alpha, h, best, rho1, rho2, viol, warnings,
                         partition, values.V)


def theorem2_preconditions(gamma: float, H: int, eps: float, R: float, alpha: float) -> list[str]:
    out = []
    if eps >= gamma**H / (2 * (1 - gamma)):
        out.append(f"eps={eps:g} violates eps < gamma^H/(2(1-gamma)) = {gamma**H / (2 * (1 - gamma)):g}")
    lo, hi = theorem_interval(gamma, H, eps)
    if not (lo < R <= hi + COMPARE_ATOL):
        out.append(f"R={R:g} outside admissible interval ({lo:g}, {hi:g}]")
    denom = 1 / (1 - gamma) + eps - R
    if denom <= 0 or alpha < 2 * eps / denom - COMPARE_ATOL or alpha > 1:
        out.append(f"alpha={alpha:g} outside [2 eps/(1/(1-gamma)+eps-R), 1]")
    return out


def verify_theorem2(mdp: TabularMDP, values: ExactValues, partition: Partition,
                    eps: float, R: float, alpha: float, perturbed_V) -> TheoremReport:
    """Check that ``h = V - R`` is a barrier for an eps-close ``V``."""
    V = np.asarray(perturbed_V, dtype=float)
    warnings = theorem2_preconditions(values.gamma, partition.H, eps, R, alpha)
    gap = np.max(np.abs(V - values.V))
    if gap > eps + COMPARE_ATOL:
        warnings.append(f"perturbation sup-norm {gap:g} exceeds eps={eps:g}")
    h = V - R
    rho1, rho2, best, viol = check_barrier(mdp, h, alpha)
    return TheoremReport("Theorem 2", R, alpha, h, best, rho1, rho2, viol, warnings,
                         partition, values.V)


def adversarial_perturbations(mdp: TabularMDP, values: ExactValues, partition: Partition,
                              eps: float):
    """Yield eps-bounded perturbations of V* that stress the barrier conditions.

    The first raises every non-safe state by ``eps`` and lowers every safe
    state by ``eps``. Then, for each safe state, one perturbation raises that
    state and lowers all of its successors, which is the worst case for the
    one-step decrease condition at that state.
    """
    base = values.V
    sign = np.where(partition.labels == SAFE, -1.0, 1.0)
    yield base + eps * sign
    for s in np.flatnonzero(partition.labels == SAFE):
        d = sign.copy()
        d[mdp.next[s]] = -1.0
        d[s] = 1.0
        yield base + eps * d


def worst_case_theorem2(mdp: TabularMDP, values: ExactValues, partition: Partition,
                        eps: float, R: float, alpha: float, strict: float = 1e-9) -> list[TheoremReport]:
    """Run :func:`verify_theorem2` on every adversarial perturbation.

    Perturbations are scaled by ``1 - strict`` because eps-optimality is a
    strict bound.
    """
    mag = eps * (1.0 - strict)
    return [verify_theorem2(mdp, values, partition, eps, R, alpha, V)
            for V in adversarial_perturbations(mdp, values, partition, mag)]
