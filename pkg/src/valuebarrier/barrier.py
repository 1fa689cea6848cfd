"""Barrier functions built from value functions, and transforms that keep them valid."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import ValueNet, forward

MODES = ("value_minus_R", "raw_logit")


def default_threshold(gamma: float) -> float:
    """Midpoint of the value range, ``1 / (2 (1 - gamma))``."""
    return 0.5 / (1.0 - gamma)


@dataclass
class BarrierFn:
    """Callable ``h`` over a batch of states (or tabular state indices)."""

    source: str            # "network" or "tabular"
    mode: str
    R: float
    gamma: float
    net: ValueNet | None = None
    V: np.ndarray | None = None

    def __call__(self, x) -> np.ndarray:
        if self.source == "tabular":
            return self.V[np.asarray(x)] - self.R
        q, logit = forward(self.net, x)
        if self.mode == "raw_logit":
            return logit.max(axis=-1)
        return q.max(axis=-1) - self.R

    def value(self, x) -> np.ndarray:
        if self.source == "tabular":
            return self.V[np.asarray(x)]
        return forward(self.net, x)[0].max(axis=-1)


def make_barrier(source, mode: str = "auto", R: float | None = None, gamma: float | None = None) -> BarrierFn:
    """Wrap a network or a tabular value vector as a barrier function.

    ``mode="auto"`` picks ``raw_logit`` for bounded-head networks and
    ``value_minus_R`` otherwise. ``raw_logit`` is only defined at the
    midpoint threshold, where it has the same zero set as ``V - R``.
    """
    if isinstance(source, ValueNet):
        gamma = source.gamma
        if mode == "auto":
            mode = "raw_logit" if source.head == "bounded" else "value_minus_R"
        if R is None:
            R = default_threshold(gamma)
        if mode not in MODES:
            raise ValueError(f"unknown barrier mode {mode!r}")
        if mode == "raw_logit":
            if source.head != "bounded":
                raise ValueError("raw_logit barrier requires a bounded-head network")
            if not np.isclose(R, default_threshold(gamma), rtol=0, atol=1e-9):
                raise ValueError(f"raw_logit barrier is only defined for R = {default_threshold(gamma):g}")
        return BarrierFn("network", mode, float(R), gamma, net=source)

    V = np.asarray(getattr(source, "V", source), dtype=float)
    gamma = getattr(source, "gamma", gamma)
    if gamma is None:
        raise ValueError("gamma required for a raw value vector")
    if mode not in ("auto", "value_minus_R"):
        raise ValueError("tabular barriers only support value_minus_R")
    if R is None:
        R = default_threshold(gamma)
    return BarrierFn("tabular", "value_minus_R", float(R), gamma, V=V)


# -- transforms --------------------------------------------------------------

@dataclass
class TransformSpec:
    w: Callable[[np.ndarray], np.ndarray]
    C: float
    name: str = ""
    domain: tuple = (-np.inf, np.inf)


@dataclass
class TransformCheck:
    passed: bool
    condition: str | None = None
    counterexample: tuple | None = None

    def __bool__(self):
        return self.passed


def identity_transform() -> TransformSpec:
    return TransformSpec(lambda x: np.asarray(x, dtype=float), 1.0, "identity")


def g_inverse(gamma: float) -> TransformSpec:
    """Undo the value scaling: ``x -> (1 - gamma) x``."""
    return TransformSpec(lambda x: (1.0 - gamma) * np.asarray(x, dtype=float), 1.0 - gamma, "g_inverse")


def sigma_tilde_inverse() -> TransformSpec:
    """Inverse of ``sigmoid(z) - 0.5`` on (-0.5, 0.5), i.e. ``2 artanh(2y)``."""
    return TransformSpec(lambda y: 2.0 * np.arctanh(2.0 * np.asarray(y, dtype=float)), 1.0,
                         "sigma_tilde_inverse", (-0.5, 0.5))


def compose(outer: TransformSpec, inner: TransformSpec, domain=None) -> TransformSpec:
    return TransformSpec(lambda x: outer.w(inner.w(x)), outer.C * inner.C,
                         f"{outer.name}∘{inner.name}", domain or inner.domain)


def logit_transform(gamma: float) -> TransformSpec:
    """Map ``V - R`` to the network logit at ``R = 1/(2(1-gamma))``."""
    half = default_threshold(gamma)
    return compose(sigma_tilde_inverse(), g_inverse(gamma), (-half, half))


def check_transform(spec: TransformSpec, points, pairs, rtol: float = 1e-12) -> TransformCheck:
    """Sample-based check of the three transform conditions.

    (i)  ``w(x) >= C x`` on sampled ``x >= 0``
    (ii) ``w(x) - w(y) >= C (x - y)`` on sampled pairs ordered so ``x >= y``
    (iii) ``w(x) >= 0`` exactly when ``x >= 0``

    ``rtol`` absorbs floating-point rounding in (i) and (ii). Returns the
    first counterexample found.
    """
    x = np.asarray(points, dtype=float)
    wx = spec.w(x)
    C = spec.C

    nonneg = x >= 0
    slack = rtol * (1.0 + np.abs(wx) + C * np.abs(x))
    bad = nonneg & (wx < C * x - slack)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        return TransformCheck(False, "i", (float(x[i]),))

    p = np.asarray(pairs, dtype=float).reshape(-1, 2)
    hi = np.maximum(p[:, 0], p[:, 1])
    lo = np.minimum(p[:, 0], p[:, 1])
    w_hi, w_lo = spec.w(hi), spec.w(lo)
    slack = rtol * (1.0 + np.abs(w_hi) + np.abs(w_lo) + C * (np.abs(hi) + np.abs(lo)))
    bad = (w_hi - w_lo) < C * (hi - lo) - slack
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        return TransformCheck(False, "ii", (float(hi[i]), float(lo[i])))

    bad = (wx >= 0) != nonneg
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        return TransformCheck(False, "iii", (float(x[i]),))
    return TransformCheck(True)


def sample_transform_inputs(low: float, high: float, n: int, rng=None, include=(0.0,)):
    """``n`` points and ``n`` pairs uniform on ``[low, high]`` plus fixed probes."""
    rng = np.random.default_rng(rng)
    pts = rng.uniform(low, high, size=n)
    probes = [v for v in include if low <= v <= high]
    pts = np.concatenate([pts, probes])
    pairs = rng.uniform(low, high, size=(n, 2))
    return pts, pairs


# -- admissible parameter regions ------------------------------------------------

def valid_R_interval(gamma: float, H: int, eps: float = 0.0) -> tuple[float, float]:
    """Open-closed interval of thresholds ``(lo, hi]`` for which ``V - R`` is a barrier."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    eps_max = gamma**H / (2.0 * (1.0 - gamma))
    if eps >= eps_max:
        raise ValueError(f"eps={eps:g} must be below gamma^H / (2 (1 - gamma)) = {eps_max:g}")
    return (1.0 - gamma**H) / (1.0 - gamma) + eps, 1.0 / (1.0 - gamma) - eps


def alpha_lower_bound(gamma: float, eps: float, R: float) -> float:
    """Smallest decay rate ``alpha`` that tolerates an eps-accurate value function."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    top = 1.0 / (1.0 - gamma)
    if eps == 0:
        if R > top:
            raise ValueError(f"R={R:g} exceeds 1/(1-gamma)={top:g}")
        return 0.0
    if R >= top - eps:
        raise ValueError(f"R={R:g} must be below 1/(1-gamma) - eps = {top - eps:g}")
    return 2.0 * eps / (top + eps - R)
