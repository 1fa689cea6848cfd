"""Concrete environments: cart-pole and a deterministic drift gridworld."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import SafetySpec

# -- cart-pole ---------------------------------------------------------------

GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
POLE_HALF_LENGTH = 0.5
FORCE_MAG = 10.0
DT = 0.02

X_LIMIT = 2.4
THETA_LIMIT = 12 * 2 * np.pi / 360

CARTPOLE_LOW = np.array([-3.0, -3.0, -0.30, -3.0])
CARTPOLE_HIGH = np.array([3.0, 3.0, 0.30, 3.0])

N_CARTPOLE_ACTIONS = 2


def cartpole_step(state, action):
    """One explicit-Euler step of the classic cart-pole.

    Works on a single state ``(4,)`` or a batch ``(n, 4)`` with a matching
    array of actions. Action 1 pushes right (+F), action 0 pushes left.
    """
    s = np.asarray(state, dtype=float)
    x, x_dot, theta, theta_dot = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    force = np.where(np.asarray(action) == 1, FORCE_MAG, -FORCE_MAG)
    total_mass = CART_MASS + POLE_MASS
    polemass_length = POLE_MASS * POLE_HALF_LENGTH
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)

    temp = (force + polemass_length * theta_dot**2 * sin_t) / total_mass
    theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos_t**2 / total_mass))
    x_acc = temp - polemass_length * theta_acc * cos_t / total_mass

    return np.stack([x + DT * x_dot,
                     x_dot + DT * x_acc,
                     theta + DT * theta_dot,
                     theta_dot + DT * theta_acc], axis=-1)


def cartpole_unsafe(states) -> np.ndarray:
    s = np.atleast_2d(np.asarray(states, dtype=float))
    return (np.abs(s[:, 0]) >= X_LIMIT) | (np.abs(s[:, 2]) >= THETA_LIMIT)


def cartpole_spec() -> SafetySpec:
    return SafetySpec(cartpole_unsafe, CARTPOLE_LOW.copy(), CARTPOLE_HIGH.copy())


def mirror(state):
    return -np.asarray(state, dtype=float)


# -- gridworld ---------------------------------------------------------------

# actions: up, right, down, left  (row, col) offsets
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))
DRIFT_CHARS = {"^": 0, ">": 1, "v": 2, "<": 3}
SAFE_CHAR = "."
HAZARD_CHAR = "H"

DEFAULT_GRIDMAP = """\
........
.HH.....
.HH.....
........
>>>>>H..
.....HH.
........
........
"""


@dataclass
class TabularMDP:
    """Finite deterministic MDP with an explicit successor table.

    ``next[s, a]`` is the successor of state ``s`` under action ``a``.
    Unsafe states are absorbing.
    """

    next: np.ndarray
    unsafe: np.ndarray
    width: int = 0
    height: int = 0
    drift: dict = field(default_factory=dict)

    def __post_init__(self):
        self.next = np.asarray(self.next, dtype=np.int64)
        self.unsafe = np.asarray(self.unsafe, dtype=bool)
        if self.next.ndim != 2:
            raise ValueError("successor table must be 2-d (states x actions)")
        if self.unsafe.shape != (self.next.shape[0],):
            raise ValueError("unsafe mask length must equal the number of states")
        if self.next.min() < 0 or self.next.max() >= self.n_states:
            raise ValueError("successor table entries out of range")

    @property
    def n_states(self) -> int:
        return self.next.shape[0]

    @property
    def n_actions(self) -> int:
        return self.next.shape[1]

    def cell(self, s: int) -> tuple[int, int]:
        return divmod(int(s), self.width)

    def index(self, row: int, col: int) -> int:
        return row * self.width + col

    def step(self, states, actions) -> np.ndarray:
        """Vectorised successor lookup, usable wherever dynamics are expected."""
        return self.next[np.asarray(states, dtype=np.int64), np.asarray(actions, dtype=np.int64)]

    def safety_spec(self) -> SafetySpec:
        """Spec over state indices; the box is nominal since metrics enumerate states."""
        return SafetySpec(lambda s: self.unsafe[np.asarray(s, dtype=np.int64).reshape(-1)],
                          np.array([0.0]), np.array([float(self.n_states)]))

    def rewards(self) -> np.ndarray:
        """Safety reward for every (state, action) pair."""
        return np.where(self.unsafe[self.next], 0.0, 1.0)


def gridworld_build(width: int, height: int, hazard_cells, drift_cells=None) -> TabularMDP:
    """Build a 4-action grid.

    ``hazard_cells`` is an iterable of ``(row, col)``; ``drift_cells`` maps
    ``(row, col)`` to a direction index (0 up, 1 right, 2 down, 3 left) that
    is applied regardless of the chosen action. Bumping into a wall leaves
    the agent in place.
    """
    if width < 3 or height < 3:
        raise ValueError("gridworld dimensions must be >= 3")
    drift_cells = dict(drift_cells or {})
    hazards = {tuple(c) for c in hazard_cells}
    for r, c in hazards | set(drift_cells):
        if not (0 <= r < height and 0 <= c < width):
            raise ValueError(f"cell {(r, c)} outside the {height}x{width} grid")
    if hazards & set(drift_cells):
        raise ValueError("a cell cannot be both hazard and drift")
    if len(hazards) == width * height:
        raise ValueError("hazards cover every cell; only trivial barriers exist")

    n = width * height
    nxt = np.empty((n, len(MOVES)), dtype=np.int64)
    unsafe = np.zeros(n, dtype=bool)
    for r in range(height):
        for c in range(width):
            s = r * width + c
            if (r, c) in hazards:
                unsafe[s] = True
                nxt[s] = s
                continue
            for a in range(len(MOVES)):
                dr, dc = MOVES[drift_cells.get((r, c), a)]
                rr, cc = r + dr, c + dc
                if not (0 <= rr < height and 0 <= cc < width):
                    rr, cc = r, c
                nxt[s, a] = rr * width + cc
    mdp = TabularMDP(nxt, unsafe, width, height, drift_cells)

    from .oracle import compute_partition

    if not np.any(compute_partition(mdp).labels == "safe"):
        raise ValueError("no indefinitely safe state; only trivial barriers exist")
    return mdp


def parse_gridmap(text: str) -> TabularMDP:
    """Parse the one-char-per-cell map format ('.', 'H', '^', '>', 'v', '<')."""
    rows = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty grid map")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("ragged grid map")
    hazards, drift = [], {}
    for r, line in enumerate(rows):
        for c, ch in enumerate(line):
            if ch == HAZARD_CHAR:
                hazards.append((r, c))
            elif ch in DRIFT_CHARS:
                drift[(r, c)] = DRIFT_CHARS[ch]
            elif ch != SAFE_CHAR:
                raise ValueError(f"unknown map character {ch!r} at {(r, c)}")
    return gridworld_build(width, len(rows), hazards, drift)


def format_gridmap(mdp: TabularMDP) -> str:
    inv = {v: k for k, v in DRIFT_CHARS.items()}
    lines = []
    for r in range(mdp.height):
        row = []
        for c in range(mdp.width):
            s = mdp.index(r, c)
            if mdp.unsafe[s]:
                row.append(HAZARD_CHAR)
            elif (r, c) in mdp.drift:
                row.append(inv[mdp.drift[(r, c)]])
            else:
                row.append(SAFE_CHAR)
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def default_gridworld() -> TabularMDP:
    """8x8 map with two hazard blobs and a five-cell drift corridor (H = 4)."""
    return parse_gridmap(DEFAULT_GRIDMAP)
