"""Reference lattice walks on Z^2: the vertex once-reinforced random walk
(ORRW) and the origin-excited random walk (OERW).

Both walks record first-visit times of their range; exporting the range
with sqrt(first visit time) per site reproduces the classic heatmaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError

__all__ = [
    "LatticeWalkState",
    "EXCITATION_RULES",
    "new_walk",
    "orrw_step",
    "oerw_step",
    "run_walk",
    "range_table",
]

EXCITATION_RULES = (
    "proportional-coordinate",
    "largest-coordinate",
    "both-coordinates",
)

_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))


@dataclass
class LatticeWalkState:
    position: tuple = (0, 0)
    first_visit: dict = field(default_factory=lambda: {(0, 0): 0})
    steps: int = 0
    a: float = 1.0                 # ORRW reinforcement strength
    rule: str | None = None        # OERW excitation rule
    box_halfwidth: int = 2000
    left_box: bool = False

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigError("reinforcement strength a must be positive")
        if self.rule is not None and self.rule not in EXCITATION_RULES:
            raise ConfigError(f"unknown excitation rule {self.rule!r}")


def new_walk(a: float = 1.0, rule: str | None = None,
             box_halfwidth: int = 2000) -> LatticeWalkState:
    return LatticeWalkState(a=a, rule=rule, box_halfwidth=box_halfwidth)


def _record(s: LatticeWalkState, pos: tuple) -> None:
    s.position = pos
    if pos not in s.first_visit:
        s.first_visit[pos] = s.steps
    if max(abs(pos[0]), abs(pos[1])) > s.box_halfwidth:
        s.left_box = True


def orrw_step(s: LatticeWalkState, rng: np.random.Generator) -> LatticeWalkState:
    """One vertex-once-reinforced step: neighbor weights are a if the vertex
    was visited before, 1 otherwise."""
    if s.left_box:
        return s
    x, y = s.position
    nbrs = ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))
    w0 = s.a if nbrs[0] in s.first_visit else 1.0
    w1 = s.a if nbrs[1] in s.first_visit else 1.0
    w2 = s.a if nbrs[2] in s.first_visit else 1.0
    w3 = s.a if nbrs[3] in s.first_visit else 1.0
    u = rng.random() * (w0 + w1 + w2 + w3)
    if u < w0:
        j = 0
    elif u < w0 + w1:
        j = 1
    elif u < w0 + w1 + w2:
        j = 2
    else:
        j = 3
    s.steps += 1
    _record(s, nbrs[j])
    return s


def _excitation(rule: str, pos: tuple, rng: np.random.Generator) -> tuple:
    """Unit displacement toward the origin prescribed by the excitation rule.

    Ties in "largest-coordinate" break toward the x-coordinate; zero
    coordinates are excluded from the proportional draw.
    """
    x, y = pos
    sx, sy = -int(np.sign(x)), -int(np.sign(y))
    if rule == "both-coordinates":
        return sx, sy
    if rule == "largest-coordinate":
        if abs(x) >= abs(y):
            return (sx, 0) if x != 0 else (0, sy)
        return 0, sy
    # proportional-coordinate
    ax, ay = abs(x), abs(y)
    if ax + ay == 0:
        return 0, 0
    if rng.uniform() < ax / (ax + ay):
        return sx, 0
    return 0, sy


def oerw_step(s: LatticeWalkState, rng: np.random.Generator) -> LatticeWalkState:
    """One origin-excited step: a unit move toward the origin on first visits
    to a site, a simple-random-walk step otherwise."""
    if s.rule is None:
        raise ConfigError("oerw_step needs a walk created with an excitation rule")
    if s.left_box:
        return s
    pos = s.position
    first_visit_here = s.first_visit.get(pos) == s.steps and pos != (0, 0)
    s.steps += 1
    if first_visit_here:
        dx, dy = _excitation(s.rule, pos, rng)
        if (dx, dy) != (0, 0):
            _record(s, (pos[0] + dx, pos[1] + dy))
            return s
    dx, dy = _NEIGHBORS[int(rng.random() * 4.0)]
    _record(s, (pos[0] + dx, pos[1] + dy))
    return s


def run_walk(
    s: LatticeWalkState,
    n_steps: int,
    rng: np.random.Generator,
    connectivity_check_every: int | None = None,
) -> LatticeWalkState:
    """Run the walk for n_steps (or until it leaves the box).

    With ``connectivity_check_every`` set, the range is verified to be a
    connected set containing the origin on that schedule.
    """
    stepper = orrw_step if s.rule is None else oerw_step
    for k in range(n_steps):
        stepper(s, rng)
        if s.left_box:
            break
        if connectivity_check_every and (k + 1) % connectivity_check_every == 0:
            if not range_is_connected(s):
                raise RuntimeError(f"range disconnected after {s.steps} steps")
    return s


def range_is_connected(s: LatticeWalkState) -> bool:
    """BFS connectivity of the visited set from the origin."""
    sites = set(s.first_visit)
    if (0, 0) not in sites:
        return False
    seen = {(0, 0)}
    frontier = [(0, 0)]
    while frontier:
        x, y = frontier.pop()
        for dx, dy in _NEIGHBORS:
            p = (x + dx, y + dy)
            if p in sites and p not in seen:
                seen.add(p)
                frontier.append(p)
    return len(seen) == len(sites)


def range_table(s: LatticeWalkState) -> np.ndarray:
    """Rows (x, y, sqrt(first visit step)) sorted by (x, y)."""
    rows = sorted((x, y, t) for (x, y), t in s.first_visit.items())
    out = np.array(rows, dtype=float)
    out[:, 2] = np.sqrt(out[:, 2])
    return out
