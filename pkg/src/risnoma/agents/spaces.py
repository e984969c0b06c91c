"""State features, the factored action layout and epsilon-greedy selection."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

N_MOVES = 5


@dataclass(frozen=True)
class HeadLayout:
    """Output layout of a factored Q-network.

    Heads, in order: ``m`` phase heads (one per sub-surface, ``n_phase``
    choices each), ``x`` move heads (5 choices) and ``x`` power heads
    (``n_power`` choices). A joint action is one index per head; only the
    phase head of the sub-surface being updated is active in a given epoch.
    """

    m: int
    n_phase: int
    x: int
    n_power: int

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.array([self.n_phase] * self.m + [N_MOVES] * self.x + [self.n_power] * self.x)

    @property
    def n_heads(self) -> int:
        return self.m + 2 * self.x

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]])

    @property
    def n_outputs(self) -> int:
        return int(self.sizes.sum())

    @property
    def per_step_choices(self) -> int:
        """Choices the agent scores per epoch: one phase head plus every robot head."""
        return self.n_phase + N_MOVES * self.x + self.n_power * self.x

    def phase_head(self, m: int) -> int:
        return m

    def move_head(self, i: int) -> int:
        return self.m + i

    def power_head(self, i: int) -> int:
        return self.m + self.x + i

    def head_of_output(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_heads), self.sizes)

    def active_heads(self, phase_index: int) -> np.ndarray:
        active = np.ones(self.n_heads, dtype=bool)
        active[: self.m] = False
        active[phase_index] = True
        return active


def featurize(phase_idx, cells, power_levels, bits: int, grid_shape: tuple[int, int],
              levels: np.ndarray, budget: float) -> np.ndarray:
    """Concatenate phases (as fractions of a turn), cell coordinates and powers.

    Length ``M + 3X``; every entry is scaled into [0, 1].
    """
    phases = np.asarray(phase_idx, dtype=float) / 2 ** bits
    cells = np.asarray(cells, dtype=float)
    pos = (cells + 0.5) / np.asarray(grid_shape, dtype=float)
    powers = levels[np.asarray(power_levels, dtype=int)] / budget
    return np.concatenate([phases, pos.reshape(-1), powers])


def epsilon_greedy(qvals, eps: float, rng: np.random.Generator, valid=None) -> int:
    """Greedy index (lowest on ties) with probability 1-eps, else uniform over valid actions."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    q = np.asarray(qvals, dtype=float)
    valid = np.ones(len(q), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    if not valid.any():
        raise ValueError("no valid action")
    if rng.random() < eps:
        return int(rng.choice(np.flatnonzero(valid)))
    return int(np.argmax(np.where(valid, q, -math.inf)))
