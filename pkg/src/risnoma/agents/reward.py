"""Per-epoch reward: sum-rate improvement, QoS shortfall penalty and collision override."""
from __future__ import annotations

import math
from typing import Sequence

from ..gridworld import Cell, any_collision

COLLISION_REWARD = -10.0


def reward(prev_rates: Sequence[float], next_rates: Sequence[float], collision: bool,
           qos_rate: float = 0.2, qos_penalty: float = 1.0) -> float:
    if collision:
        return COLLISION_REWARD
    shortfall = sum(1 for r in next_rates if r < qos_rate)
    return math.fsum(next_rates) - math.fsum(prev_rates) - qos_penalty * shortfall


def step_reward(next_cells: Sequence[Cell], prev_rates, next_rates,
                qos_rate: float = 0.2, qos_penalty: float = 1.0) -> tuple[float, bool]:
    """Reward for a move that lands robots on ``next_cells``; also returns the collision flag."""
    collision = any_collision(next_cells)
    return reward(prev_rates, next_rates, collision, qos_rate, qos_penalty), collision
