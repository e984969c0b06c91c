"""Power-domain NOMA rates with successive interference cancellation.

Robots are indexed from 0 here. A decoding order is the sequence of robot
indices in the order their signals are decoded: ``order[0]`` is decoded first
and suffers interference from everyone decoded after it.

Sums use ``math.fsum`` so results do not depend on summation order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_MAX_ROBOTS = 6


@dataclass(frozen=True)
class DecodingOrder:
    order: tuple[int, ...]

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"not a permutation of 0..{len(order) - 1}: {order}")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, x: int) -> "DecodingOrder":
        return cls(tuple(range(x)))

    def position(self, i: int) -> int:
        """Decode position of robot ``i`` (0 = decoded first)."""
        return self.order.index(i)

    def later(self, i: int) -> tuple[int, ...]:
        return self.order[self.position(i) + 1:]

    def __len__(self) -> int:
        return len(self.order)


@dataclass(frozen=True)
class PowerAllocation:
    p: tuple[float, ...]
    budget: float

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        if any(v < 0 for v in p):
            raise ValueError(f"negative power in {p}")
        if math.fsum(p) > self.budget * (1 + 1e-12):
            raise ValueError(f"powers {p} exceed budget {self.budget}")
        object.__setattr__(self, "p", p)


@dataclass(frozen=True)
class RateReport:
    per_robot_rate: tuple[float, ...]
    sum_rate: float
    sic_feasible: bool
    qos_met: tuple[bool, ...]
    order: DecodingOrder | None = None


def _powers(alloc) -> tuple[float, ...]:
    return alloc.p if isinstance(alloc, PowerAllocation) else tuple(float(v) for v in alloc)


def rate(sinr_value: float) -> float:
    if sinr_value < 0:
        raise ValueError("SINR must be >= 0")
    return math.log2(1.0 + sinr_value)


def sinr(i: int, order: DecodingOrder, gains: Sequence[float], alloc, noise: float) -> float:
    """SINR of robot ``i`` when every robot decoded after it interferes."""
    if noise <= 0:
        raise ValueError("noise must be > 0")
    p = _powers(alloc)
    g = float(gains[i])
    interference = math.fsum(p[j] for j in order.later(i))
    return g * p[i] / (g * interference + noise)


def _decode_rate_at(i: int, at: int, order: DecodingOrder, gains, p, noise) -> float:
    g = float(gains[at])
    interference = math.fsum(p[k] for k in order.later(i))
    return math.log2(1.0 + g * p[i] / (g * interference + noise))


def sic_fairness_ok(i: int, j: int, order: DecodingOrder, gains, alloc, noise: float) -> bool:
    """True if robot ``j`` can decode robot ``i``'s signal at least as well as ``i`` itself.

    Requires ``i`` to be decoded before ``j``.
    """
    if order.position(i) >= order.position(j):
        raise ValueError(f"robot {i} is not decoded before robot {j}")
    p = _powers(alloc)
    return _decode_rate_at(i, j, order, gains, p, noise) >= _decode_rate_at(i, i, order, gains, p, noise)


def _perm_rates(perm, g, p, noise) -> tuple[list[float], bool]:
    """Per-robot rates (indexed by robot) and SIC feasibility of one decode sequence."""
    x = len(perm)
    rates = [0.0] * x
    feasible = True
    for pos, i in enumerate(perm):
        interference = math.fsum(p[k] for k in perm[pos + 1:])
        gi = g[i]
        own = math.log2(1.0 + gi * p[i] / (gi * interference + noise))
        rates[i] = own
        if feasible:
            for j in perm[pos + 1:]:
                gj = g[j]
                if math.log2(1.0 + gj * p[i] / (gj * interference + noise)) < own:
                    feasible = False
                    break
    return rates, feasible


def order_feasible(order: DecodingOrder, gains, alloc, noise: float) -> bool:
    return _perm_rates(order.order, [float(v) for v in gains], _powers(alloc), noise)[1]


def evaluate_order(order: DecodingOrder, gains, alloc, noise: float, qos: float = 0.0) -> RateReport:
    p = _powers(alloc)
    if len(p) != len(order) or len(gains) != len(order):
        raise ValueError("gains, powers and order must have equal length")
    if noise <= 0:
        raise ValueError("noise must be > 0")
    rates, feasible = _perm_rates(order.order, [float(v) for v in gains], p, noise)
    return RateReport(tuple(rates), math.fsum(rates), feasible, tuple(r >= qos for r in rates), order)


def best_order(gains, alloc, noise: float, qos: float = 0.0,
               max_robots: int = DEFAULT_MAX_ROBOTS) -> tuple[DecodingOrder, float, RateReport]:
    """Exhaustive search over all X! orders.

    Returns the SIC-feasible order with the largest sum-rate, ties going to the
    lexicographically smallest permutation. When no order is feasible the best
    unconstrained order is returned with ``report.sic_feasible`` False.
    """
    x = len(gains)
    if x > max_robots:
        raise ValueError(f"X={x} exceeds the exhaustive-search cap {max_robots}")
    if noise <= 0:
        raise ValueError("noise must be > 0")
    p = _powers(alloc)
    if len(p) != x:
        raise ValueError("gains and powers must have equal length")
    perm, rates, total, feasible = search_orders([float(v) for v in gains], p, noise)
    order = DecodingOrder(perm)
    report = RateReport(tuple(rates), total, feasible, tuple(r >= qos for r in rates), order)
    return order, total, report


def search_orders(g: list[float], p, noise: float) -> tuple[tuple[int, ...], list[float], float, bool]:
    """Unchecked core of :func:`best_order`: (perm, rates, sum, feasible)."""
    best_f = best_a = None      # (sum, perm, rates)
    for perm in _PERMS.get(len(g)) or itertools.permutations(range(len(g))):
        rates, feasible = _perm_rates(perm, g, p, noise)
        total = math.fsum(rates)
        if best_a is None or total > best_a[0]:
            best_a = (total, perm, rates)
        if feasible and (best_f is None or total > best_f[0]):
            best_f = (total, perm, rates)
    total, perm, rates = best_f if best_f is not None else best_a
    return perm, rates, total, best_f is not None


_PERMS = {x: tuple(itertools.permutations(range(x))) for x in range(1, 5)}


def oma_rate(gains, alloc, noise: float, qos: float = 0.0) -> RateReport:
    """Equal-time TDMA: each robot transmits in a 1/X slot at X times its power."""
    p = _powers(alloc)
    x = len(p)
    rates = tuple(math.log2(1.0 + float(gains[i]) * p[i] * x / noise) / x for i in range(x))
    return RateReport(rates, math.fsum(rates), True, tuple(r >= qos for r in rates), None)


# -- power menu --------------------------------------------------------------------------

def power_levels(budget: float, fractions: Sequence[float]) -> np.ndarray:
    levels = budget * np.asarray(fractions, dtype=float)
    if np.any(levels < 0):
        raise ValueError("power levels must be >= 0")
    return levels


def level_mask(levels: np.ndarray, committed: float, budget: float, remaining_robots: int = 0) -> np.ndarray:
    """Levels a robot may pick given power ``committed`` by earlier robots.

    Leaves room for ``remaining_robots`` later robots at the cheapest level so
    sequential choices never dead-end.
    """
    reserve = remaining_robots * float(levels.min())
    return committed + levels + reserve <= budget * (1 + 1e-12)


def joint_power_menu(levels: np.ndarray, x: int, budget: float) -> list[tuple[int, ...]]:
    """All per-robot level-index tuples whose total power fits the budget."""
    return [c for c in itertools.product(range(len(levels)), repeat=x)
            if math.fsum(levels[list(c)]) <= budget * (1 + 1e-12)]
