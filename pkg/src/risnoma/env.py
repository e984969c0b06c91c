"""Episode executor tying the grid, channel field, NOMA rates and reward together."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents.reward import step_reward
from .agents.spaces import N_MOVES, HeadLayout, featurize
from .channel import ChannelField
from .gridworld import MOVE_OFFSETS, Cell, GridMap, InvalidMoveError, Move, RobotPose, apply_action
from .noma import DecodingOrder, evaluate_order, level_mask, oma_rate, search_orders


@dataclass(frozen=True)
class Scheme:
    ris: bool = True
    access: str = "noma"            # noma | oma
    phase_mode: str = "learned"     # learned | random | fixed
    bits: int | None = None         # overrides the configured resolution
    order_mode: str = "optimal"     # optimal | random | fixed


SCHEMES = {
    "ris-noma": Scheme(),
    "ris-oma": Scheme(access="oma"),
    "no-ris-noma": Scheme(ris=False, phase_mode="fixed"),
    "no-ris-oma": Scheme(ris=False, access="oma", phase_mode="fixed"),
    "random-phase": Scheme(phase_mode="random"),
    "fixed-phase": Scheme(phase_mode="fixed"),
    "1bit": Scheme(bits=1),
    "2bit": Scheme(bits=2),
    "random-order": Scheme(order_mode="random"),
    "fixed-order": Scheme(order_mode="fixed"),
}


def scheme_for(variant: str) -> Scheme:
    try:
        return SCHEMES[variant]
    except KeyError:
        raise ValueError(f"unknown baseline variant {variant!r}; choose from {sorted(SCHEMES)}") from None


@dataclass
class StepInfo:
    rates: tuple[float, ...]
    sum_rate: float
    prev_sum_rate: float
    collision: bool
    moves: tuple[int, ...]
    sic_feasible: bool
    forced_still: int = 0


@dataclass
class EnvParams:
    horizon: int
    bits: int
    levels: np.ndarray
    budget: float
    noise: float
    qos_rate: float = 0.2
    qos_penalty: float = 1.0
    seed: int = 0
    max_robots: int = 6


class RobotEnv:
    """Multi-robot episode with one joint decision per epoch.

    The agent scores every head; :meth:`select` turns those scores into a
    valid joint action (sequential exclusivity, deadline and stillness rules),
    and :meth:`step` executes it.
    """

    def __init__(self, grid: GridMap, field_: ChannelField, starts: list[Cell], goals: list[Cell],
                 params: EnvParams, scheme: Scheme = Scheme()):
        if len(starts) != len(goals) or not starts:
            raise ValueError("need one goal per start")
        if scheme.access == "noma" and len(starts) > params.max_robots:
            raise ValueError(f"X={len(starts)} exceeds the exhaustive-search cap {params.max_robots}")
        for c in list(starts) + list(goals):
            if not grid.is_free(c):
                raise InvalidMoveError(f"endpoint cell {c} is not free")
        self.grid = grid
        self.field = field_
        self.starts = [tuple(c) for c in starts]
        self.goals = [tuple(c) for c in goals]
        self.p = params
        self.scheme = scheme
        self.x = len(starts)
        self.m = field_.m
        self.bits = scheme.bits if scheme.bits is not None else params.bits
        n_phase = 2 ** self.bits if (scheme.phase_mode == "learned" and scheme.ris) else 1
        self.layout = HeadLayout(self.m, n_phase, self.x, len(params.levels))
        self.dist = [grid.distance_field(g) for g in self.goals]
        for i, (s, d) in enumerate(zip(self.starts, self.dist)):
            if d[s] < 0:
                raise InvalidMoveError(f"robot {i + 1}: goal {self.goals[i]} unreachable from {s}")
            if d[s] > params.horizon:
                raise ValueError(f"horizon {params.horizon} too short for robot {i + 1} (needs {d[s]})")
        # free_moves[col, row, mv]: target of mv is a free in-bounds cell
        self._free_moves = np.zeros((grid.n_cols, grid.n_rows, N_MOVES), dtype=bool)
        padded = np.zeros((grid.n_cols + 2, grid.n_rows + 2), dtype=bool)
        padded[1:-1, 1:-1] = grid.free
        for mv in range(N_MOVES):
            dx, dy = int(MOVE_OFFSETS[mv, 0]), int(MOVE_OFFSETS[mv, 1])
            self._free_moves[:, :, mv] = padded[1 + dx:1 + dx + grid.n_cols, 1 + dy:1 + dy + grid.n_rows]
        self._free_moves = self._free_moves.tolist()
        self._offsets = [(int(MOVE_OFFSETS[mv, 0]), int(MOVE_OFFSETS[mv, 1])) for mv in range(N_MOVES)]
        self._dist = [d.tolist() for d in self.dist]
        self._head_offsets = self.layout.offsets.tolist()
        self._levels = self.p.levels.tolist()
        self._active = [self.layout.active_heads(k) for k in range(self.m)]
        self._power_masks: dict[tuple[float, int], list[bool]] = {}
        self.fixed_order: DecodingOrder | None = None
        self.episode = 0
        self.t = 0

    # -- state ---------------------------------------------------------------------------

    def reset(self, episode: int) -> np.ndarray:
        self.episode = episode
        self.t = 0
        self.rng = np.random.default_rng([self.p.seed, episode, 0xE9])
        self.cells = list(self.starts)
        if self.scheme.phase_mode == "learned" and self.scheme.ris:
            self.phase_idx = self.rng.integers(0, 2 ** self.bits, self.m)
        elif self.scheme.phase_mode == "random":
            self.phase_idx = self.rng.integers(0, 2 ** self.bits, self.m)
        else:
            self.phase_idx = np.zeros(self.m, dtype=np.int64)
        self.power_idx = self._random_powers()
        if self.scheme.order_mode == "fixed" and self.fixed_order is None:
            self.fixed_order = DecodingOrder(self._rates(self.cells, self.phase_idx, self.power_idx, 0)[2])
        return self.features()

    def _random_powers(self) -> np.ndarray:
        out, committed = [], 0.0
        for i in range(self.x):
            mask = level_mask(self.p.levels, committed, self.p.budget, self.x - i - 1)
            k = int(self.rng.choice(np.flatnonzero(mask)))
            out.append(k)
            committed += self.p.levels[k]
        return np.asarray(out)

    def features(self) -> np.ndarray:
        return featurize(self.phase_idx, self.cells, self.power_idx, self.bits,
                         (self.grid.n_cols, self.grid.n_rows), self.p.levels, self.p.budget)

    @property
    def active_phase(self) -> int:
        return self.t % self.m

    def active(self) -> np.ndarray:
        return self._active[self.active_phase].copy()

    def at_goal(self, i: int, cells=None) -> bool:
        return (cells or self.cells)[i] == self.goals[i]

    def done(self) -> bool:
        return self.t >= self.p.horizon or all(self.at_goal(i) for i in range(self.x))

    # -- masks ---------------------------------------------------------------------------

    def _move_mask(self, i: int, occupied, deadline: bool) -> list[bool]:
        c, r = self.cells[i]
        left = self.p.horizon - (self.t + 1)
        mask = list(self._free_moves[c][r])
        dist = self._dist[i]
        for mv in range(N_MOVES):
            if not mask[mv]:
                continue
            dx, dy = self._offsets[mv]
            tgt = (c + dx, r + dy)
            if (mv != Move.STILL and tgt in occupied) or (deadline and dist[tgt[0]][tgt[1]] > left):
                mask[mv] = False
        return mask

    def _power_mask(self, committed: float, remaining: int) -> list[bool]:
        key = (committed, remaining)
        mask = self._power_masks.get(key)
        if mask is None:
            mask = self._power_masks[key] = level_mask(self.p.levels, committed, self.p.budget,
                                                       remaining).tolist()
        return mask

    def valid_outputs(self) -> np.ndarray:
        """Independent per-head masks of the current state (used for bootstrapping)."""
        lay = self.layout
        valid = [True] * lay.n_outputs
        off = self._head_offsets
        for i in range(self.x):
            o = off[lay.move_head(i)]
            if self.at_goal(i):
                m = [False] * N_MOVES
                m[Move.STILL] = True
            else:
                others = [c for j, c in enumerate(self.cells) if j != i]
                m = self._move_mask(i, others, True)
                if not any(m):
                    m = self._move_mask(i, others, False)
                if self.x == 1 and sum(m) > 1:
                    m[Move.STILL] = False
            valid[o:o + N_MOVES] = m
        power = self._power_mask(0.0, self.x - 1)
        for i in range(self.x):
            o = off[lay.power_head(i)]
            valid[o:o + lay.n_power] = power
        return np.array(valid, dtype=bool)

    def select(self, qcols: np.ndarray | None, explore: bool, rng: np.random.Generator) -> np.ndarray:
        """Build a valid joint action head by head.

        ``qcols`` holds one value per output. When ``explore`` is set every head
        picks uniformly among its valid choices and ``qcols`` may be None,
        otherwise each head takes its best valid choice.
        """
        lay = self.layout
        off = self._head_offsets
        q_all = None if explore else qcols.tolist()
        actions = [0] * lay.n_heads

        def pick(head: int, mask: list[bool]) -> int:
            if explore:
                choices = [k for k, ok in enumerate(mask) if ok]
                return choices[int(rng.integers(len(choices)))]
            q = q_all[off[head]:off[head] + len(mask)]
            best, best_k = -math.inf, -1
            for k, ok in enumerate(mask):
                # strict > keeps the lowest index on ties
                if ok and (best_k < 0 or q[k] > best):
                    best, best_k = q[k], k
            return best_k

        ph = lay.phase_head(self.active_phase)
        actions[ph] = pick(ph, [True] * lay.n_phase)

        new_cells = list(self.cells)
        # parked robots are still whatever their index, so count them up front
        n_still = sum(self.at_goal(i) for i in range(self.x))
        last_mover = max((i for i in range(self.x) if not self.at_goal(i)), default=-1)
        self._forced_still = 0
        for i in range(self.x):
            if self.at_goal(i):
                actions[lay.move_head(i)] = Move.STILL
                continue
            occupied = [c for j, c in enumerate(new_cells) if j != i]
            lone = i == last_mover and n_still == self.x - 1
            mask = self._move_mask(i, occupied, True)
            if lone:
                mask[Move.STILL] = False
            if not any(mask):
                mask = self._move_mask(i, occupied, False)
                if lone:
                    mask[Move.STILL] = False
            if not any(mask):
                mask[Move.STILL] = True
                self._forced_still += 1
            mv = pick(lay.move_head(i), mask)
            actions[lay.move_head(i)] = mv
            n_still += mv == Move.STILL
            dx, dy = self._offsets[mv]
            new_cells[i] = (self.cells[i][0] + dx, self.cells[i][1] + dy)

        committed = 0.0
        for i in range(self.x):
            k = pick(lay.power_head(i), self._power_mask(committed, self.x - i - 1))
            actions[lay.power_head(i)] = k
            committed += self._levels[k]
        return np.array(actions, dtype=np.int64)

    # -- dynamics ------------------------------------------------------------------------

    def _thetas(self, phase_idx) -> np.ndarray:
        return (2.0 * math.pi / 2 ** self.bits) * np.asarray(phase_idx, dtype=float)

    def _rates(self, cells, phase_idx, power_idx, epoch: int):
        gains = self.field.gains(cells, self._thetas(phase_idx), self.scheme.ris, self.p.seed, self.episode, epoch)
        return self._rates_from(gains, power_idx)

    def _rates_from(self, gains, power_idx):
        """(per-robot rates, sum-rate, decoding order or None, SIC feasible)."""
        powers = self.p.levels[np.asarray(power_idx)]
        if self.scheme.access == "oma":
            rep = oma_rate(gains, powers, self.p.noise, self.p.qos_rate)
            return rep.per_robot_rate, rep.sum_rate, None, True
        mode = self.scheme.order_mode
        if mode == "optimal" or (mode == "fixed" and self.fixed_order is None):
            perm, rates, total, feasible = search_orders(gains.tolist(), powers.tolist(), self.p.noise)
            return rates, total, perm, feasible
        order = self.fixed_order if mode == "fixed" else DecodingOrder(tuple(self.rng.permutation(self.x)))
        rep = evaluate_order(order, gains, powers, self.p.noise, self.p.qos_rate)
        return rep.per_robot_rate, rep.sum_rate, order, rep.sic_feasible

    def rates_now(self, epoch: int | None = None):
        return self._rates(self.cells, self.phase_idx, self.power_idx, self.t if epoch is None else epoch)

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, float, bool, StepInfo]:
        if self.done():
            raise RuntimeError("step() called on a finished episode")
        lay = self.layout
        epoch = self.t
        prev_cells = list(self.cells)
        prev_phase = self.phase_idx.copy()
        prev_power = self.power_idx.copy()

        if self.scheme.ris and self.scheme.phase_mode == "learned":
            self.phase_idx[self.active_phase] = int(actions[lay.phase_head(self.active_phase)])
        elif self.scheme.phase_mode == "random":
            self.phase_idx = self.rng.integers(0, 2 ** self.bits, self.m)
        self.power_idx = np.array([int(actions[lay.power_head(i)]) for i in range(self.x)])
        if math.fsum(self.p.levels[self.power_idx]) > self.p.budget * (1 + 1e-12):
            raise ValueError("joint power choice exceeds the budget")

        poses = [RobotPose(i + 1, c, self.grid.cell_center(c)) for i, c in enumerate(self.cells)]
        moves = tuple(int(actions[lay.move_head(i)]) for i in range(self.x))
        if all(m == Move.STILL for m in moves) and self.x > 1 and not self._all_still_allowed():
            raise InvalidMoveError("all robots still in one epoch")
        for i, mv in enumerate(moves):
            poses[i], _ = apply_action(poses[i], Move(mv), self.grid, poses)
        self.cells = [p.cell for p in poses]

        # both sides of the reward see the same coherence block
        thetas = np.repeat(self._thetas(np.array([prev_phase, self.phase_idx])), self.x, axis=0)
        gains = self.field.gains(prev_cells + self.cells, thetas, self.scheme.ris, self.p.seed, self.episode, epoch)
        prev_rates, prev_sum, _, _ = self._rates_from(gains[:self.x], prev_power)
        next_rates, next_sum, _, feasible = self._rates_from(gains[self.x:], self.power_idx)
        r, collision = step_reward(self.cells, prev_rates, next_rates, self.p.qos_rate, self.p.qos_penalty)
        self.t += 1
        info = StepInfo(tuple(next_rates), next_sum, prev_sum, collision, moves, feasible,
                        getattr(self, "_forced_still", 0))
        return self.features(), r, self.done(), info

    def _all_still_allowed(self) -> bool:
        # only when every robot is parked at its goal or boxed in
        return all(self.at_goal(i) for i in range(self.x)) or getattr(self, "_forced_still", 0) > 0
