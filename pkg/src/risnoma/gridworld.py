"""Discretized indoor motion space: obstacles, AP/RIS placement and robot moves."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

Point3 = tuple[float, float, float]
Cell = tuple[int, int]

_EPS = 1e-9


class MapError(ValueError):
    """Invalid map description. The message names the offending field."""


class InvalidMoveError(ValueError):
    """Move leaves the map, enters an obstacle cell or an occupied cell."""


class Move(IntEnum):
    RIGHT = 0
    LEFT = 1
    STILL = 2
    UP = 3
    DOWN = 4

    @property
    def offset(self) -> Cell:
        return _OFFSETS[self]


_OFFSETS = {
    Move.RIGHT: (1, 0),
    Move.LEFT: (-1, 0),
    Move.STILL: (0, 0),
    Move.UP: (0, 1),
    Move.DOWN: (0, -1),
}
MOVE_OFFSETS = np.array([_OFFSETS[m] for m in Move], dtype=np.int64)


@dataclass(frozen=True)
class Box:
    """Axis-aligned obstacle standing on the floor."""

    x: tuple[float, float]
    y: tuple[float, float]
    height: float
    name: str = ""

    def contains(self, p: Sequence[float]) -> bool:
        return (self.x[0] <= p[0] <= self.x[1] and self.y[0] <= p[1] <= self.y[1]
                and 0.0 <= p[2] <= self.height)

    def footprint_contains(self, x: float, y: float) -> bool:
        return self.x[0] <= x <= self.x[1] and self.y[0] <= y <= self.y[1]


@dataclass(frozen=True)
class GridMap:
    x_max: float
    y_max: float
    delta: float
    obstacles: tuple[Box, ...]
    ap_pos: Point3
    ris_pos: Point3
    robot_height: float = 0.5
    free: np.ndarray = field(init=False, repr=False, compare=False)
    _dist_cache: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if not self.delta > 0:
            raise MapError(f"delta: must be > 0, got {self.delta}")
        if not (self.x_max > 0 and self.y_max > 0):
            raise MapError("x_max/y_max: bounds must be positive")
        for name, extent in (("x_max", self.x_max), ("y_max", self.y_max)):
            ratio = extent / self.delta
            if abs(ratio - round(ratio)) > 1e-6:
                raise MapError(f"{name}: {extent} is not a multiple of delta={self.delta}")
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        for i, box in enumerate(self.obstacles):
            if not (0.0 <= box.x[0] < box.x[1] <= self.x_max + _EPS):
                raise MapError(f"obstacles[{i}].x: {box.x} outside [0, {self.x_max}]")
            if not (0.0 <= box.y[0] < box.y[1] <= self.y_max + _EPS):
                raise MapError(f"obstacles[{i}].y: {box.y} outside [0, {self.y_max}]")
            if not box.height > self.robot_height:
                raise MapError(f"obstacles[{i}].height: {box.height} must exceed robot height "
                               f"{self.robot_height}")
        for name in ("ap_pos", "ris_pos"):
            p = getattr(self, name)
            if len(p) != 3:
                raise MapError(f"{name}: expected a 3D point")
            if not (0 <= p[0] <= self.x_max and 0 <= p[1] <= self.y_max and p[2] > 0):
                raise MapError(f"{name}: {p} outside the space")
            for i, box in enumerate(self.obstacles):
                if box.contains(p):
                    raise MapError(f"{name}: {p} lies inside obstacles[{i}]")

        free = np.ones((self.n_cols, self.n_rows), dtype=bool)
        xs = (np.arange(self.n_cols) + 0.5) * self.delta
        ys = (np.arange(self.n_rows) + 0.5) * self.delta
        for box in self.obstacles:
            inx = (xs >= box.x[0]) & (xs <= box.x[1])
            iny = (ys >= box.y[0]) & (ys <= box.y[1])
            free[np.ix_(inx, iny)] = False
        free.setflags(write=False)
        object.__setattr__(self, "free", free)

    @property
    def n_cols(self) -> int:
        return int(round(self.x_max / self.delta))

    @property
    def n_rows(self) -> int:
        return int(round(self.y_max / self.delta))

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    def cell_index(self, cell: Cell) -> int:
        """Column-major flat index from the origin corner."""
        return cell[0] * self.n_rows + cell[1]

    def cell_center(self, cell: Cell) -> Point3:
        return ((cell[0] + 0.5) * self.delta, (cell[1] + 0.5) * self.delta, self.robot_height)

    def cell_of(self, x: float, y: float) -> Cell:
        col = min(max(int(math.floor(x / self.delta)), 0), self.n_cols - 1)
        row = min(max(int(math.floor(y / self.delta)), 0), self.n_rows - 1)
        return col, row

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.n_cols and 0 <= cell[1] < self.n_rows

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and bool(self.free[cell])

    def nearest_free(self, cell: Cell, exclude: Iterable[Cell] = ()) -> Cell:
        """Closest free cell (breadth-first, 4-neighbourhood) not in ``exclude``."""
        banned = set(exclude)
        start = (min(max(cell[0], 0), self.n_cols - 1), min(max(cell[1], 0), self.n_rows - 1))
        seen = {start}
        queue = deque([start])
        while queue:
            c = queue.popleft()
            if self.free[c] and c not in banned:
                return c
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                n = (c[0] + dx, c[1] + dy)
                if self.in_bounds(n) and n not in seen:
                    seen.add(n)
                    queue.append(n)
        raise MapError("map has no free cell")

    def distance_field(self, goal: Cell) -> np.ndarray:
        """Shortest move count from every cell to ``goal`` around obstacles (-1: unreachable).

        Results are cached per goal and returned read-only.
        """
        goal = (int(goal[0]), int(goal[1]))
        cached = self._dist_cache.get(goal)
        if cached is not None:
            return cached
        if not self.is_free(goal):
            raise MapError(f"goal cell {goal} is not free")
        cols, rows = self.n_cols, self.n_rows
        # BFS on a flat index with a one-cell blocked border, so no bounds checks
        w = rows + 2
        open_ = np.zeros((cols + 2, w), dtype=bool)
        open_[1:-1, 1:-1] = self.free
        open_flat = open_.reshape(-1).tolist()
        dist = [-1] * len(open_flat)
        start = (goal[0] + 1) * w + goal[1] + 1
        dist[start] = 0
        queue = deque([start])
        steps = (w, -w, 1, -1)
        while queue:
            c = queue.popleft()
            d = dist[c] + 1
            for s in steps:
                n = c + s
                if open_flat[n] and dist[n] < 0:
                    dist[n] = d
                    queue.append(n)
        out = np.array(dist, dtype=np.int64).reshape(cols + 2, w)[1:-1, 1:-1].copy()
        out.setflags(write=False)
        self._dist_cache[goal] = out
        return out


@dataclass(frozen=True)
class RobotPose:
    robot_id: int
    cell: Cell
    position: Point3

    @classmethod
    def at(cls, robot_id: int, cell: Cell, grid: GridMap) -> "RobotPose":
        if not grid.is_free(cell):
            raise InvalidMoveError(f"robot {robot_id}: cell {cell} is not a free cell")
        return cls(robot_id, (int(cell[0]), int(cell[1])), grid.cell_center(cell))


@dataclass(frozen=True)
class EndpointPair:
    initial: tuple[float, float]
    final: tuple[float, float]

    def cells(self, grid: GridMap) -> tuple[Cell, Cell]:
        return grid.cell_of(*self.initial), grid.cell_of(*self.final)


def _box_from_dict(d: dict, i: int) -> Box:
    try:
        return Box(x=tuple(map(float, d["x"])), y=tuple(map(float, d["y"])),
                   height=float(d["height"]), name=str(d.get("name", "")))
    except (KeyError, TypeError, ValueError) as exc:
        raise MapError(f"obstacles[{i}]: malformed box ({exc})") from exc


def build_map(config: dict) -> GridMap:
    """Validate a map description (meters) and return the grid."""
    for key in ("x_max", "y_max", "delta", "ap", "ris"):
        if key not in config:
            raise MapError(f"{key}: missing")
    units = config.get("units", "m")
    if units != "m":
        raise MapError(f"units: only meters ('m') are supported, got {units!r}")
    obstacles = tuple(_box_from_dict(d, i) for i, d in enumerate(config.get("obstacles", [])))
    try:
        ap = tuple(float(v) for v in config["ap"])
        ris = tuple(float(v) for v in config["ris"])
    except (TypeError, ValueError) as exc:
        raise MapError(f"ap/ris: malformed point ({exc})") from exc
    return GridMap(
        x_max=float(config["x_max"]),
        y_max=float(config["y_max"]),
        delta=float(config["delta"]),
        obstacles=obstacles,
        ap_pos=ap,
        ris_pos=ris,
        robot_height=float(config.get("robot_height", 0.5)),
    )


def load_map(path: str | Path) -> GridMap:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise MapError(f"{path}: expected a mapping at top level")
    return build_map(data)


def map_to_dict(grid: GridMap) -> dict:
    return {
        "units": "m",
        "x_max": grid.x_max,
        "y_max": grid.y_max,
        "delta": grid.delta,
        "robot_height": grid.robot_height,
        "ap": list(grid.ap_pos),
        "ris": list(grid.ris_pos),
        "obstacles": [{"name": b.name, "x": list(b.x), "y": list(b.y), "height": b.height}
                      for b in grid.obstacles],
    }


def segment_blocked(a: Sequence[float], b: Sequence[float],
                    grid: GridMap | Iterable[Box]) -> bool:
    """True iff the open segment a->b passes through the interior of any obstacle box.

    Slab test per box; touching a face or an endpoint does not count. ``grid``
    may also be a bare collection of boxes.
    """
    boxes = grid.obstacles if isinstance(grid, GridMap) else tuple(grid)
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    for box in boxes:
        lo = np.array([box.x[0], box.y[0], 0.0])
        hi = np.array([box.x[1], box.y[1], box.height])
        t0, t1 = 0.0, 1.0
        hit = True
        for k in range(3):
            if abs(d[k]) < 1e-15:
                if not (lo[k] < a[k] < hi[k]):
                    hit = False
                    break
                continue
            ta = (lo[k] - a[k]) / d[k]
            tb = (hi[k] - a[k]) / d[k]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 >= t1:
                hit = False
                break
        if hit and t1 - t0 > 1e-12:
            return True
    return False


def move_target(cell: Cell, move: Move) -> Cell:
    dx, dy = Move(move).offset
    return cell[0] + dx, cell[1] + dy


def apply_action(pose: RobotPose, move: Move, grid: GridMap,
                 others: Sequence[RobotPose] = ()) -> tuple[RobotPose, bool]:
    """Move one robot by one cell (or hold still).

    Raises InvalidMoveError for off-map, obstacle or occupied targets. The
    collision flag is set when the new position lies within ``delta`` of any
    other robot.
    """
    target = move_target(pose.cell, move)
    if not grid.in_bounds(target):
        raise InvalidMoveError(f"robot {pose.robot_id}: {Move(move).name} leaves the map")
    if not grid.free[target]:
        raise InvalidMoveError(f"robot {pose.robot_id}: {Move(move).name} enters an obstacle")
    for o in others:
        if o.robot_id != pose.robot_id and o.cell == target:
            raise InvalidMoveError(f"robot {pose.robot_id}: cell {target} occupied by robot {o.robot_id}")
    new = RobotPose(pose.robot_id, target, grid.cell_center(target))
    collision = any(
        o.robot_id != pose.robot_id and cells_within(new.cell, o.cell, 1.0)
        for o in others
    )
    return new, collision


def cells_within(a: Cell, b: Cell, n_cells: float) -> bool:
    return math.hypot(a[0] - b[0], a[1] - b[1]) <= n_cells + _EPS


def any_collision(cells: Sequence[Cell]) -> bool:
    """True if any two distinct robots are within one cell pitch of each other."""
    for i in range(len(cells)):
        for j in range(i + 1, len(cells)):
            if cells_within(cells[i], cells[j], 1.0):
                return True
    return False


def min_horizon(pairs: Sequence[tuple[Cell, Cell]]) -> int:
    """Smallest episode length for which all robots can reach their final cells."""
    worst = max(abs(s[0] - f[0]) + abs(s[1] - f[1]) - 1 for s, f in pairs)
    return max(worst, 0)
