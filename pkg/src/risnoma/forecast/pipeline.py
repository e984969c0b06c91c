"""Endpoint forecasting pipeline: history, LSTM and ARIMA branches, fusion and gate.

The result carries the fused predictions for the inference split and the
candidate endpoint sets derived from them (snapped to free, well-separated
cells) for the trajectory learner.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..gridworld import Cell, GridMap, cells_within, segment_blocked
from .arima import arima_fit, arima_predict
from .data import HistorySet, NormStats, Rect, denormalize, generate_history, normalize
from .fusion import FusionWeights, critic_weights, fused_predict, rmse, rmse_gate
from .lstm import lstm_predict, lstm_train


class ForecastRejected(RuntimeError):
    pass


@dataclass
class BranchOutputs:
    lstm: np.ndarray
    arima: np.ndarray
    fused: np.ndarray


@dataclass
class ForecastResult:
    seed: int
    attempts: int
    accepted: bool
    score: float
    threshold: float
    weights: FusionWeights
    test_rmse: dict[str, float]
    stats: NormStats
    history: HistorySet
    test: BranchOutputs
    predicted: np.ndarray                # (N, 4) fused, meters
    candidates: list[list[tuple[Cell, Cell]]] = field(default_factory=list)
    los_fraction: list[float] = field(default_factory=list)


def _arima_branch(series: np.ndarray, n_fit: int, start: int, stop: int, order) -> np.ndarray:
    """Per-coordinate one-step forecasts of rows ``start .. stop-1``."""
    out = np.zeros((stop - start, series.shape[1]))
    for j in range(series.shape[1]):
        model = arima_fit(series[:n_fit, j], order)
        for r, k in enumerate(range(start, stop)):
            out[r, j] = arima_predict(model, series[:k, j])
    return out


def run_branches(hist: HistorySet, cfg, seed: int) -> tuple[NormStats, BranchOutputs, BranchOutputs, FusionWeights]:
    """Train both branches on the training split and predict the test and inference splits.

    Everything returned is on the normalized scale.
    """
    n = hist.n
    stats = NormStats.fit(hist.samples)
    series = normalize(hist.samples, stats)
    train = series[: 4 * n]
    window = min(cfg.window, max(4 * n - 1, 1))
    cell, _ = lstm_train(train, cfg.hidden, cfg.epochs, cfg.lr, cfg.l2, window, seed)
    test_l = lstm_predict(cell, series, window, 4 * n, 5 * n)
    inf_l = lstm_predict(cell, series, window, 5 * n + 1, 6 * n + 1)
    test_a = _arima_branch(series, 4 * n, 4 * n, 5 * n, cfg.arima_order)
    inf_a = _arima_branch(series, 4 * n, 5 * n + 1, 6 * n + 1, cfg.arima_order)
    truth = series[4 * n: 5 * n]
    if n >= 1 and truth.size >= 2:
        weights = critic_weights(test_l, test_a, truth)
    else:
        weights = FusionWeights(0.5, 0.5)
    test = BranchOutputs(test_l, test_a, fused_predict(test_l, test_a, weights))
    inference = BranchOutputs(inf_l, inf_a, fused_predict(inf_l, inf_a, weights))
    return stats, test, inference, weights


def _snap(grid: GridMap, point, taken: list[Cell]) -> Cell:
    """Nearest free cell more than one cell pitch away from every ``taken`` cell."""
    start = grid.cell_of(float(point[0]), float(point[1]))
    too_close = {(c[0] + dx, c[1] + dy) for c in taken for dx in (-1, 0, 1) for dy in (-1, 0, 1)
                 if cells_within((c[0] + dx, c[1] + dy), c, 1.0)}
    return grid.nearest_free(start, exclude=too_close)


def make_candidates(grid: GridMap, predicted: np.ndarray, n_robots: int, max_candidates: int) -> list[list[tuple[Cell, Cell]]]:
    """Group consecutive predicted pairs into endpoint sets of ``n_robots`` robots.

    A set is dropped if any final cell cannot be reached from its initial cell.
    """
    out = []
    for k in range(len(predicted) // n_robots):
        rows = predicted[k * n_robots:(k + 1) * n_robots]
        starts: list[Cell] = []
        goals: list[Cell] = []
        for row in rows:
            starts.append(_snap(grid, row[:2], starts))
        for row in rows:
            goals.append(_snap(grid, row[2:], goals))
        if all(grid.distance_field(g)[s] >= 0 for s, g in zip(starts, goals)):
            out.append(list(zip(starts, goals)))
        if len(out) == max_candidates:
            break
    return out


def los_fraction(grid: GridMap, pairs: list[tuple[Cell, Cell]], samples: int = 16) -> float:
    """Share of points on the straight start-goal corridors with an unblocked RIS link."""
    hits = total = 0
    for s, g in pairs:
        a = np.asarray(grid.cell_center(s))
        b = np.asarray(grid.cell_center(g))
        for t in np.linspace(0.0, 1.0, samples):
            p = a + t * (b - a)
            total += 1
            hits += not segment_blocked(grid.ris_pos, p, grid)
    return hits / total if total else 0.0


def run_forecast(cfg, grid: GridMap | None, seed: int) -> ForecastResult:
    """Generate, fit, gate (with bounded retries) and emit candidate endpoints.

    ``cfg`` is a forecast config block. Each retry regenerates the history and
    re-initializes the branches from a fresh seed. Raises ForecastRejected when
    every attempt fails the gate.
    """
    init = Rect(*cfg.initial_range)
    final = Rect(*cfg.final_range)
    last_score = float("nan")
    for attempt in range(cfg.max_retries + 1):
        s = seed + 7919 * attempt
        hist = generate_history(init, final, cfg.n_unit, s)
        stats, test, inference, weights = run_branches(hist, cfg, s)
        truth = normalize(hist.test, stats)
        accepted, score = rmse_gate(test.fused, truth, cfg.threshold, cfg.verbatim_rmse)
        last_score = score
        if not accepted:
            continue
        predicted = denormalize(inference.fused, stats)
        result = ForecastResult(
            seed=s, attempts=attempt + 1, accepted=True, score=score, threshold=cfg.threshold,
            weights=weights.broadcast(cfg.n_unit),
            test_rmse={"lstm": rmse(test.lstm, truth), "arima": rmse(test.arima, truth),
                       "fused": rmse(test.fused, truth)},
            stats=stats, history=hist, test=test, predicted=predicted)
        if grid is not None:
            result.candidates = make_candidates(grid, predicted, cfg.n_robots, cfg.max_candidates)
            if not result.candidates:
                raise ForecastRejected("no predicted endpoint set maps to reachable free cells")
            result.los_fraction = [los_fraction(grid, c) for c in result.candidates]
        return result
    raise ForecastRejected(f"forecast rejected after {cfg.max_retries + 1} attempts "
                           f"(last score {last_score:.4g} > threshold {cfg.threshold}); seed {seed}")
