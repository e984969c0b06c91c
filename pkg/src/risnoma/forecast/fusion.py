"""CRITIC weighting of two forecasters, convex fusion and the RMSE acceptance gate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FusionWeights:
    w_lstm: np.ndarray
    w_arima: np.ndarray

    def __post_init__(self):
        wl = np.atleast_1d(np.asarray(self.w_lstm, dtype=float))
        wa = np.atleast_1d(np.asarray(self.w_arima, dtype=float))
        if wl.shape != wa.shape or np.any(wl < 0) or np.any(wa < 0) or not np.allclose(wl + wa, 1.0):
            raise ValueError("fusion weights must be nonnegative and sum to 1 per pair")
        object.__setattr__(self, "w_lstm", wl)
        object.__setattr__(self, "w_arima", wa)

    def broadcast(self, n: int) -> "FusionWeights":
        return FusionWeights(np.full(n, self.w_lstm[0]), np.full(n, self.w_arima[0]))


def critic_weights(pred_lstm, pred_arima, truth) -> FusionWeights:
    """CRITIC weights over the two error series.

    ``C_j = sigma_j * (1 - r)`` with ``r`` the correlation of the error series
    (taken as 0 when either series is constant); weights are ``C / sum(C)``
    and fall back to 0.5/0.5 when both ``C`` vanish.
    """
    truth = np.asarray(truth, dtype=float).reshape(-1)
    e1 = np.asarray(pred_lstm, dtype=float).reshape(-1) - truth
    e2 = np.asarray(pred_arima, dtype=float).reshape(-1) - truth
    if len(e1) < 2 or len(e1) != len(e2):
        raise ValueError("need two error series of equal length >= 2")
    s1, s2 = float(np.std(e1)), float(np.std(e2))
    r = float(np.corrcoef(e1, e2)[0, 1]) if s1 > 0 and s2 > 0 else 0.0
    c1, c2 = s1 * (1.0 - r), s2 * (1.0 - r)
    total = c1 + c2
    if total <= 0:
        return FusionWeights(0.5, 0.5)
    return FusionWeights(c1 / total, c2 / total)


def fused_predict(pred_lstm, pred_arima, weights: FusionWeights) -> np.ndarray:
    a = np.asarray(pred_lstm, dtype=float)
    b = np.asarray(pred_arima, dtype=float)
    wl, wa = weights.w_lstm, weights.w_arima
    if wl.size == 1:
        return wl[0] * a + wa[0] * b
    shape = (-1,) + (1,) * (a.ndim - 1)
    return wl.reshape(shape) * a + wa.reshape(shape) * b


def rmse(pred, truth, verbatim: bool = False) -> float:
    """Root mean squared error; ``verbatim`` uses ``sqrt(mean(|e|))`` instead."""
    e = np.asarray(pred, dtype=float) - np.asarray(truth, dtype=float)
    if e.size == 0:
        raise ValueError("empty series")
    return float(np.sqrt(np.mean(np.abs(e)))) if verbatim else float(np.sqrt(np.mean(e * e)))


def rmse_gate(pred, truth, threshold: float, verbatim: bool = False) -> tuple[bool, float]:
    score = rmse(pred, truth, verbatim)
    return score <= threshold, score
