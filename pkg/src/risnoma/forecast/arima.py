"""ARIMA(a, d, b) fitted by two-stage (Hannan-Rissanen) least squares."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import NormStats, denormalize, difference


class ArimaFitError(ValueError):
    pass


@dataclass(frozen=True)
class ArimaModel:
    ar_order: int
    diff_order: int
    ma_order: int
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    intercept: float
    residuals: np.ndarray

    @property
    def min_history(self) -> int:
        return max(self.ar_order + self.diff_order, self.ma_order, 1)


def _lagged(y: np.ndarray, lags: int, start: int) -> np.ndarray:
    return np.column_stack([y[start - z: len(y) - z] for z in range(1, lags + 1)]) if lags else \
        np.empty((len(y) - start, 0))


def _lstsq(design: np.ndarray, target: np.ndarray, what: str) -> np.ndarray:
    if design.shape[0] < design.shape[1]:
        raise ArimaFitError(f"{what}: {design.shape[0]} equations for {design.shape[1]} unknowns; "
                            "reduce the ARIMA orders or supply a longer series")
    coef, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < design.shape[1]:
        raise ArimaFitError(f"{what}: singular regression (rank {rank} < {design.shape[1]}); "
                            "reduce the ARIMA orders")
    return coef


def _invertible(ma: np.ndarray) -> np.ndarray:
    """Reflect roots of ``1 + sum phi_z L^z`` that lie inside the unit circle."""
    if not len(ma):
        return ma
    roots = np.roots(np.r_[ma[::-1], 1.0])
    inside = np.abs(roots) < 1.0
    if not inside.any():
        return ma
    roots[inside] = 1.0 / np.conj(roots[inside])
    poly = np.real(np.poly(roots))          # highest degree first, leading coefficient 1
    poly = poly[::-1] / poly[-1]            # constant term 1
    return poly[1:]


def _filter_residuals(y: np.ndarray, model: ArimaModel) -> np.ndarray:
    a, b = model.ar_order, model.ma_order
    e = np.zeros(len(y))
    for t in range(len(y)):
        pred = model.intercept
        for z in range(1, a + 1):
            if t - z >= 0:
                pred += model.ar_coeffs[z - 1] * y[t - z]
        for z in range(1, b + 1):
            if t - z >= 0:
                pred += model.ma_coeffs[z - 1] * e[t - z]
        e[t] = y[t] - pred
    return e


def arima_fit(series, orders: tuple[int, int, int]) -> ArimaModel:
    a, d, b = (int(v) for v in orders)
    if min(a, d, b) < 0:
        raise ValueError("ARIMA orders must be >= 0")
    x = np.asarray(series, dtype=float)
    if len(x) < a + d + b + 1:
        raise ValueError(f"series length {len(x)} < a+d+b+1 = {a + d + b + 1}")
    y = difference(x, d)
    if b:
        # stage 1: long autoregression for innovation estimates
        p_long = min(max(a + b, 4), max(len(y) // 4, 1))
        design = np.column_stack([np.ones(len(y) - p_long), _lagged(y, p_long, p_long)])
        coef = _lstsq(design, y[p_long:], "long AR stage")
        e_hat = np.zeros(len(y))
        e_hat[p_long:] = y[p_long:] - design @ coef
        start = p_long + b
    else:
        e_hat = np.zeros(len(y))
        start = a
    cols = [np.ones(len(y) - start), _lagged(y, a, start)]
    if b:
        cols.append(_lagged(e_hat, b, start))
    coef = _lstsq(np.column_stack(cols), y[start:], "ARMA stage")
    ar = coef[1:1 + a]
    ma = _invertible(coef[1 + a:])
    if not (np.all(np.isfinite(ar)) and np.all(np.isfinite(ma)) and np.isfinite(coef[0])):
        raise ArimaFitError("non-finite ARIMA coefficients")
    model = ArimaModel(a, d, b, ar, ma, float(coef[0]), np.zeros(0))
    return ArimaModel(a, d, b, ar, ma, float(coef[0]), _filter_residuals(y, model))


def arima_predict(model: ArimaModel, history, stats: NormStats | None = None) -> float:
    """One-step-ahead forecast from ``history`` on the original (undifferenced) scale.

    The differenced forecast is integrated back ``d`` times; with ``stats`` the
    value is also mapped out of [0, 1].
    """
    x = np.asarray(history, dtype=float)
    if len(x) < model.min_history:
        raise ValueError(f"history of length {len(x)} shorter than required {model.min_history}")
    y = difference(x, model.diff_order) if model.diff_order else x
    e = _filter_residuals(y, model)
    pred = model.intercept
    for z in range(1, model.ar_order + 1):
        pred += model.ar_coeffs[z - 1] * y[-z]
    for z in range(1, model.ma_order + 1):
        pred += model.ma_coeffs[z - 1] * e[-z]
    # undo differencing: the forecast of x is the last values of each level plus the diff forecast
    level = x
    tails = []
    for _ in range(model.diff_order):
        tails.append(level[-1])
        level = level[1:] - level[:-1]
    for tail in reversed(tails):
        pred = tail + pred
    return float(denormalize(pred, stats)) if stats is not None else float(pred)
