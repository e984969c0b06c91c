from .arima import ArimaFitError, ArimaModel, arima_fit, arima_predict
from .data import (HistorySet, NormStats, Rect, denormalize, difference, difference_heads,
                   generate_history, integrate, normalize)
from .fusion import FusionWeights, critic_weights, fused_predict, rmse, rmse_gate
from .lstm import LstmCell, lstm_predict, lstm_step, lstm_train
from .pipeline import ForecastRejected, ForecastResult, run_forecast

__all__ = [
    "ArimaFitError", "ArimaModel", "arima_fit", "arima_predict",
    "HistorySet", "NormStats", "Rect", "denormalize", "difference", "difference_heads",
    "generate_history", "integrate", "normalize",
    "FusionWeights", "critic_weights", "fused_predict", "rmse", "rmse_gate",
    "LstmCell", "lstm_predict", "lstm_step", "lstm_train",
    "ForecastRejected", "ForecastResult", "run_forecast",
]
