"""Request and response bodies of the HTTP service."""
from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

from ..config import BaselineVariant


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConfigSource(_Body):
    """Where the run configuration comes from; later sources win.

    ``profile`` gives the defaults, ``config_path`` a YAML file merged on top,
    ``config`` an inline mapping merged after that, and ``overrides`` dotted
    ``key=value`` strings applied last.
    """

    profile: str | None = None
    config_path: str | None = None
    config: dict[str, Any] | None = None
    overrides: list[str] = Field(default_factory=list)
    output_dir: str | None = None
    seed: int | None = None


class TrainRequest(ConfigSource):
    seed: int


class BaselineRequest(ConfigSource):
    variant: BaselineVariant


class SweepRequest(ConfigSource):
    elements: list[int] = Field(min_length=1)


class ReportRequest(_Body):
    root: str


class RatesRequest(_Body):
    gains: list[float] = Field(min_length=1)
    powers: list[float] = Field(min_length=1)
    noise: float = Field(gt=0)
    qos: float = 0.0
    access: Literal["noma", "oma"] = "noma"
    order: list[int] | None = None


class MapRequest(_Body):
    map: dict[str, Any]


# -- responses ---------------------------------------------------------------------------

class Health(BaseModel):
    status: str
    version: str


class EndpointPairOut(BaseModel):
    initial: list[int]
    final: list[int]


class PredictResponse(BaseModel):
    seed: int
    seed_used: int
    accepted: bool
    attempts: int
    score: float
    threshold: float
    test_rmse: dict[str, float]
    w_lstm: float
    w_arima: float
    candidates: list[list[EndpointPairOut]]
    los_fraction: list[float]
    output_dir: str | None


class RunResponse(BaseModel):
    summary: dict[str, Any]
    files: dict[str, str]


class SweepRow(BaseModel):
    k_total: int
    final_sum_rate: float
    eval_return: float
    convergence_episode: int


class SweepResponse(BaseModel):
    rows: list[SweepRow]
    output_dir: str | None


class ReportRow(BaseModel):
    variant: str
    baseline: str
    k_total: int
    runs: int
    median_final_sum_rate: float
    median_convergence_episode: float
    converged_runs: int


class ReportResponse(BaseModel):
    rows: list[ReportRow]
    file: str | None


class RatesResponse(BaseModel):
    order: list[int] | None
    per_robot_rate: list[float]
    sum_rate: float
    sic_feasible: bool
    qos_met: list[bool]


class MapResponse(BaseModel):
    n_cols: int
    n_rows: int
    free_cells: int
    obstacles: int
    map: dict[str, Any]


class ErrorResponse(BaseModel):
    detail: str
