"""Run configuration: pydantic models, named profiles and dotted overrides.

Values are given in the units users think in (dB, dBm, meters); conversion to
linear SI happens in the ``*_settings`` helpers.
"""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .channel import ChannelSettings, PathLossParams, db_to_linear, dbm_to_watts
from .gridworld import GridMap, build_map, load_map

AgentVariant = Literal["double", "dueling", "d3qn"]
BaselineVariant = Literal["ris-noma", "ris-oma", "no-ris-noma", "no-ris-oma", "random-phase",
                          "fixed-phase", "1bit", "2bit", "random-order", "fixed-order"]
BASELINE_VARIANTS: tuple[str, ...] = BaselineVariant.__args__  # type: ignore[attr-defined]


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MapConfig(_Block):
    path: str | None = None
    inline: dict[str, Any] | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.inline is None):
            raise ValueError("map: give exactly one of 'path' or 'inline'")
        if self.path is not None and not Path(self.path).is_file():
            raise ValueError(f"map.path: file not found: {self.path}")
        return self


class ChannelConfig(_Block):
    c_ref_db: float = -30.0
    gamma_ai: float = Field(3.5, ge=0)
    gamma_ri: float = Field(2.8, ge=0)
    gamma_ai_ris: float = Field(2.2, ge=0)
    alpha_bar: float = Field(3.0, ge=0)
    carrier_hz: float = Field(2.4e9, gt=0)
    element_spacing_m: float | None = Field(None, gt=0)
    nlos_mode: Literal["realization", "expected"] = "realization"
    redraw_ap_ris: bool = False
    noise_dbw: float = -75.0


class RisConfig(_Block):
    k_total: int = Field(8, ge=1)
    k_per_sub: int = Field(4, ge=1)
    bits: int = Field(3, ge=1, le=8)

    @model_validator(mode="after")
    def _divisible(self):
        if self.k_total % self.k_per_sub:
            raise ValueError(f"ris.k_total={self.k_total} is not a multiple of k_per_sub={self.k_per_sub}")
        return self

    @property
    def m(self) -> int:
        return self.k_total // self.k_per_sub


class NomaConfig(_Block):
    power_dbm: float = 10.0
    power_fractions: list[float] = [0.1, 0.2, 0.3, 0.4]
    qos_rate: float = Field(0.2, ge=0)
    qos_penalty: float = Field(1.0, ge=0)
    max_robots: int = Field(6, ge=1)

    @field_validator("power_fractions")
    @classmethod
    def _fractions(cls, v):
        if not v or any(f < 0 for f in v) or sum(sorted(v)[:1]) > 1:
            raise ValueError("power_fractions must be nonnegative and the smallest must fit the budget")
        return v


class ForecastConfig(_Block):
    n_robots: int = Field(2, ge=1)
    initial_range: tuple[tuple[float, float], tuple[float, float]] = ((1.0, 7.0), (5.0, 6.0))
    final_range: tuple[tuple[float, float], tuple[float, float]] = ((1.1, 6.9), (0.0, 1.0))
    n_unit: int = Field(90, ge=1)
    window: int = Field(8, ge=1)
    hidden: int = Field(16, ge=1)
    epochs: int = Field(200, ge=0)
    lr: float = Field(0.5, ge=0)
    l2: float = Field(1e-4, ge=0)
    arima_order: tuple[int, int, int] = (2, 1, 2)
    threshold: float = Field(0.35, ge=0)
    verbatim_rmse: bool = False
    max_retries: int = Field(5, ge=0)
    max_candidates: int = Field(3, ge=1)


class AgentConfig(_Block):
    variant: AgentVariant = "d3qn"
    hidden: list[int] = [128, 128]
    lr: float = Field(0.05, gt=0)
    gamma: float = Field(0.9, ge=0, le=1)
    epsilon: float = Field(0.1, ge=0, le=1)
    replay_capacity: int = Field(1000, ge=1)
    batch_size: int = Field(64, ge=1)
    episodes: int = Field(10000, ge=1)
    sync_period: int = Field(10, ge=1)
    stall_episodes: int = Field(50, ge=1)
    return_tol: float = Field(1e-3, ge=0)
    early_stop: bool = False
    per_omega: float = Field(0.6, ge=0)
    per_beta0: float = Field(0.4, ge=0, le=1)
    per_beta1: float = Field(1.0, ge=0, le=1)
    per_eps: float = Field(1e-6, gt=0)
    horizon_slack: int = Field(4, ge=0)
    grad_clip: float | None = Field(10.0, gt=0)
    train_every: int = Field(1, ge=1)
    warmup: int = Field(64, ge=1)
    eval_seeds: int = Field(5, ge=1)


class ConvergenceConfig(_Block):
    window: int = Field(100, ge=1)
    tol: float = Field(0.05, ge=0)


class RunConfig(_Block):
    seed: int = 0
    output_dir: str = "runs/default"
    map: MapConfig
    channel: ChannelConfig = ChannelConfig()
    ris: RisConfig = RisConfig()
    noma: NomaConfig = NomaConfig()
    forecast: ForecastConfig = ForecastConfig()
    agent: AgentConfig = AgentConfig()
    baseline: BaselineVariant = "ris-noma"
    convergence: ConvergenceConfig = ConvergenceConfig()


# -- derived settings -------------------------------------------------------------------

def grid_from(cfg: RunConfig) -> GridMap:
    return load_map(cfg.map.path) if cfg.map.path else build_map(cfg.map.inline)


def channel_settings(cfg: RunConfig, k_total: int | None = None) -> ChannelSettings:
    ch = cfg.channel
    return ChannelSettings(
        pathloss=PathLossParams(db_to_linear(ch.c_ref_db), ch.gamma_ai, ch.gamma_ri, ch.gamma_ai_ris),
        alpha_bar=ch.alpha_bar,
        carrier_hz=ch.carrier_hz,
        element_spacing_m=ch.element_spacing_m,
        k_total=k_total or cfg.ris.k_total,
        k_per_sub=cfg.ris.k_per_sub,
        expected=ch.nlos_mode == "expected",
        redraw_ap_ris=ch.redraw_ap_ris,
    )


def noise_power(cfg: RunConfig) -> float:
    return db_to_linear(cfg.channel.noise_dbw)


def power_budget(cfg: RunConfig) -> float:
    return dbm_to_watts(cfg.noma.power_dbm)


# -- profiles and overrides -------------------------------------------------------------

PROFILES = ("desk", "paper")


def load_profile(name: str) -> dict:
    if name not in PROFILES:
        raise ValueError(f"unknown profile {name!r}; choose from {PROFILES}")
    text = resources.files("risnoma").joinpath("profiles", f"{name}.yaml").read_text()
    return yaml.safe_load(text)


def _coerce(text: str):
    return yaml.safe_load(text)


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars or lists."""
    out = yaml.safe_load(yaml.safe_dump(data))
    for item in overrides:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ValueError(f"override {item!r} is not of the form key=value")
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ValueError(f"override {item!r}: {p} is not a section")
        node[parts[-1]] = _coerce(value)
    return out


def load_config(path: str | None = None, profile: str | None = None,
                overrides: list[str] | None = None, inline: dict | None = None) -> RunConfig:
    """Profile defaults, then the YAML file, then ``inline``, then dotted overrides.

    A ``map`` section replaces the earlier one wholesale rather than merging.
    """
    data: dict = load_profile(profile) if profile else {}
    layers = []
    if path:
        with open(path) as fh:
            layers.append(yaml.safe_load(fh) or {})
    if inline:
        layers.append(inline)
    for layer in layers:
        if not isinstance(layer, dict):
            raise ValueError("configuration must be a mapping at top level")
        data = _deep_merge(data, layer)
        if "map" in layer:
            data["map"] = layer["map"]
    if not data:
        data = load_profile("desk")
    return RunConfig.model_validate(apply_overrides(data, overrides or []))


def _deep_merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out
