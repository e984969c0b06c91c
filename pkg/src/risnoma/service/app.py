"""FastAPI application exposing forecasting, training, sweeps and reports."""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, HTTPException
from pydantic import ValidationError

from .. import __version__
from ..config import RunConfig, load_config
from ..experiment import RunError, build_report, forecast_report, run_baseline, run_predict, run_sweep, run_training
from ..gridworld import build_map, map_to_dict
from ..noma import DecodingOrder, best_order, evaluate_order, oma_rate
from . import schemas as S

_FILES = ("metrics.csv", "trajectory.csv", "summary.json", "checkpoint.txt", "config.json", "forecast.csv")


def resolve_config(req: S.ConfigSource) -> RunConfig:
    overrides = list(req.overrides)
    if req.seed is not None:
        overrides.append(f"seed={req.seed}")
    if req.output_dir is not None:
        overrides.append(f"output_dir={req.output_dir}")
    try:
        return load_config(req.config_path, req.profile, overrides, req.config)
    except ValidationError as exc:
        raise HTTPException(422, _validation_text(exc)) from None
    except (OSError, ValueError) as exc:
        raise HTTPException(422, f"config: {exc}") from None


def _validation_text(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def _run_files(out: str) -> dict[str, str]:
    root = Path(out)
    return {name.split(".")[0]: str(root / name) for name in _FILES if (root / name).exists()}


def _guard(fn, *args):
    try:
        return fn(*args)
    except RunError as exc:
        raise HTTPException(422, str(exc)) from None
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from None


def create_app() -> FastAPI:
    app = FastAPI(title="risnoma", version=__version__)

    @app.get("/health", response_model=S.Health)
    def health():
        return S.Health(status="ok", version=__version__)

    @app.post("/predict", response_model=S.PredictResponse)
    def predict(req: S.ConfigSource):
        cfg = resolve_config(req)
        fc = _guard(run_predict, cfg)
        rep = forecast_report(fc)
        return S.PredictResponse(seed=cfg.seed, output_dir=cfg.output_dir, **rep)

    @app.post("/train", response_model=S.RunResponse)
    def train(req: S.TrainRequest):
        cfg = resolve_config(req)
        run = _guard(run_training, cfg)
        return S.RunResponse(summary=run.summary, files=_run_files(cfg.output_dir))

    @app.post("/baseline", response_model=S.RunResponse)
    def baseline(req: S.BaselineRequest):
        cfg = resolve_config(req)
        run = _guard(run_baseline, cfg, req.variant)
        return S.RunResponse(summary=run.summary, files=_run_files(cfg.output_dir))

    @app.post("/sweep", response_model=S.SweepResponse)
    def sweep(req: S.SweepRequest):
        cfg = resolve_config(req)
        rows = _guard(run_sweep, cfg, req.elements)
        return S.SweepResponse(rows=rows, output_dir=cfg.output_dir)

    @app.post("/report", response_model=S.ReportResponse)
    def report(req: S.ReportRequest):
        if not Path(req.root).is_dir():
            raise HTTPException(404, f"report root not found: {req.root}")
        rows = build_report(req.root)
        if not rows:
            raise HTTPException(404, f"no summary.json files under {req.root}")
        return S.ReportResponse(rows=rows, file=str(Path(req.root) / "report.csv"))

    @app.post("/rates", response_model=S.RatesResponse)
    def rates(req: S.RatesRequest):
        if len(req.gains) != len(req.powers):
            raise HTTPException(422, "gains and powers must have equal length")
        if any(g < 0 for g in req.gains) or any(p < 0 for p in req.powers):
            raise HTTPException(422, "gains and powers must be >= 0")
        if req.access == "oma":
            rep = oma_rate(req.gains, req.powers, req.noise, req.qos)
        elif req.order is not None:
            order = _guard(DecodingOrder, tuple(req.order))
            rep = _guard(evaluate_order, order, req.gains, req.powers, req.noise, req.qos)
        else:
            rep = _guard(best_order, req.gains, req.powers, req.noise, req.qos)[2]
        return S.RatesResponse(order=list(rep.order.order) if rep.order else None,
                               per_robot_rate=list(rep.per_robot_rate), sum_rate=rep.sum_rate,
                               sic_feasible=rep.sic_feasible, qos_met=list(rep.qos_met))

    @app.post("/map/validate", response_model=S.MapResponse)
    def validate_map(req: S.MapRequest):
        grid = _guard(build_map, req.map)
        return S.MapResponse(n_cols=grid.n_cols, n_rows=grid.n_rows, free_cells=int(grid.free.sum()),
                             obstacles=len(grid.obstacles), map=map_to_dict(grid))

    return app


app = create_app()
