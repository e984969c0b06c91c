"""End-to-end runs: forecast, per-candidate training, selection, baselines, sweeps, reports."""
from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import (Learner, PrioritizedReplay, QNetworkPair, Transition, should_sync)
from .channel import ChannelField
from .config import RunConfig, channel_settings, grid_from, noise_power, power_budget
from .env import EnvParams, RobotEnv, scheme_for
from .forecast import ForecastResult, run_forecast
from .gridworld import Cell, GridMap, Move
from .neural import save_checkpoint
from .noma import power_levels

EVAL_EPISODE_BASE = 1_000_000


class RunError(RuntimeError):
    """A run failed; the message names the config key and seed involved."""


@dataclass
class EpisodeMetrics:
    candidate: int
    episode: int
    ret: float
    final_sum_rate: float
    mean_sum_rate: float
    path_length: list[float]
    still_count: list[int]
    collisions: int
    epsilon: float
    loss_mean: float
    updates: int
    steps: int


@dataclass
class EvalResult:
    ret: float
    mean_sum_rate: float
    final_sum_rate: float
    trajectory: list[tuple[int, int, float, float, float]]
    reached: bool


@dataclass
class CandidateOutcome:
    index: int
    pairs: list[tuple[Cell, Cell]]
    metrics: list[EpisodeMetrics]
    evaluation: EvalResult
    learner: Learner
    convergence_episode: int


@dataclass
class RunOutcome:
    config: RunConfig
    forecast: ForecastResult | None
    candidates: list[CandidateOutcome]
    best: int
    summary: dict = field(default_factory=dict)

    @property
    def winner(self) -> CandidateOutcome:
        return self.candidates[self.best]


# -- convergence ------------------------------------------------------------------------

def moving_average(values, window: int) -> np.ndarray:
    """Trailing mean over at most ``window`` points (shorter at the start)."""
    v = np.asarray(values, dtype=float)
    c = np.concatenate([[0.0], np.cumsum(v)])
    idx = np.arange(1, len(v) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def convergence_episode(returns, window: int, tol: float) -> int:
    """First 1-based episode from which the trailing moving average stays within
    ``tol * |final|`` of its final value to the end of the series, with at least
    ``window`` episodes in that stretch. Returns -1 if there is none.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(returns) == 0:
        return -1
    ma = moving_average(returns, window)
    final = ma[-1]
    band = tol * abs(final) + 1e-12
    outside = np.flatnonzero(np.abs(ma - final) > band)
    first = int(outside[-1]) + 1 if len(outside) else 0
    return first + 1 if len(ma) - first >= window else -1


# -- building blocks --------------------------------------------------------------------

_FORECAST_CACHE: dict[tuple, ForecastResult] = {}


def forecast_for(cfg: RunConfig, grid: GridMap, seed: int) -> ForecastResult:
    key = (cfg.forecast.model_dump_json(), json.dumps(cfg.map.model_dump(), sort_keys=True), seed)
    if key not in _FORECAST_CACHE:
        _FORECAST_CACHE[key] = run_forecast(cfg.forecast, grid, seed)
    return _FORECAST_CACHE[key]


def horizon_for(grid: GridMap, pairs, slack: int) -> int:
    return max(int(grid.distance_field(g)[s]) for s, g in pairs) + slack


def make_env(cfg: RunConfig, grid: GridMap, field_: ChannelField, pairs, seed: int) -> RobotEnv:
    budget = power_budget(cfg)
    params = EnvParams(
        horizon=horizon_for(grid, pairs, cfg.agent.horizon_slack),
        bits=cfg.ris.bits,
        levels=power_levels(budget, cfg.noma.power_fractions),
        budget=budget,
        noise=noise_power(cfg),
        qos_rate=cfg.noma.qos_rate,
        qos_penalty=cfg.noma.qos_penalty,
        seed=seed,
        max_robots=cfg.noma.max_robots,
    )
    return RobotEnv(grid, field_, [p[0] for p in pairs], [p[1] for p in pairs], params,
                    scheme_for(cfg.baseline))


def evaluate(env: RobotEnv, pair: QNetworkPair, n_seeds: int) -> EvalResult:
    """Greedy rollouts on ``n_seeds`` held-out channel draws; trajectory from the first."""
    rets, rates, finals, traj, reached = [], [], [], [], True
    rng = np.random.default_rng(0)   # unused when not exploring
    for k in range(n_seeds):
        s = env.reset(EVAL_EPISODE_BASE + k)
        total, sums = 0.0, []
        if k == 0:
            r0 = env.rates_now()[0]
            traj.extend((i + 1, 0, *env.grid.cell_center(c)[:2], r0[i]) for i, c in enumerate(env.cells))
        while not env.done():
            q = pair.current.q_values(s)[0]
            a = env.select(q, False, rng)
            s, r, _, info = env.step(a)
            total += r
            sums.append(info.sum_rate)
            if k == 0:
                traj.extend((i + 1, env.t, *env.grid.cell_center(c)[:2], info.rates[i])
                            for i, c in enumerate(env.cells))
        reached &= all(env.at_goal(i) for i in range(env.x))
        rets.append(total)
        rates.append(float(np.mean(sums)) if sums else 0.0)
        finals.append(sums[-1] if sums else 0.0)
    return EvalResult(float(np.mean(rets)), float(np.mean(rates)), float(np.mean(finals)), traj, reached)


def train_candidate(cfg: RunConfig, grid: GridMap, field_: ChannelField, pairs, seed: int,
                    index: int) -> CandidateOutcome:
    ag = cfg.agent
    env = make_env(cfg, grid, field_, pairs, seed * 1000 + index)
    rng = np.random.default_rng([seed, index, 0xA6])
    dueling = ag.variant in ("dueling", "d3qn")
    feat_dim = len(env.reset(0))
    pair = QNetworkPair.build(feat_dim, env.layout, ag.hidden, dueling, rng)
    omega = 0.0 if ag.variant == "double" else ag.per_omega
    buffer = PrioritizedReplay(ag.replay_capacity, feat_dim, env.layout.n_heads, env.layout.n_outputs,
                               omega, ag.per_eps)
    learner = Learner(ag.variant, pair, buffer, ag.lr, ag.gamma, ag.grad_clip)
    metrics: list[EpisodeMetrics] = []
    total_steps = 0
    prev_return = None
    stable = 0
    for ep in range(1, ag.episodes + 1):
        if should_sync(ep, ag.sync_period):
            pair.sync()
        beta = ag.per_beta0 + (ag.per_beta1 - ag.per_beta0) * (ep - 1) / max(ag.episodes - 1, 1)
        s = env.reset(ep)
        ret, losses, sums = 0.0, [], []
        moved = np.zeros(env.x, dtype=int)
        still = np.zeros(env.x, dtype=int)
        collisions = 0
        while not env.done():
            active = env.active()
            explore = bool(rng.random() < ag.epsilon)
            # exploring heads ignore the values, so skip the forward pass
            q = None if explore else pair.current.q_values(s)[0]
            a = env.select(q, explore, rng)
            s2, r, term, info = env.step(a)
            buffer.add(Transition(s, a, active, r, s2, env.active(), env.valid_outputs(), term))
            total_steps += 1
            if len(buffer) >= ag.warmup and total_steps % ag.train_every == 0:
                idx, w = buffer.sample(ag.batch_size, rng, beta)
                losses.append(learner.learn_batch(idx, w).loss)
            ret += r
            sums.append(info.sum_rate)
            for i, mv in enumerate(info.moves):
                if mv == Move.STILL:
                    still[i] += 1
                else:
                    moved[i] += 1
            collisions += info.collision
            s = s2
        metrics.append(EpisodeMetrics(
            index, ep, ret, sums[-1] if sums else 0.0, float(np.mean(sums)) if sums else 0.0,
            [grid.delta * int(k) for k in moved], [int(k) for k in still], collisions,
            ag.epsilon, float(np.mean(losses)) if losses else 0.0, len(losses), len(sums)))
        if ag.early_stop and prev_return is not None:
            stable = stable + 1 if abs(ret - prev_return) <= ag.return_tol else 0
            if stable >= ag.stall_episodes:
                break
        prev_return = ret
    evaluation = evaluate(env, pair, ag.eval_seeds)
    conv = convergence_episode([m.ret for m in metrics], cfg.convergence.window, cfg.convergence.tol)
    return CandidateOutcome(index, list(pairs), metrics, evaluation, learner, conv)


def run_training(cfg: RunConfig, write: bool = True) -> RunOutcome:
    """Forecast endpoints, train one agent per candidate set and keep the best by greedy return."""
    seed = cfg.seed
    try:
        grid = grid_from(cfg)
    except ValueError as exc:
        raise RunError(f"map: {exc} (seed {seed})") from exc
    try:
        fc = forecast_for(cfg, grid, seed)
    except Exception as exc:
        raise RunError(f"forecast: {exc} (seed {seed})") from exc
    field_ = ChannelField(grid, channel_settings(cfg))
    outcomes = []
    for k, pairs in enumerate(fc.candidates):
        try:
            outcomes.append(train_candidate(cfg, grid, field_, pairs, seed, k))
        except Exception as exc:
            raise RunError(f"agent ({cfg.agent.variant}, baseline {cfg.baseline}): {exc} "
                           f"(seed {seed}, candidate {k})") from exc
    best = max(range(len(outcomes)), key=lambda k: (outcomes[k].evaluation.ret, -k))
    run = RunOutcome(cfg, fc, outcomes, best)
    run.summary = summarize(run)
    if write:
        write_outputs(run, Path(cfg.output_dir))
    return run


def summarize(run: RunOutcome) -> dict:
    w = run.winner
    cfg = run.config
    return {
        "seed": cfg.seed,
        "variant": cfg.agent.variant,
        "baseline": cfg.baseline,
        "k_total": cfg.ris.k_total,
        "episodes": len(w.metrics),
        "best_candidate": w.index,
        "endpoints": [{"robot": i + 1, "initial": list(map(int, s)), "final": list(map(int, g))}
                      for i, (s, g) in enumerate(w.pairs)],
        "final_sum_rate": w.evaluation.final_sum_rate,
        "mean_sum_rate": w.evaluation.mean_sum_rate,
        "eval_return": w.evaluation.ret,
        "reached_goals": w.evaluation.reached,
        "convergence_episode": w.convergence_episode,
        "forecast_score": run.forecast.score if run.forecast else None,
        "forecast_attempts": run.forecast.attempts if run.forecast else None,
        "los_fraction": run.forecast.los_fraction[w.index] if run.forecast and run.forecast.los_fraction else None,
        "candidates": [{"index": c.index, "eval_return": c.evaluation.ret,
                        "final_sum_rate": c.evaluation.final_sum_rate} for c in run.candidates],
    }


# -- output files -----------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if not math.isfinite(f):
        raise ValueError(f"non-finite metric value {f}")
    return format(f, ".10g")


def metrics_header(x: int) -> list[str]:
    return (["candidate", "episode", "return", "final_sum_rate", "mean_sum_rate"]
            + [f"path_length_r{i + 1}" for i in range(x)]
            + [f"still_r{i + 1}" for i in range(x)]
            + ["collisions", "epsilon", "loss_mean", "updates", "steps"])


def metrics_csv(run: RunOutcome) -> str:
    x = len(run.candidates[0].pairs)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(metrics_header(x))
    for c in run.candidates:
        for m in c.metrics:
            wr.writerow([_fmt(v) for v in [m.candidate, m.episode, m.ret, m.final_sum_rate, m.mean_sum_rate,
                                           *m.path_length, *m.still_count, m.collisions, m.epsilon,
                                           m.loss_mean, m.updates, m.steps]])
    return buf.getvalue()


def trajectory_csv(run: RunOutcome) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["robot", "step", "x", "y", "rate"])
    for row in run.winner.evaluation.trajectory:
        wr.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_outputs(run: RunOutcome, out: Path) -> dict[str, str]:
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "metrics": out / "metrics.csv",
        "trajectory": out / "trajectory.csv",
        "summary": out / "summary.json",
        "checkpoint": out / "checkpoint.txt",
        "config": out / "config.json",
    }
    files["metrics"].write_text(metrics_csv(run))
    files["trajectory"].write_text(trajectory_csv(run))
    files["summary"].write_text(json.dumps(run.summary, indent=2, sort_keys=True) + "\n")
    files["config"].write_text(run.config.model_dump_json(indent=2) + "\n")
    w = run.winner
    net = w.learner.pair.current
    save_checkpoint(files["checkpoint"], net, {
        "variant": run.config.agent.variant,
        "baseline": run.config.baseline,
        "seed": str(run.config.seed),
        "candidate": str(w.index),
        "input_dim": str(net.net.input_dim),
        "hidden": ",".join(map(str, run.config.agent.hidden)),
        "heads": ",".join(map(str, net.layout.sizes)),
        "dueling": str(int(net.dueling)),
    })
    if run.forecast is not None:
        (out / "forecast.csv").write_text(forecast_csv(run.forecast))
    return {k: str(v) for k, v in files.items()}


def forecast_csv(fc: ForecastResult) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["index", "x_initial", "y_initial", "x_final", "y_final", "w_lstm", "w_arima"])
    for n, row in enumerate(fc.predicted):
        wr.writerow([n + 1, *(_fmt(v) for v in row), _fmt(fc.weights.w_lstm[n]), _fmt(fc.weights.w_arima[n])])
    return buf.getvalue()


def forecast_report(fc: ForecastResult) -> dict:
    return {
        "accepted": fc.accepted,
        "score": fc.score,
        "threshold": fc.threshold,
        "attempts": fc.attempts,
        "seed_used": fc.seed,
        "test_rmse": fc.test_rmse,
        "w_lstm": float(fc.weights.w_lstm[0]),
        "w_arima": float(fc.weights.w_arima[0]),
        "candidates": [[{"initial": list(map(int, s)), "final": list(map(int, g))} for s, g in c]
                       for c in fc.candidates],
        "los_fraction": fc.los_fraction,
    }


def run_predict(cfg: RunConfig, write: bool = True) -> ForecastResult:
    grid = grid_from(cfg)
    try:
        fc = run_forecast(cfg.forecast, grid, cfg.seed)
    except Exception as exc:
        raise RunError(f"forecast: {exc} (seed {cfg.seed})") from exc
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "forecast.csv").write_text(forecast_csv(fc))
        (out / "forecast_report.json").write_text(json.dumps(forecast_report(fc), indent=2, sort_keys=True) + "\n")
    return fc


def run_baseline(cfg: RunConfig, variant: str, write: bool = True) -> RunOutcome:
    scheme_for(variant)
    return run_training(cfg.model_copy(update={"baseline": variant}), write)


def run_sweep(cfg: RunConfig, elements: list[int], write: bool = True) -> list[dict]:
    rows = []
    for k in elements:
        sub = cfg.model_copy(deep=True)
        sub.ris = sub.ris.model_copy(update={"k_total": k})
        if k % sub.ris.k_per_sub:
            raise RunError(f"ris.k_total: {k} is not a multiple of k_per_sub={sub.ris.k_per_sub} (seed {cfg.seed})")
        sub.output_dir = str(Path(cfg.output_dir) / f"K{k}")
        run = run_training(sub, write)
        rows.append({"k_total": k, "final_sum_rate": run.summary["final_sum_rate"],
                     "eval_return": run.summary["eval_return"],
                     "convergence_episode": run.summary["convergence_episode"]})
    if write:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k_total", "final_sum_rate", "eval_return", "convergence_episode"])
        for r in rows:
            wr.writerow([_fmt(r[k]) for k in ("k_total", "final_sum_rate", "eval_return", "convergence_episode")])
        (out / "sweep.csv").write_text(buf.getvalue())
    return rows


def build_report(root: str | Path, write: bool = True) -> list[dict]:
    """Median final sum-rate and convergence episode per (variant, baseline, K) over seeds."""
    groups: dict[tuple, list[dict]] = {}
    for path in sorted(Path(root).rglob("summary.json")):
        s = json.loads(path.read_text())
        groups.setdefault((s["variant"], s["baseline"], s["k_total"]), []).append(s)
    rows = []
    for (variant, baseline, k), items in sorted(groups.items()):
        conv = [s["convergence_episode"] for s in items if s["convergence_episode"] >= 0]
        rows.append({
            "variant": variant, "baseline": baseline, "k_total": k, "runs": len(items),
            "median_final_sum_rate": statistics.median(s["final_sum_rate"] for s in items),
            "median_convergence_episode": statistics.median(conv) if conv else -1,
            "converged_runs": len(conv),
        })
    if write and rows:
        buf = io.StringIO()
        wr = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        wr.writeheader()
        for r in rows:
            wr.writerow({k: _fmt(v) if not isinstance(v, str) else v for k, v in r.items()})
        Path(root, "report.csv").write_text(buf.getvalue())
    return rows
