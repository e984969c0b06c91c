from __future__ import annotations

import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from risnoma.config import load_config
from risnoma.experiment import (RunError, build_report, convergence_episode, metrics_header, moving_average,
                                run_baseline, run_predict, run_sweep, run_training)
from risnoma.neural import read_checkpoint

FAST = ["agent.episodes=12", "agent.eval_seeds=2", "agent.warmup=16", "forecast.epochs=20", "seed=4"]


def fast_cfg(tmp_path, extra=()):
    return load_config(profile="desk", overrides=FAST + [f"output_dir={tmp_path}", *extra])


# -- convergence ---------------------------------------------------------------------------

def oracle_convergence(returns, window, tol):
    n = len(returns)
    if n == 0:
        return -1
    ma = []
    for t in range(n):
        lo = max(0, t - window + 1)
        ma.append(sum(returns[lo:t + 1]) / (t + 1 - lo))
    final = ma[-1]
    band = tol * abs(final) + 1e-12
    for k in range(1, n + 1):
        if n - (k - 1) >= window and all(abs(m - final) <= band for m in ma[k - 1:]):
            return k
    return -1


def test_moving_average_examples():
    np.testing.assert_allclose(moving_average([1, 2, 3, 4], 2), [1.0, 1.5, 2.5, 3.5])
    np.testing.assert_allclose(moving_average([4, 4, 4], 10), [4, 4, 4])


def test_flat_series_converges_at_once():
    assert convergence_episode([2.0] * 150, 100, 0.05) == 1


@pytest.mark.parametrize("w", [1, 10, 100])
def test_step_series(w):
    returns = [0.0] * 99 + [1.0] * 400      # the jump lands on episode 100
    assert convergence_episode(returns, w, 1e-9) == 100 + w - 1


def test_short_or_empty_series():
    assert convergence_episode([], 10, 0.05) == -1
    assert convergence_episode([1.0] * 5, 10, 0.05) == -1
    with pytest.raises(ValueError, match="window"):
        convergence_episode([1.0], 0, 0.05)


def test_drifting_series_never_converges():
    assert convergence_episode(list(range(1, 300)), 100, 0.001) == -1


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.integers(1, 6), st.sampled_from([0.0, 0.05, 0.3]))
def test_convergence_matches_oracle(returns, window, tol):
    got = convergence_episode(returns, window, tol)
    want = oracle_convergence(returns, window, tol)
    if got != want:
        # the two moving averages may differ in the last bits; only a point on the band edge may flip
        ma = moving_average(returns, window)
        band = tol * abs(ma[-1]) + 1e-12
        assert np.any(np.abs(np.abs(ma - ma[-1]) - band) < 1e-9 * (1 + np.abs(ma).max()))


# -- training outputs ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    run = run_training(fast_cfg(out))
    return run, out


def test_output_files_exist(trained):
    _, out = trained
    for name in ("metrics.csv", "trajectory.csv", "summary.json", "checkpoint.txt", "config.json", "forecast.csv"):
        assert (out / name).is_file()


def test_metrics_csv_layout(trained):
    run, out = trained
    rows = list(csv.reader(io.StringIO((out / "metrics.csv").read_text())))
    assert rows[0] == metrics_header(2)
    assert len(rows) - 1 == sum(len(c.metrics) for c in run.candidates) == 12
    assert [int(r[1]) for r in rows[1:]] == list(range(1, 13))


def test_trajectory_starts_at_step_zero(trained):
    _, out = trained
    rows = list(csv.DictReader(io.StringIO((out / "trajectory.csv").read_text())))
    assert [r["step"] for r in rows[:2]] == ["0", "0"]
    assert {r["robot"] for r in rows} == {"1", "2"}
    assert all(0 <= float(r["x"]) <= 4 and 0 <= float(r["y"]) <= 3 for r in rows)


def test_summary_fields(trained):
    run, out = trained
    s = json.loads((out / "summary.json").read_text())
    assert s["seed"] == 4 and s["variant"] == "d3qn" and s["episodes"] == 12
    assert s["final_sum_rate"] == run.winner.evaluation.final_sum_rate
    assert len(s["endpoints"]) == 2


def test_checkpoint_matches_network(trained):
    run, out = trained
    meta, arrays = read_checkpoint(out / "checkpoint.txt")
    assert meta["variant"] == "d3qn" and meta["seed"] == "4"
    for k, v in run.winner.learner.pair.current.params().items():
        assert np.array_equal(arrays[k], v)


def test_training_is_deterministic(tmp_path, trained):
    _, first = trained
    run_training(fast_cfg(tmp_path))
    for name in ("metrics.csv", "trajectory.csv", "checkpoint.txt"):
        assert (tmp_path / name).read_bytes() == (first / name).read_bytes()


def test_seed_changes_outputs(tmp_path, trained):
    _, first = trained
    run_training(fast_cfg(tmp_path, ["seed=5"]))
    assert (tmp_path / "metrics.csv").read_bytes() != (first / "metrics.csv").read_bytes()


# -- other entry points --------------------------------------------------------------------

def test_predict_writes_forecast(tmp_path):
    fc = run_predict(fast_cfg(tmp_path))
    rep = json.loads((tmp_path / "forecast_report.json").read_text())
    assert rep["accepted"] and rep["score"] <= rep["threshold"]
    lines = (tmp_path / "forecast.csv").read_text().splitlines()
    assert lines[0] == "index,x_initial,y_initial,x_final,y_final,w_lstm,w_arima"
    assert len(lines) - 1 == len(fc.predicted)


def test_baseline_variant(tmp_path):
    run = run_baseline(fast_cfg(tmp_path), "no-ris-noma")
    assert run.summary["baseline"] == "no-ris-noma"
    with pytest.raises(ValueError, match="unknown baseline"):
        run_baseline(fast_cfg(tmp_path), "nope")


def test_sweep_and_report(tmp_path):
    rows = run_sweep(fast_cfg(tmp_path, ["agent.episodes=4"]), [4, 8])
    assert [r["k_total"] for r in rows] == [4, 8]
    assert (tmp_path / "sweep.csv").read_text().startswith("k_total,final_sum_rate")
    assert (tmp_path / "K4" / "summary.json").is_file()
    report = build_report(tmp_path)
    assert {r["k_total"] for r in report} == {4, 8}
    assert all(r["runs"] == 1 for r in report)
    assert (tmp_path / "report.csv").is_file()


def test_sweep_rejects_bad_element_count(tmp_path):
    with pytest.raises(RunError, match="k_total"):
        run_sweep(fast_cfg(tmp_path), [6])
