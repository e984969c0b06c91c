from __future__ import annotations

import math

import pytest

from conftest import MAPS

FAST = ["agent.episodes=6", "agent.eval_seeds=1", "agent.warmup=16", "forecast.epochs=20"]


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok" and body["version"]


def test_rates_worked_example(client):
    r = client.post("/rates", json={"gains": [1.0, 0.25], "powers": [0.2, 0.8], "noise": 1.0, "order": [1, 0]})
    assert r.status_code == 200
    body = r.json()
    assert body["per_robot_rate"][0] == pytest.approx(math.log2(1.2))
    assert body["per_robot_rate"][1] == pytest.approx(math.log2(1 + 0.2 / 1.05))


def test_rates_search_and_oma(client):
    noma = client.post("/rates", json={"gains": [2.0, 0.2], "powers": [0.3, 0.7], "noise": 0.01}).json()
    oma = client.post("/rates", json={"gains": [2.0, 0.2], "powers": [0.3, 0.7], "noise": 0.01,
                                      "access": "oma"}).json()
    assert sorted(noma["order"]) == [0, 1]
    assert oma["order"] is None
    assert noma["sum_rate"] > 0 and oma["sum_rate"] > 0


@pytest.mark.parametrize("body,fragment", [
    ({"gains": [1.0], "powers": [1.0, 2.0], "noise": 1.0}, "equal length"),
    ({"gains": [-1.0], "powers": [1.0], "noise": 1.0}, ">= 0"),
    ({"gains": [1.0, 1.0], "powers": [1.0, 1.0], "noise": 1.0, "order": [0, 0]}, "permutation"),
])
def test_rates_errors(client, body, fragment):
    r = client.post("/rates", json=body)
    assert r.status_code == 422 and fragment in r.json()["detail"]


def test_rates_schema_errors(client):
    assert client.post("/rates", json={"gains": [1.0], "powers": [1.0], "noise": 0.0}).status_code == 422
    assert client.post("/rates", json={"gains": [1.0], "powers": [1.0], "noise": 1.0, "x": 1}).status_code == 422


def test_map_validate(client):
    import yaml
    layout = yaml.safe_load((MAPS / "desk.yaml").read_text())
    body = client.post("/map/validate", json={"map": layout}).json()
    assert (body["n_cols"], body["n_rows"]) == (40, 30)
    bad = dict(layout, delta=0.0)
    r = client.post("/map/validate", json={"map": bad})
    assert r.status_code == 422 and "delta" in r.json()["detail"]


def test_train_round_trip(client, tmp_path):
    r = client.post("/train", json={"profile": "desk", "seed": 2, "overrides": FAST, "output_dir": str(tmp_path)})
    assert r.status_code == 200
    body = r.json()
    assert body["summary"]["seed"] == 2
    assert set(body["files"]) >= {"metrics", "trajectory", "summary", "checkpoint"}


def test_train_requires_seed(client):
    assert client.post("/train", json={"profile": "desk"}).status_code == 422


def test_config_errors_name_the_field(client, tmp_path):
    r = client.post("/train", json={"seed": 1, "overrides": ["agent.gamma=2"], "output_dir": str(tmp_path)})
    assert r.status_code == 422 and "agent.gamma" in r.json()["detail"]


def test_predict(client, tmp_path):
    r = client.post("/predict", json={"seed": 1, "overrides": FAST, "output_dir": str(tmp_path)})
    assert r.status_code == 200 and r.json()["accepted"]
    assert (tmp_path / "forecast.csv").is_file()


def test_baseline_and_report(client, tmp_path):
    r = client.post("/baseline", json={"variant": "random-phase", "seed": 1, "overrides": FAST,
                                       "output_dir": str(tmp_path / "rp")})
    assert r.status_code == 200 and r.json()["summary"]["baseline"] == "random-phase"
    assert client.post("/baseline", json={"variant": "nope"}).status_code == 422
    rep = client.post("/report", json={"root": str(tmp_path)}).json()
    assert rep["rows"][0]["baseline"] == "random-phase" and rep["rows"][0]["runs"] == 1


def test_sweep(client, tmp_path):
    r = client.post("/sweep", json={"elements": [4, 8], "seed": 1, "overrides": FAST + ["agent.episodes=3"],
                                    "output_dir": str(tmp_path)})
    assert r.status_code == 200
    assert [row["k_total"] for row in r.json()["rows"]] == [4, 8]
    assert client.post("/sweep", json={"elements": []}).status_code == 422


def test_report_missing_root(client, tmp_path):
    assert client.post("/report", json={"root": str(tmp_path / "none")}).status_code == 404
    assert client.post("/report", json={"root": str(tmp_path)}).status_code == 404
