import numpy as np
import pytest
from fastapi.testclient import TestClient

from pinchbeam.gnn import default_weights
from pinchbeam.scenario import sample_placement, scenario_to_dict
from pinchbeam.service import create_app
from pinchbeam.weights_io import save_weights


@pytest.fixture(scope="module")
def client():
    with TestClient(create_app()) as c:
        yield c


@pytest.fixture(scope="module")
def scenario_doc():
    from pinchbeam.scenario import ScenarioConfig
    cfg = ScenarioConfig(N_t=4, N_r=2, K_c=2, K_s=2, S=2, M=2)
    return scenario_to_dict(cfg, sample_placement(cfg, 11)), cfg


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json()["status"] == "ok"


def test_optimize_endpoint(client, scenario_doc):
    doc, cfg = scenario_doc
    r = client.post("/optimize", json={"scenario": doc, "seed": 0,
                                       "iterations": 2})
    assert r.status_code == 200
    body = r.json()
    W = np.array(body["W_real"]) + 1j * np.array(body["W_imag"])
    assert W.shape == (cfg.N_t, cfg.K_c)
    assert np.linalg.norm(W) ** 2 <= cfg.P_max + 1e-6
    assert len(body["rates"]) == cfg.K_c
    assert body["trace_csv"].startswith("iteration,objective,sr")


def test_infer_endpoint(client, scenario_doc):
    doc, cfg = scenario_doc
    wdoc = save_weights(default_weights(cfg, n_layers=2, seed=0))
    r = client.post("/infer", json={"scenario": doc, "weights": wdoc})
    assert r.status_code == 200
    body = r.json()
    assert body["sr"] > 0
    assert body["trace_csv"] is None


def test_infer_rejects_bad_weights(client, scenario_doc):
    doc, cfg = scenario_doc
    wdoc = save_weights(default_weights(cfg, n_layers=1, seed=0))
    wdoc["format_version"] = 7
    r = client.post("/infer", json={"scenario": doc, "weights": wdoc})
    assert r.status_code == 422


def test_bench_endpoint_json_and_csv(client, scenario_doc):
    doc, _ = scenario_doc
    payload = {"scenario": doc, "methods": ["zf", "random"], "samples": 2,
               "seed": 1, "format": "json"}
    r = client.post("/bench", json=payload)
    assert r.status_code == 200
    assert set(r.json()["aggregates"]) == {"random", "zf"}
    payload["format"] = "csv"
    r = client.post("/bench", json=payload)
    assert r.status_code == 200
    assert r.json()["report"].startswith("method,sample,seed")


def test_bench_gnn_without_weights_rejected(client, scenario_doc):
    doc, _ = scenario_doc
    r = client.post("/bench", json={"scenario": doc, "methods": ["gnn"],
                                    "samples": 1})
    assert r.status_code == 422


def test_bad_scenario_rejected(client):
    r = client.post("/optimize", json={"scenario": {"bogus_key": 3},
                                       "seed": 0})
    assert r.status_code == 422


def test_check_endpoint(client, scenario_doc):
    doc, cfg = scenario_doc
    wdoc = save_weights(default_weights(cfg, n_layers=1, seed=0))
    r = client.post("/check", json={"scenario": doc, "weights": wdoc})
    assert r.status_code == 200
    body = r.json()
    assert body["ok"] is True
    assert body["zf_orthogonality"] < 1e-9
    assert body["weights_ok"] is True
