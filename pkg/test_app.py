from fastapi.testclient import TestClient

from esdmix.app import app, metrics_tracker

client = TestClient(app)

SMALL_PROBLEM = {"kind": "two_delta", "gamma": 0.05, "lambdas": [1.0, 8.0], "weights": [0.5, 0.5],
                 "dimension": 2, "min_dimension": 2}


def test_root():
    response = client.get("/")
    assert response.status_code == 200
    assert "esdmix" in response.json()["message"]


def test_esd_endpoint():
    response = client.post("/esd/", json={"problem": SMALL_PROBLEM, "solver": {"levels": 0}})
    assert response.status_code == 200
    payload = response.json()
    assert len(payload["x"]) == len(payload["f"]) == len(payload["converged"]) == 30
    assert len(payload["segments"]) == 2
    assert payload["diagnostics"]["level_sizes"] == [30]
    assert all(f >= 0 for f in payload["f"])


def test_esd_rejects_missing_problem():
    response = client.post("/esd/", json={})
    assert response.status_code == 400
    assert "problem" in response.json()["detail"]


def test_esd_rejects_invalid_gamma():
    response = client.post("/esd/", json={"problem": {**SMALL_PROBLEM, "gamma": -0.5}})
    assert response.status_code == 400
    assert "problem.gamma" in response.json()["detail"]


def test_montecarlo_endpoint():
    response = client.post("/montecarlo/", json={"problem": SMALL_PROBLEM, "montecarlo": {"trials": 3, "seed": 2}})
    assert response.status_code == 200
    payload = response.json()
    assert payload["count"] == 2 * 3 == len(payload["eigenvalues"])
    assert payload["dimension"] == 2 and payload["trials"] == 3
    assert payload["samples"] == 40


def test_compare_endpoint():
    problem = {"kind": "diag", "gamma": 0.5, "populations": 2, "dimension": 20, "min_dimension": 20}
    response = client.post("/compare/", json={"mode": "compare", "problem": problem, "solver": {"levels": 0},
                                              "montecarlo": {"trials": 5, "seed": 3}})
    assert response.status_code == 200
    payload = response.json()
    assert 0.0 <= payload["ks_distance"] <= 1.0
    assert payload["mass"] > 0.9


def test_metrics_endpoint():
    client.post("/esd/", json={"problem": SMALL_PROBLEM, "solver": {"levels": 0}})
    response = client.get("/metrics/")
    assert response.status_code == 200
    summary = response.json()
    assert summary["total_runs"] == len(metrics_tracker.metrics_history) >= 1
    assert summary["total_points_solved"] >= 30
