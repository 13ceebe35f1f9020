import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from softgossip import __version__
from softgossip.service import create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


def make_reliability(client, devices=4, seed=0, decay_range=0.8):
    resp = client.post("/topology/generate",
                       json={"devices": devices, "seed": seed,
                             "decay_range": decay_range})
    assert resp.status_code == 200
    return resp.json()["reliability"]


def test_health(client):
    resp = client.get("/health")
    assert resp.status_code == 200
    body = resp.json()
    assert body["status"] == "ok"
    assert body["version"] == __version__


def test_topology_generate_deterministic(client):
    payload = {"devices": 6, "seed": 3, "decay_base": 0.6,
               "decay_range": 0.5}
    first = client.post("/topology/generate", json=payload).json()
    second = client.post("/topology/generate", json=payload).json()
    assert first == second
    assert first["positions"]["n"] == 6
    assert first["positions"]["dim"] == 2
    rel = np.array(first["reliability"]["data"]).reshape(6, 6)
    assert np.allclose(rel, rel.T)
    assert np.all(np.diag(rel) == 0.0)
    fractions = first["cdf_fractions"]
    assert fractions == sorted(fractions)
    assert fractions[-1] == pytest.approx(1.0)


def test_topology_rejects_bad_devices(client):
    resp = client.post("/topology/generate", json={"devices": 1})
    assert resp.status_code == 422


def test_optimize_uniform_mode(client):
    rel = make_reliability(client)
    resp = client.post("/weights/optimize",
                       json={"reliability": rel, "mode": "uniform"})
    assert resp.status_code == 200
    body = resp.json()
    w = np.array(body["weights"]["data"]).reshape(4, 4)
    off = w[~np.eye(4, dtype=bool)]
    assert np.allclose(off, 0.25)
    assert body["objective"] == pytest.approx(body["objective_uniform"])
    assert body["log"] == []
    assert body["iterations"] == 0


def test_optimize_metropolis_hastings_mode(client):
    rel_obj = make_reliability(client, devices=5, seed=7)
    resp = client.post("/weights/optimize",
                       json={"reliability": rel_obj,
                             "mode": "metropolis-hastings",
                             "threshold": 0.3})
    assert resp.status_code == 200
    body = resp.json()
    w = np.array(body["weights"]["data"]).reshape(5, 5)
    rel = np.array(rel_obj["data"]).reshape(5, 5)
    off = ~np.eye(5, dtype=bool)
    assert np.all(w[off & (rel <= 0.3)] == 0.0)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_optimize_optimized_mode_improves(client):
    rel = make_reliability(client, devices=4, seed=11)
    resp = client.post("/weights/optimize",
                       json={"reliability": rel, "max_iters": 150})
    assert resp.status_code == 200
    body = resp.json()
    assert body["mode"] == "optimized"
    assert body["objective"] <= body["objective_uniform"] + 1e-6
    assert body["log"][0]["iter"] == 0
    assert len(body["log"]) >= 2
    assert body["drift_squared"] <= body["drift_linear"] + 1e-12


def test_optimize_rejects_asymmetric_reliability(client):
    bad = {"n": 2, "data": [0.0, 0.4, 0.6, 0.0]}
    resp = client.post("/weights/optimize", json={"reliability": bad})
    assert resp.status_code == 400
    body = resp.json()
    assert body["kind"] == "configuration"


def test_run_soft_udp_quadratic(client):
    rel = make_reliability(client, devices=4, seed=5)
    wresp = client.post("/weights/optimize",
                        json={"reliability": rel, "mode": "uniform"})
    weights = wresp.json()["weights"]
    resp = client.post("/experiments/run", json={
        "protocol": "soft-udp", "reliability": rel, "weights": weights,
        "iterations": 50, "seed": 2, "gamma": 0.05,
        "objective": {"kind": "quadratic", "dim": 3, "seed": 1},
    })
    assert resp.status_code == 200
    body = resp.json()
    m = body["metrics"]
    assert len(m["iter"]) == 51
    assert m["iter"][0] == 0 and m["iter"][-1] == 50
    assert m["comm_rounds_cum"][-1] == 50
    assert m["epoch"] == [float(t) for t in m["iter"]]
    assert body["final_params"]["n"] == 4
    assert body["final_params"]["dim"] == 3
    assert all(v is not None for v in m["loss_mean_model"])
    assert m["loss_mean_model"][-1] < m["loss_mean_model"][0]


def test_run_consensus_only_null_losses(client):
    rel = make_reliability(client, devices=4, seed=9)
    weights = client.post("/weights/optimize",
                          json={"reliability": rel, "mode": "uniform"}
                          ).json()["weights"]
    resp = client.post("/experiments/run", json={
        "protocol": "consensus-only", "reliability": rel,
        "weights": weights, "iterations": 20, "seed": 3,
        "init_mode": "spread",
    })
    assert resp.status_code == 200
    m = resp.json()["metrics"]
    assert all(v is None for v in m["loss_mean_model"])
    assert all(v is None for v in m["grad_norm_sq"])
    assert m["dispersion"][-1] < m["dispersion"][0]


def test_run_tcp_baseline_rounds(client):
    rel = make_reliability(client, devices=4, seed=13)
    weights = client.post("/weights/optimize",
                          json={"reliability": rel, "mode": "uniform"}
                          ).json()["weights"]
    resp = client.post("/experiments/run", json={
        "protocol": "tcp-baseline", "reliability": rel, "weights": weights,
        "iterations": 15, "seed": 4, "gamma": 0.05, "threshold": 0.0,
        "objective": {"kind": "quadratic", "dim": 2, "seed": 2},
    })
    assert resp.status_code == 200
    m = resp.json()["metrics"]
    assert m["comm_rounds_cum"][-1] >= 15


def test_run_requires_objective_for_sgd(client):
    rel = make_reliability(client)
    weights = client.post("/weights/optimize",
                          json={"reliability": rel, "mode": "uniform"}
                          ).json()["weights"]
    resp = client.post("/experiments/run", json={
        "protocol": "soft-udp", "reliability": rel, "weights": weights,
        "iterations": 5, "gamma": 0.1,
    })
    assert resp.status_code == 400
    assert resp.json()["kind"] == "configuration"


def test_run_rejects_unknown_keys(client):
    rel = make_reliability(client)
    weights = client.post("/weights/optimize",
                          json={"reliability": rel, "mode": "uniform"}
                          ).json()["weights"]
    resp = client.post("/experiments/run", json={
        "protocol": "soft-udp", "reliability": rel, "weights": weights,
        "iterations": 5, "gamma": 0.1, "bogus_flag": True,
        "objective": {"kind": "quadratic", "dim": 2},
    })
    assert resp.status_code == 422


def test_run_logistic_objective(client):
    rel = make_reliability(client, devices=3, seed=21)
    weights = client.post("/weights/optimize",
                          json={"reliability": rel, "mode": "uniform"}
                          ).json()["weights"]
    resp = client.post("/experiments/run", json={
        "protocol": "soft-udp", "reliability": rel, "weights": weights,
        "iterations": 30, "seed": 8, "gamma": 0.5,
        "objective": {"kind": "logistic", "dim": 4,
                      "samples_per_device": 20, "batch_size": 5,
                      "label_skew": 0.3, "seed": 3},
    })
    assert resp.status_code == 200
    body = resp.json()
    m = body["metrics"]
    assert m["loss_mean_model"][-1] < m["loss_mean_model"][0]
    # minibatch of 5 out of 20 samples: four iterations per epoch
    assert m["epoch"][-1] == pytest.approx(30 / 4.0)


def test_verify_endpoint_small(client):
    resp = client.post("/verify", json={
        "seed": 0, "trials": 1500, "enumeration_instances": 5,
        "drift_instances": 40, "convexity_segments": 10,
        "gradient_instances": 5, "envelope_steps": 15,
        "envelope_trials": 300,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["all_pass"] is True
    assert len(body["checks"]) == 11
    for check in body["checks"]:
        assert set(check) == {"name", "pass", "observed", "threshold",
                              "details"}
        assert check["pass"] is True


def test_bound_endpoint_frozen_case(client):
    resp = client.post("/bound", json={
        "gamma": 0.1, "iterations": 100, "devices": 4,
        "smoothness": 1.0, "noise_variance": 1.0, "heterogeneity": 1.0,
        "initial_gap": 1.0, "drift": 0.2, "contraction": 0.25,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["rhs"] == pytest.approx(2971.0 / 8800.0, rel=1e-12)
    assert body["feasible"] is True
    assert body["feedback"] == pytest.approx(0.06)


def test_bound_endpoint_from_matrices(client):
    rel = make_reliability(client, devices=4, seed=31)
    weights = client.post("/weights/optimize",
                          json={"reliability": rel, "mode": "uniform"}
                          ).json()["weights"]
    resp = client.post("/bound", json={
        "gamma": 0.01, "iterations": 500, "devices": 4,
        "smoothness": 2.0, "noise_variance": 1.0, "heterogeneity": 0.5,
        "initial_gap": 3.0, "reliability": rel, "weights": weights,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert 0.0 <= body["contraction"] < 1.0
    assert body["drift"] > 0.0
    assert body["rhs"] is not None and body["rhs"] > 0.0


def test_bound_endpoint_divergent_is_null(client):
    resp = client.post("/bound", json={
        "gamma": 1.0, "iterations": 10, "devices": 2,
        "smoothness": 1.0, "drift": 0.1, "contraction": 0.81,
    })
    assert resp.status_code == 200
    body = resp.json()
    assert body["rhs"] is None
    assert body["feasible"] is False


def test_bound_endpoint_needs_inputs(client):
    resp = client.post("/bound", json={
        "gamma": 0.1, "iterations": 10, "devices": 2, "smoothness": 1.0,
    })
    assert resp.status_code == 400
    assert resp.json()["kind"] == "configuration"
