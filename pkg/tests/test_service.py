"""HTTP service contract: schema validation for every endpoint, error
codes, and the counterfactual intervention identity over the wire."""

import dataclasses
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient

from pcbrisk.config import default_run_config
from pcbrisk.pipeline import generate, train_model
from pcbrisk.service import build_app
from pcbrisk.synthdata import save_dataset
from pcbrisk.trainer import save_checkpoint

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "schemas"


def load_schema(name):
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


def check(payload, schema_name):
    jsonschema.validate(payload, load_schema(schema_name))


@pytest.fixture(scope="module")
def service_env(tmp_path_factory):
    out = tmp_path_factory.mktemp("service")
    config = default_run_config(num_patients=300, seed=5)
    config.encoder_settings.update(
        hidden_dim=8, heads=2, intermediate_dim=12, max_len=40, window=8, stride=4
    )
    config.trainer = dataclasses.replace(config.trainer, epochs=2, batch_size=64)
    config.bottleneck = dataclasses.replace(config.bottleneck, n_latent=4)
    dataset = generate(config)
    run = train_model("pcb", config, dataset)
    save_dataset(dataset, out / "dataset.jsonl")
    save_checkpoint(run.model, dataset.vocab, {"task": config.task}, out / "pcb.ckpt")
    app = build_app(out / "pcb.ckpt", out / "dataset.jsonl", run_config=config)
    return TestClient(app, raise_server_exceptions=False), config, dataset


def test_meta_endpoint(service_env):
    client, config, dataset = service_env
    response = client.get("/api/meta")
    assert response.status_code == 200
    payload = response.json()
    check(payload, "meta")
    assert payload["task"] == "af-hf-style"
    assert payload["n_latent"] == 4
    assert [c["name"] for c in payload["concepts"]] == ["af", "hypertension", "diabetes"]


def test_clusters_endpoint(service_env):
    client, _config, dataset = service_env
    payload = client.get("/api/clusters").json()
    check(payload, "clusters")
    sizes = [c["size"] for c in payload["clusters"]]
    assert sum(sizes) == len(dataset)
    assert sizes == sorted(sizes, reverse=True)
    assert any(c["major"] for c in payload["clusters"])


def test_upset_endpoint_counts_sum(service_env):
    client, _config, _dataset = service_env
    clusters = client.get("/api/clusters").json()["clusters"]
    top = clusters[0]
    payload = client.get(f"/api/clusters/{top['id']}/upset").json()
    check(payload, "upset")
    assert payload["size"] == top["size"]
    assert sum(cell["count"] for cell in payload["cells"]) == payload["size"]
    for cell in payload["cells"]:
        assert cell["prevalence"] == pytest.approx(cell["count"] / payload["size"])


def test_upset_unknown_cluster_404(service_env):
    client, _config, _dataset = service_env
    response = client.get("/api/clusters/4096/upset")
    assert response.status_code == 404
    payload = response.json()
    check(payload, "error")
    assert payload["code"] == "not-found"


def test_counterfactual_round_trip_and_schema(service_env):
    client, _config, _dataset = service_env
    top = client.get("/api/clusters").json()["clusters"][0]
    body = {
        "cluster_id": top["id"],
        "assignment": {"af": 1, "hypertension": 0, "diabetes": 1},
    }
    response = client.post("/api/counterfactual", json=body)
    assert response.status_code == 200
    payload = response.json()
    check(payload, "counterfactual")
    assert payload["assignment"] == body["assignment"]
    assert payload["reference"] == {"af": 0, "hypertension": 0, "diabetes": 0}
    assert payload["risk_ratio"] == pytest.approx(
        payload["estimated_risk"] / payload["reference_risk"]
    )


def test_counterfactual_wire_identity(service_env):
    """POST with a patient's factual assignment returns exactly the
    patient's factual risk from the risk endpoint."""
    client, _config, dataset = service_env
    record = dataset.records[7]
    risk_payload = client.get(f"/api/patients/{record.patient_id}/risk").json()
    check(risk_payload, "patient_risk")
    names = [s.name for s in dataset.specs]
    body = {
        "cluster_id": risk_payload["cluster"]["id"],
        "assignment": {n: int(v) for n, v in zip(names, record.concepts)},
    }
    cf_payload = client.post("/api/counterfactual", json=body).json()
    assert cf_payload["estimated_risk"] == risk_payload["risk"]


def test_counterfactual_impossible_is_200(service_env):
    client, _config, _dataset = service_env
    clusters = client.get("/api/clusters").json()["clusters"]
    for cluster in clusters:
        upset = client.get(f"/api/clusters/{cluster['id']}/upset").json()
        present = {tuple(sorted(cell["combo"].items())) for cell in upset["cells"]}
        for af in (0, 1):
            for h in (0, 1):
                for d in (0, 1):
                    combo = {"af": af, "hypertension": h, "diabetes": d}
                    if tuple(sorted(combo.items())) not in present:
                        response = client.post(
                            "/api/counterfactual",
                            json={"cluster_id": cluster["id"], "assignment": combo},
                        )
                        assert response.status_code == 200
                        payload = response.json()
                        check(payload, "counterfactual")
                        assert payload["verdict"] == "impossible"
                        return
    pytest.skip("every combination occupied in every cluster")


def test_counterfactual_bad_assignment_400(service_env):
    client, _config, _dataset = service_env
    top = client.get("/api/clusters").json()["clusters"][0]
    cases = [
        {"cluster_id": top["id"], "assignment": {"af": 1}},
        {"cluster_id": top["id"], "assignment": {"af": 3, "hypertension": 0, "diabetes": 0}},
        {"cluster_id": top["id"], "assignment": {"af": 1, "hypertension": 0, "diabetes": 0, "x": 1}},
        {"cluster_id": top["id"]},
    ]
    for body in cases:
        response = client.post("/api/counterfactual", json=body)
        assert response.status_code == 400, body
        payload = response.json()
        check(payload, "error")
        assert payload["code"] == "bad-request"


def test_counterfactual_unoccupied_cluster_409(service_env):
    client, _config, _dataset = service_env
    occupied = {c["id"] for c in client.get("/api/clusters").json()["clusters"]}
    empty = next(i for i in range(16) if i not in occupied) if len(occupied) < 16 else None
    if empty is None:
        pytest.skip("all 16 codes occupied")
    response = client.post(
        "/api/counterfactual",
        json={"cluster_id": empty, "assignment": {"af": 0, "hypertension": 0, "diabetes": 0}},
    )
    assert response.status_code == 409
    payload = response.json()
    check(payload, "error")
    assert payload["code"] == "not-plausible-context"


def test_counterfactual_out_of_range_cluster_404(service_env):
    client, _config, _dataset = service_env
    response = client.post(
        "/api/counterfactual",
        json={"cluster_id": 16, "assignment": {"af": 0, "hypertension": 0, "diabetes": 0}},
    )
    assert response.status_code == 404
    assert response.json()["code"] == "not-found"


def test_sanity_endpoint(service_env):
    client, _config, _dataset = service_env
    payload = client.get("/api/sanity").json()
    check(payload, "sanity")


def test_patient_unknown_404(service_env):
    client, _config, _dataset = service_env
    response = client.get("/api/patients/99999/risk")
    assert response.status_code == 404
    payload = response.json()
    check(payload, "error")
    assert payload["code"] == "not-found"


def test_responses_stable_across_requests(service_env):
    client, _config, _dataset = service_env
    a = client.get("/api/clusters").json()
    b = client.get("/api/clusters").json()
    assert a == b
    top = a["clusters"][0]["id"]
    body = {"cluster_id": top, "assignment": {"af": 1, "hypertension": 1, "diabetes": 0}}
    r1 = client.post("/api/counterfactual", json=body).json()
    r2 = client.post("/api/counterfactual", json=body).json()
    assert r1 == r2
