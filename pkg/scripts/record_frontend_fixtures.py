"""Record API payloads from a small trained service into the frontend's
test fixtures (frontend/tests/fixtures/*.json)."""

import dataclasses
import json
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from pcbrisk.config import default_run_config
from pcbrisk.pipeline import generate, train_model
from pcbrisk.service import build_app
from pcbrisk.synthdata import save_dataset
from pcbrisk.trainer import save_checkpoint


def main():
    out = Path(__file__).resolve().parent.parent / "frontend" / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    config = default_run_config(num_patients=300, seed=5)
    config.encoder_settings.update(
        hidden_dim=8, heads=2, intermediate_dim=12, max_len=40, window=8, stride=4
    )
    config.trainer = dataclasses.replace(config.trainer, epochs=2, batch_size=64)
    config.bottleneck = dataclasses.replace(config.bottleneck, n_latent=4)
    dataset = generate(config)
    run = train_model("pcb", config, dataset)

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        save_dataset(dataset, tmp / "dataset.jsonl")
        save_checkpoint(run.model, dataset.vocab, {"task": config.task}, tmp / "pcb.ckpt")
        client = TestClient(build_app(tmp / "pcb.ckpt", tmp / "dataset.jsonl", config))

        def dump(name, payload):
            (out / f"{name}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

        dump("meta", client.get("/api/meta").json())
        clusters = client.get("/api/clusters").json()
        dump("clusters", clusters)
        top = clusters["clusters"][0]["id"]
        upset = client.get(f"/api/clusters/{top}/upset").json()
        dump("upset", upset)
        dump("sanity", client.get("/api/sanity").json())
        combo = dict(upset["cells"][0]["combo"])
        dump("counterfactual",
             client.post("/api/counterfactual",
                         json={"cluster_id": top, "assignment": combo}).json())

        names = [s.name for s in dataset.specs]
        impossible = None
        for cluster in clusters["clusters"]:
            table = client.get(f"/api/clusters/{cluster['id']}/upset").json()
            present = {tuple(sorted(c["combo"].items())) for c in table["cells"]}
            for k in range(2 ** len(names)):
                cand = {n: (k >> i) & 1 for i, n in enumerate(names)}
                if tuple(sorted(cand.items())) not in present:
                    impossible = client.post(
                        "/api/counterfactual",
                        json={"cluster_id": cluster["id"], "assignment": cand},
                    ).json()
                    break
            if impossible:
                break
        assert impossible and impossible["verdict"] == "impossible"
        dump("counterfactual_impossible", impossible)

        bad = {names[0]: 9, **{n: 0 for n in names[1:]}}
        dump("error_bad_request",
             client.post("/api/counterfactual",
                         json={"cluster_id": top, "assignment": bad}).json())
    print(f"fixtures recorded in {out}")


if __name__ == "__main__":
    main()
