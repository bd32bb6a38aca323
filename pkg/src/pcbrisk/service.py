"""Read-only HTTP/JSON service over a frozen checkpoint: clusters, UpSet
tables, counterfactual queries, the sanity table, and per-patient risk.

All state is computed once at startup and never mutated, so any request
ordering yields identical responses. Cluster ids in URLs are integers;
payloads also carry the comma-separated bit rendering.

Error contract: unknown cluster/patient -> 404 "not-found"; malformed
input -> 400 "bad-request"; a counterfactual against a structurally valid
but unoccupied cluster -> 409 "not-plausible-context". Impossible
counterfactuals on occupied clusters are ordinary 200 responses.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .concepts import BINARY
from .config import RunConfig, default_run_config
from .counterfactual import counterfactual_query, estimate_risk, int_to_code, render_code
from .errors import UsageError
from .pipeline import CohortAnalysis, analyze_cohort
from .synthdata import load_dataset
from .trainer import load_checkpoint


class CounterfactualRequest(BaseModel):
    cluster_id: int
    assignment: dict[str, int]
    reference: dict[str, int] | None = None


class ApiFault(Exception):
    def __init__(self, status: int, code: str, message: str):
        self.status = status
        self.code = code
        self.message = message


def _assignment_to_combo(specs, assignment: dict[str, int]) -> tuple[int, ...]:
    names = {s.name for s in specs}
    unknown = set(assignment) - names
    if unknown:
        raise ApiFault(400, "bad-request", f"unknown concept {sorted(unknown)[0]!r}")
    combo = []
    for spec in specs:
        if spec.name not in assignment:
            raise ApiFault(400, "bad-request", f"assignment missing concept {spec.name!r}")
        value = assignment[spec.name]
        if not 0 <= value < spec.arity:
            raise ApiFault(
                400, "bad-request",
                f"concept {spec.name!r}: value {value} outside [0, {spec.arity})",
            )
        combo.append(value)
    return tuple(combo)


def _combo_to_assignment(specs, combo) -> dict[str, int]:
    return {s.name: int(v) for s, v in zip(specs, combo)}


def build_app(checkpoint_path, dataset_path, run_config: RunConfig | None = None) -> FastAPI:
    bundle = load_checkpoint(checkpoint_path)
    if bundle.model.kind != "pcb":
        raise UsageError("the service needs a bottleneck (pcb) checkpoint")
    if run_config is None:
        run_config = default_run_config()
    dataset = load_dataset(dataset_path, bundle.vocab)
    analysis: CohortAnalysis = analyze_cohort(bundle.model, dataset, run_config)
    model = bundle.model
    specs = model.specs
    patient_row = {int(pid): i for i, pid in enumerate(analysis.patient_ids)}

    app = FastAPI(title="pcbrisk explorer service", docs_url=None, redoc_url=None)

    @app.exception_handler(ApiFault)
    async def fault_handler(_request: Request, exc: ApiFault):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content={"code": "bad-request", "message": str(exc.errors()[:1])}
        )

    @app.exception_handler(Exception)
    async def internal_handler(_request: Request, exc: Exception):
        return JSONResponse(
            status_code=500, content={"code": "internal", "message": str(exc)}
        )

    @app.get("/api/meta")
    def meta():
        return {
            "task": analysis.task,
            "n_latent": analysis.n_latent,
            "patients": len(analysis.patient_ids),
            "coverage": analysis.coverage,
            "plausibility": {"lo": analysis.plausibility.lo, "hi": analysis.plausibility.hi},
            "exposure": None
            if analysis.exposure_index is None
            else specs[analysis.exposure_index].name,
            "concepts": [
                {
                    "name": s.name,
                    "kind": s.kind,
                    "num_values": s.arity if s.kind != BINARY else 2,
                }
                for s in specs
            ],
        }

    @app.get("/api/clusters")
    def clusters():
        return {
            "clusters": [
                {
                    "id": info.code,
                    "code": render_code(info.bits),
                    "size": info.size,
                    "share": info.share,
                    "mean_risk": info.mean_risk,
                    "major": info.major,
                }
                for info in analysis.clusters
            ]
        }

    def _require_cluster(cluster_id: int, occupied: bool):
        if not 0 <= cluster_id < (1 << analysis.n_latent):
            raise ApiFault(404, "not-found", f"cluster {cluster_id} does not exist")
        if occupied and cluster_id not in analysis.upsets:
            raise ApiFault(
                409, "not-plausible-context",
                f"cluster {cluster_id} has no members; no empirical context for counterfactuals",
            )

    @app.get("/api/clusters/{cluster_id}/upset")
    def cluster_upset(cluster_id: int):
        _require_cluster(cluster_id, occupied=False)
        table = analysis.upsets.get(cluster_id)
        cells = [] if table is None else table.cells
        size = 0 if table is None else table.size
        return {
            "cluster": cluster_id,
            "code": render_code(int_to_code(cluster_id, analysis.n_latent)),
            "size": size,
            "cells": [
                {
                    "combo": _combo_to_assignment(specs, cell.combo),
                    "count": cell.count,
                    "estimated_risk": cell.estimated_risk,
                    "prevalence": (cell.count / size) if size else 0.0,
                }
                for cell in cells
            ],
        }

    @app.post("/api/counterfactual")
    def counterfactual(request: CounterfactualRequest):
        _require_cluster(request.cluster_id, occupied=True)
        combo = _assignment_to_combo(specs, request.assignment)
        reference = (
            None if request.reference is None else _assignment_to_combo(specs, request.reference)
        )
        result = counterfactual_query(
            model, analysis.upsets[request.cluster_id], combo, specs,
            analysis.plausibility, reference=reference,
        )
        return {
            "cluster": result.cluster,
            "code": render_code(result.bits),
            "assignment": _combo_to_assignment(specs, result.intervention),
            "estimated_risk": result.estimated_risk,
            "reference": _combo_to_assignment(specs, result.reference),
            "reference_risk": result.reference_risk,
            "risk_ratio": result.risk_ratio,
            "prevalence": result.prevalence,
            "verdict": result.verdict,
        }

    @app.get("/api/sanity")
    def sanity():
        report = analysis.sanity
        if report is None:
            return {"exposure": None, "rows": [], "spearman": None,
                    "notice": "no binary exposure concept"}
        return {
            "exposure": report.exposure,
            "rows": [
                {
                    "cluster": row.cluster,
                    "code": render_code(row.bits),
                    "base": _combo_to_assignment(specs, row.base_combo),
                    "estimated_rr": row.estimated_rr,
                    "observed_rr": row.observed.ratio,
                    "exposed_n": row.observed.exposed_total,
                    "exposed_pos": row.observed.exposed_positive,
                    "unexposed_n": row.observed.unexposed_total,
                    "unexposed_pos": row.observed.unexposed_positive,
                }
                for row in report.rows
            ],
            "spearman": report.spearman,
            "notice": report.notice,
        }

    @app.get("/api/patients/{patient_id}/risk")
    def patient_risk(patient_id: int):
        row = patient_row.get(patient_id)
        if row is None:
            raise ApiFault(404, "not-found", f"patient {patient_id} not in the cohort")
        code = int(analysis.assignments[row])
        bits = int_to_code(code, analysis.n_latent)
        # same single-assignment path as counterfactual queries, so
        # do(factual) over the wire reproduces this number exactly
        return {
            "patient_id": patient_id,
            "risk": estimate_risk(model, bits, analysis.concepts[row]),
            "predicted_risk": float(analysis.predicted_risk[row]),
            "cluster": {
                "id": code,
                "code": render_code(bits),
            },
        }

    return app
