"""End-to-end orchestration: generate, split/encode, train, evaluate,
analyze, and write the report files a run directory contains."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .concepts import BINARY
from .config import RunConfig
from .counterfactual import (
    ClusterInfo,
    PlausibilityRange,
    SanityReport,
    UpsetTable,
    cluster_profiles,
    render_code,
    sanity_report,
    upset,
)
from .errors import ConfigError
from .model import BaselineModel, PcbModel, eval_in_batches
from .synthdata import Dataset, generate_cohort, split_dataset
from .trainer import (
    Metrics,
    SplitTensors,
    TrainingHistory,
    evaluate,
    prepare_split,
    train,
)


def exposure_index_for(specs, name: str | None) -> int | None:
    """Index of the exposure concept: the named one, else the first binary."""
    if name is not None:
        for k, spec in enumerate(specs):
            if spec.name == name:
                if spec.kind != BINARY:
                    raise ConfigError(f"analysis.exposure_concept {name!r} must be binary")
                return k
        raise ConfigError(f"analysis.exposure_concept {name!r} not among concepts")
    for k, spec in enumerate(specs):
        if spec.kind == BINARY:
            return k
    return None


@dataclass
class TrainedRun:
    model: object
    history: TrainingHistory
    metrics: Metrics


def train_model(kind: str, run_config: RunConfig, dataset: Dataset, seed: int | None = None) -> TrainedRun:
    """Split, encode, train one model, and evaluate it on the validation split."""
    enc_cfg = run_config.encoder_config(dataset.vocab.size)
    train_ds, tune_ds, valid_ds = split_dataset(
        dataset, run_config.split.ratios, run_config.split.seed
    )
    min_visits = run_config.analysis.min_visits
    train_data = prepare_split(train_ds, enc_cfg.max_len, min_visits)
    tune_data = prepare_split(tune_ds, enc_cfg.max_len, min_visits)
    valid_data = prepare_split(valid_ds, enc_cfg.max_len, min_visits)
    model_seed = run_config.trainer.seed if seed is None else seed
    if kind == "baseline":
        model = BaselineModel(enc_cfg, seed=model_seed)
        trainer_cfg = run_config.trainer
    elif kind == "pcb":
        model = PcbModel(enc_cfg, dataset.specs, run_config.bottleneck, seed=model_seed)
        trainer_cfg = run_config.pcb_trainer()
    else:
        raise ConfigError(f"unknown model kind {kind!r} (expected baseline or pcb)")
    history = train(model, train_data, tune_data, trainer_cfg)
    metrics = evaluate(model, valid_data)
    return TrainedRun(model=model, history=history, metrics=metrics)


@dataclass
class CohortAnalysis:
    """Everything the reports, service, and UI consume, computed once."""

    task: str
    specs: tuple
    n_latent: int
    exposure_index: int | None
    plausibility: PlausibilityRange
    coverage: float
    patient_ids: np.ndarray
    labels: np.ndarray
    concepts: np.ndarray
    assignments: np.ndarray
    predicted_risk: np.ndarray
    factual_risk: np.ndarray
    clusters: list[ClusterInfo]
    upsets: dict[int, UpsetTable]
    sanity: SanityReport | None

    def cluster(self, code: int) -> ClusterInfo | None:
        for info in self.clusters:
            if info.code == code:
                return info
        return None


def analyze_cohort(model: PcbModel, dataset: Dataset, run_config: RunConfig) -> CohortAnalysis:
    enc_cfg = run_config.encoder_config(dataset.vocab.size)
    analysis_cfg = run_config.analysis
    data = prepare_split(dataset, enc_cfg.max_len, analysis_cfg.min_visits)
    predicted_risk, _logits, codes = eval_in_batches(model, data.batch)
    weights = 1 << np.arange(model.n_latent - 1, -1, -1)
    assignments = codes @ weights
    factual_risk = model.risk_for(codes, data.concepts)
    prange = PlausibilityRange(analysis_cfg.plausibility_lo, analysis_cfg.plausibility_hi)
    clusters = cluster_profiles(
        assignments, predicted_risk, model.n_latent, analysis_cfg.coverage
    )
    upsets = {
        info.code: upset(model, info.code, data.concepts[assignments == info.code])
        for info in clusters
    }
    exposure = exposure_index_for(model.specs, analysis_cfg.exposure_concept)
    sanity = None
    if exposure is not None:
        major = [info.code for info in clusters if info.major]
        sanity = sanity_report(
            model, data.labels, data.concepts, assignments, model.specs, exposure,
            upsets, major,
        )
    return CohortAnalysis(
        task=dataset.task,
        specs=model.specs,
        n_latent=model.n_latent,
        exposure_index=exposure,
        plausibility=prange,
        coverage=analysis_cfg.coverage,
        patient_ids=data.patient_ids,
        labels=data.labels,
        concepts=data.concepts,
        assignments=assignments,
        predicted_risk=predicted_risk,
        factual_risk=factual_risk,
        clusters=clusters,
        upsets=upsets,
        sanity=sanity,
    )


# ---------------------------------------------------------------------------
# report files (stable column order; floats via repr for diffability)


def write_reports(analysis: CohortAnalysis, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []

    lines = ["cluster\tbits\tsize\tshare\tmean_risk\tmajor"]
    for info in analysis.clusters:
        lines.append(
            f"{info.code}\t{render_code(info.bits)}\t{info.size}\t{info.share!r}\t"
            f"{info.mean_risk!r}\t{int(info.major)}"
        )
    (out / "clusters.tsv").write_text("\n".join(lines) + "\n")
    files.append("clusters.tsv")

    upset_dir = out / "upset"
    upset_dir.mkdir(exist_ok=True)
    names = "\t".join(s.name for s in analysis.specs)
    for code in sorted(analysis.upsets):
        table = analysis.upsets[code]
        lines = [f"{names}\tcount\testimated_risk"]
        for cell in table.cells:
            combo = "\t".join(str(v) for v in cell.combo)
            lines.append(f"{combo}\t{cell.count}\t{cell.estimated_risk!r}")
        rel = f"upset/cluster_{code}.tsv"
        (out / rel).write_text("\n".join(lines) + "\n")
        files.append(rel)

    spearman_value = None
    if analysis.sanity is not None:
        lines = [
            "cluster\tbits\tbase\testimated_rr\tobserved_rr\t"
            "exposed_n\texposed_pos\tunexposed_n\tunexposed_pos"
        ]
        for row in analysis.sanity.rows:
            obs = row.observed
            obs_text = "NA" if obs.ratio is None else repr(obs.ratio)
            lines.append(
                f"{row.cluster}\t{render_code(row.bits)}\t{render_code(row.base_combo)}\t"
                f"{row.estimated_rr!r}\t{obs_text}\t{obs.exposed_total}\t{obs.exposed_positive}\t"
                f"{obs.unexposed_total}\t{obs.unexposed_positive}"
            )
        (out / "sanity.tsv").write_text("\n".join(lines) + "\n")
        files.append("sanity.tsv")
        spearman_value = analysis.sanity.spearman

    manifest = {
        "task": analysis.task,
        "files": files,
        "clusters": len(analysis.clusters),
        "major_clusters": sum(1 for c in analysis.clusters if c.major),
        "patients": int(len(analysis.patient_ids)),
        "sanity_spearman": spearman_value,
        "sanity_notice": analysis.sanity.notice if analysis.sanity else "no binary exposure concept",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def generate(run_config: RunConfig) -> Dataset:
    return generate_cohort(run_config.generator)
