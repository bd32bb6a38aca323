"""Run the binary-concept experiment end to end at desk scale: generate a
planted cohort, train the black-box baseline and the bottleneck model with
identical budgets, evaluate both, and write the analysis reports.

Usage: python scripts/run_af_hf_pipeline.py [--patients 10000] [--seed 1]
       [--epochs 25] [--out run-af-hf]
"""

import argparse
import dataclasses
import json
import time
from pathlib import Path

import numpy as np

from pcbrisk.config import default_run_config, dump_run_config
from pcbrisk.pipeline import analyze_cohort, generate, train_model, write_reports
from pcbrisk.synthdata import save_dataset
from pcbrisk.trainer import save_checkpoint, write_history


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--patients", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--epochs", type=int, default=25)
    ap.add_argument("--pcb-lr", type=float, default=None)
    ap.add_argument("--out", type=Path, default=Path("run-af-hf"))
    args = ap.parse_args()

    config = default_run_config("af-hf-style", num_patients=args.patients, seed=args.seed)
    config.trainer = dataclasses.replace(config.trainer, epochs=args.epochs)
    config.pcb_lr = args.pcb_lr
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "config-resolved.yaml").write_text(dump_run_config(config))

    t0 = time.time()
    dataset = generate(config)
    save_dataset(dataset, args.out / "dataset.jsonl")
    dataset.vocab.save(args.out / "vocab.tsv")
    print(f"[{time.time()-t0:6.1f}s] generated {len(dataset)} patients, "
          f"prevalence {dataset.labels().mean():.3f}", flush=True)

    results = {}
    for kind in ("baseline", "pcb"):
        t1 = time.time()
        run = train_model(kind, config, dataset)
        meta = {"task": config.task, "analysis": config.to_dict()["analysis"],
                "split": config.to_dict()["split"]}
        save_checkpoint(run.model, dataset.vocab, meta, args.out / f"{kind}.ckpt")
        write_history(run.history, args.out / f"{kind}-history.tsv")
        results[kind] = run
        print(f"[{time.time()-t0:6.1f}s] {kind}: {time.time()-t1:.0f}s, "
              f"best epoch {run.history.best_epoch}, "
              f"valid auroc {run.metrics.auroc:.4f} auprc {run.metrics.auprc:.4f} "
              f"f1 {run.metrics.concept_f1}", flush=True)

    analysis = analyze_cohort(results["pcb"].model, dataset, config)
    manifest = write_reports(analysis, args.out / "analysis")
    print(f"[{time.time()-t0:6.1f}s] clusters: "
          f"{[(c.code, c.size, round(c.mean_risk, 3)) for c in analysis.clusters]}", flush=True)
    if analysis.sanity is not None:
        for row in analysis.sanity.rows:
            obs = row.observed
            print(f"  cluster {row.cluster:3d} base={row.base_combo} "
                  f"est_rr={row.estimated_rr:6.3f} obs_rr="
                  f"{'NA' if obs.ratio is None else f'{obs.ratio:6.3f}'} "
                  f"arms e={obs.exposed_positive}/{obs.exposed_total} "
                  f"u={obs.unexposed_positive}/{obs.unexposed_total}", flush=True)
        print(f"  sanity spearman: {analysis.sanity.spearman}", flush=True)

    # purity of clusters against the hidden strata (generator oracle)
    strata = dataset.strata()
    gaps = []
    for info in analysis.clusters:
        members = analysis.assignments == info.code
        counts = np.bincount(strata[members], minlength=4)
        purity = counts.max() / counts.sum()
        stratum = int(counts.argmax())
        oracle_rr = None
        if analysis.sanity is not None:
            row = next((r for r in analysis.sanity.rows if r.cluster == info.code), None)
            if row is not None:
                oracle_rr = config.generator.oracle_risk_ratio(stratum, analysis.exposure_index, row.base_combo)
                gaps.append(abs(row.estimated_rr / oracle_rr - 1.0))
        print(f"  cluster {info.code:3d} size {info.size:5d} majority stratum {stratum} "
              f"purity {purity:.3f} oracle_rr={oracle_rr}", flush=True)
    if gaps:
        print(f"  est-vs-oracle RR relative gaps: max {max(gaps):.3f}")
    summary = {
        "baseline_auroc": results["baseline"].metrics.auroc,
        "pcb_auroc": results["pcb"].metrics.auroc,
        "concept_f1": results["pcb"].metrics.concept_f1,
        "spearman": None if analysis.sanity is None else analysis.sanity.spearman,
        "manifest": manifest,
    }
    (args.out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"[{time.time()-t0:6.1f}s] done -> {args.out}", flush=True)


if __name__ == "__main__":
    main()
