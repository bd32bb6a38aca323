"""Command-line pipeline: gen, train, eval, analyze, serve.

Exit codes: 0 success, 1 usage/configuration error, 2 data error,
3 training abort.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import dump_run_config, load_run_config
from .errors import DataError, TrainingDiverged, UsageError
from .pipeline import analyze_cohort, generate, train_model, write_reports
from .synthdata import CodeVocabulary, load_dataset, save_dataset
from .trainer import load_checkpoint, save_checkpoint, write_history

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pcbrisk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, default=None, help="YAML run config")
        p.add_argument("--out", type=Path, default=Path("run"), help="run directory")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")

    p = sub.add_parser("gen", help="generate a synthetic cohort")
    common(p)

    p = sub.add_parser("train", help="train one model on a generated cohort")
    common(p)
    p.add_argument("--model", choices=("pcb", "baseline"), default="pcb")
    p.add_argument("--data", type=Path, default=None, help="dataset file (default: <out>/dataset.jsonl)")

    p = sub.add_parser("eval", help="validation metrics for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, default=None)

    p = sub.add_parser("analyze", help="cluster/UpSet/sanity reports for a checkpoint")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, default=None)

    p = sub.add_parser("serve", help="read-only HTTP service for the explorer UI")
    common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, default=None)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")

    return parser


def _dataset_path(args) -> Path:
    return args.data if args.data is not None else args.out / "dataset.jsonl"


def _load_data(args, vocab: CodeVocabulary | None = None):
    path = _dataset_path(args)
    if vocab is None:
        vocab = CodeVocabulary.load(args.out / "vocab.tsv")
    return load_dataset(path, vocab)


def cmd_gen(args) -> int:
    config = load_run_config(args.config, seed=args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    dataset = generate(config)
    save_dataset(dataset, args.out / "dataset.jsonl")
    dataset.vocab.save(args.out / "vocab.tsv")
    (args.out / "config-resolved.yaml").write_text(dump_run_config(config))
    print(
        f"generated {len(dataset)} patients "
        f"(task {config.task}, label prevalence {dataset.labels().mean():.3f}) "
        f"-> {args.out / 'dataset.jsonl'}"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_run_config(args.config, seed=args.seed)
    dataset = _load_data(args)
    run = train_model(args.model, config, dataset)
    args.out.mkdir(parents=True, exist_ok=True)
    meta = {
        "task": config.task,
        "analysis": config.to_dict()["analysis"],
        "split": config.to_dict()["split"],
        "encoder": config.to_dict()["encoder"],
    }
    ckpt = args.out / f"{args.model}.ckpt"
    save_checkpoint(run.model, dataset.vocab, meta, ckpt)
    write_history(run.history, args.out / f"{args.model}-history.tsv")
    print(
        f"trained {args.model}: best tuning loss {run.history.best_tune_loss:.4f} "
        f"at epoch {run.history.best_epoch}; validation auroc {run.metrics.auroc:.4f}, "
        f"auprc {run.metrics.auprc:.4f} -> {ckpt}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    from .synthdata import split_dataset
    from .trainer import evaluate, prepare_split

    config = load_run_config(args.config, seed=args.seed)
    bundle = load_checkpoint(args.checkpoint)
    dataset = _load_data(args, bundle.vocab)
    enc_cfg = bundle.model.encoder_config
    _train_ds, _tune_ds, valid_ds = split_dataset(dataset, config.split.ratios, config.split.seed)
    valid = prepare_split(valid_ds, enc_cfg.max_len, config.analysis.min_visits)
    metrics = evaluate(bundle.model, valid)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"metrics-{bundle.model.kind}.json"
    path.write_text(json.dumps(metrics.to_json(), indent=2, sort_keys=True) + "\n")
    print(f"validation metrics ({bundle.model.kind}): " + json.dumps(metrics.to_json(), sort_keys=True))
    return EXIT_OK


def cmd_analyze(args) -> int:
    config = load_run_config(args.config, seed=args.seed)
    bundle = load_checkpoint(args.checkpoint)
    if bundle.model.kind != "pcb":
        raise UsageError("analyze needs a bottleneck (pcb) checkpoint")
    dataset = _load_data(args, bundle.vocab)
    analysis = analyze_cohort(bundle.model, dataset, config)
    manifest = write_reports(analysis, args.out / "analysis")
    print(
        f"analyzed {manifest['patients']} patients: {manifest['clusters']} clusters "
        f"({manifest['major_clusters']} major), sanity spearman "
        f"{manifest['sanity_spearman']} -> {args.out / 'analysis'}"
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    config = load_run_config(args.config, seed=args.seed)
    app = build_app(args.checkpoint, _dataset_path(args), run_config=config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
