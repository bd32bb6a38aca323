"""Risk prediction with a partial concept bottleneck, plus the synthetic
cohorts, counterfactual engine, and service needed to exercise it end to end."""

from .bottleneck import BottleneckConfig, QuantizerState, gumbel_softmax, temperature_step
from .concepts import ConceptSpec, derive_concepts
from .config import RunConfig, default_run_config, load_run_config
from .counterfactual import (
    CounterfactualResult,
    PlausibilityRange,
    UpsetTable,
    assign_clusters,
    counterfactual_query,
    estimate_risk,
    judge_plausibility,
    observed_risk_ratio,
    risk_ratio,
    sanity_report,
    select_major_clusters,
    upset,
)
from .encoder import EncoderConfig, HiEncoder
from .metrics import auprc, auroc, binary_f1, macro_f1, spearman
from .model import BaselineModel, PcbModel
from .pipeline import analyze_cohort, generate, train_model, write_reports
from .synthdata import (
    CodeVocabulary,
    Dataset,
    GeneratorConfig,
    MedicalEvent,
    PatientRecord,
    TokenSequence,
    categorize_measurement,
    encode_patient,
    generate_cohort,
    load_dataset,
    save_dataset,
    split_dataset,
)
from .trainer import (
    Metrics,
    TrainConfig,
    evaluate,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "BaselineModel",
    "BottleneckConfig",
    "CodeVocabulary",
    "ConceptSpec",
    "CounterfactualResult",
    "Dataset",
    "EncoderConfig",
    "GeneratorConfig",
    "HiEncoder",
    "MedicalEvent",
    "Metrics",
    "PatientRecord",
    "PcbModel",
    "PlausibilityRange",
    "QuantizerState",
    "RunConfig",
    "TokenSequence",
    "TrainConfig",
    "UpsetTable",
    "analyze_cohort",
    "assign_clusters",
    "auprc",
    "auroc",
    "binary_f1",
    "categorize_measurement",
    "counterfactual_query",
    "default_run_config",
    "derive_concepts",
    "encode_patient",
    "estimate_risk",
    "evaluate",
    "generate",
    "generate_cohort",
    "gumbel_softmax",
    "judge_plausibility",
    "load_checkpoint",
    "load_dataset",
    "load_run_config",
    "lr_at",
    "macro_f1",
    "observed_risk_ratio",
    "risk_ratio",
    "sanity_report",
    "save_checkpoint",
    "save_dataset",
    "select_major_clusters",
    "spearman",
    "split_dataset",
    "temperature_step",
    "train",
    "train_model",
    "upset",
    "write_reports",
]
