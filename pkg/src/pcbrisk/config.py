"""Run configuration: one YAML file drives the whole pipeline.

A config names a task template and overrides any subset of section keys;
unknown keys are rejected with the offending key in the message. A single
top-level `seed` fans out to the generator, split, and trainer unless a
section pins its own.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .bottleneck import BottleneckConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .synthdata import GeneratorConfig
from .templates import template_generator
from .trainer import TrainConfig

DEFAULT_ENCODER_SETTINGS = {
    "hidden_dim": 32,
    "heads": 4,
    "intermediate_dim": 64,
    "extractor_layers": 2,
    "aggregator_layers": 2,
    "dropout": 0.1,
    "attention_dropout": 0.0,
    "max_len": 48,
    "window": 16,
    "stride": 8,
    "age_vocab_size": 120,
}


@dataclass(frozen=True)
class SplitConfig:
    ratios: tuple[float, float, float] = (0.6, 0.1, 0.3)
    seed: int = 0


@dataclass(frozen=True)
class AnalysisConfig:
    coverage: float = 0.95
    plausibility_lo: float = 0.05
    plausibility_hi: float = 0.95
    exposure_concept: str | None = None
    min_visits: int = 3

    def __post_init__(self):
        if not 0.0 < self.coverage <= 1.0:
            raise ConfigError("analysis.coverage must lie in (0, 1]")
        if not 0.0 <= self.plausibility_lo < self.plausibility_hi <= 1.0:
            raise ConfigError("analysis plausibility bounds need 0 <= lo < hi <= 1")


@dataclass
class RunConfig:
    task: str
    generator: GeneratorConfig
    encoder_settings: dict
    bottleneck: BottleneckConfig
    trainer: TrainConfig
    pcb_lr: float | None = None
    split: SplitConfig = SplitConfig()
    analysis: AnalysisConfig = AnalysisConfig()

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(vocab_size=vocab_size, **self.encoder_settings)

    def pcb_trainer(self) -> TrainConfig:
        """Same budget as the baseline; only the learning rate may differ."""
        if self.pcb_lr is None:
            return self.trainer
        return dataclasses.replace(self.trainer, base_lr=self.pcb_lr)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "generator": _plain(dataclasses.asdict(self.generator)),
            "encoder": dict(self.encoder_settings),
            "bottleneck": _plain(dataclasses.asdict(self.bottleneck)),
            "trainer": _plain(dataclasses.asdict(self.trainer)),
            "pcb_lr": self.pcb_lr,
            "split": _plain(dataclasses.asdict(self.split)),
            "analysis": _plain(dataclasses.asdict(self.analysis)),
        }


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _merge(section: str, defaults: dict, overrides: dict | None) -> dict:
    merged = dict(defaults)
    for key, value in (overrides or {}).items():
        if key not in defaults:
            raise ConfigError(f"{section}.{key}: unknown configuration key")
        if isinstance(value, list):
            value = _tupled(value)
        merged[key] = value
    return merged


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def default_run_config(task: str = "af-hf-style", num_patients: int = 10_000, seed: int = 0) -> RunConfig:
    return RunConfig(
        task=task,
        generator=template_generator(task, num_patients=num_patients, seed=seed),
        encoder_settings=dict(DEFAULT_ENCODER_SETTINGS),
        bottleneck=BottleneckConfig(),
        trainer=TrainConfig(epochs=25, batch_size=128, base_lr=1e-3, patience=6, seed=seed),
        pcb_lr=None,
        split=SplitConfig(seed=seed),
        analysis=AnalysisConfig(),
    )


_SECTIONS = {"template", "task", "seed", "generator", "encoder", "bottleneck",
             "trainer", "pcb_lr", "split", "analysis"}


def run_config_from_dict(obj: dict) -> RunConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a mapping")
    unknown = set(obj) - _SECTIONS
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown configuration key")
    task = obj.get("template", obj.get("task", "af-hf-style"))
    seed = obj.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed: must be an integer")

    gen_overrides = dict(obj.get("generator") or {})
    gen_overrides.setdefault("seed", seed)
    base = default_run_config(task, seed=seed)
    gen_defaults = dataclasses.asdict(base.generator)
    generator = GeneratorConfig(**_merge("generator", gen_defaults, gen_overrides))

    encoder_settings = _merge("encoder", dict(DEFAULT_ENCODER_SETTINGS), obj.get("encoder"))
    bottleneck = BottleneckConfig(
        **_merge("bottleneck", dataclasses.asdict(base.bottleneck), obj.get("bottleneck"))
    )
    trainer_overrides = dict(obj.get("trainer") or {})
    trainer_overrides.setdefault("seed", seed)
    trainer = TrainConfig(**_merge("trainer", dataclasses.asdict(base.trainer), trainer_overrides))
    split_overrides = dict(obj.get("split") or {})
    split_overrides.setdefault("seed", seed)
    split = SplitConfig(**_merge("split", dataclasses.asdict(base.split), split_overrides))
    analysis = AnalysisConfig(
        **_merge("analysis", dataclasses.asdict(base.analysis), obj.get("analysis"))
    )
    pcb_lr = obj.get("pcb_lr")
    if pcb_lr is not None and (not isinstance(pcb_lr, (int, float)) or pcb_lr <= 0):
        raise ConfigError("pcb_lr: must be a positive number")
    return RunConfig(
        task=task,
        generator=generator,
        encoder_settings=encoder_settings,
        bottleneck=bottleneck,
        trainer=trainer,
        pcb_lr=pcb_lr,
        split=split,
        analysis=analysis,
    )


def load_run_config(path=None, seed: int | None = None) -> RunConfig:
    """Config file -> RunConfig; defaults to the af-hf-style template."""
    obj: dict = {}
    if path is not None:
        text = Path(path).read_text()
        loaded = yaml.safe_load(text)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
        obj = loaded
    if seed is not None:
        obj = dict(obj)
        obj["seed"] = seed
        # a command-line seed overrides section seeds too
        for section in ("generator", "trainer", "split"):
            if isinstance(obj.get(section), dict):
                obj[section] = {k: v for k, v in obj[section].items() if k != "seed"}
    return run_config_from_dict(obj)


def dump_run_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=True, default_flow_style=False)
