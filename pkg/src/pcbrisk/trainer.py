"""Optimization loop (warmup/hold/cosine schedule, early stopping on the
tuning loss), evaluation, and the binary checkpoint format."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, adam_step
from .bottleneck import BottleneckConfig
from .concepts import BINARY, ConceptSpec
from .encoder import EncoderConfig
from .errors import (
    ChecksumError,
    CheckpointError,
    ConfigError,
    TrainingDiverged,
    TruncatedFileError,
    UnsupportedVersionError,
    UsageError,
)
from .metrics import auprc, auroc, binary_f1, macro_f1
from .model import BASELINE, PCB, BaselineModel, PcbModel, eval_in_batches
from .synthdata import (
    CodeVocabulary,
    Dataset,
    TokenBatch,
    encode_dataset,
    spec_from_json,
    spec_to_json,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    base_lr: float = 1e-3
    warmup_frac: float = 0.1
    hold_frac: float = 0.4
    decay_frac: float = 0.5
    patience: int = 10
    seed: int = 0
    eval_batch_size: int = 512

    def __post_init__(self):
        fracs = (self.warmup_frac, self.hold_frac, self.decay_frac)
        if any(f < 0 for f in fracs):
            raise ConfigError("trainer phase fractions must be non-negative")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ConfigError(
                f"trainer warmup/hold/decay fractions must sum to 1, got {sum(fracs)!r}"
            )
        if self.patience < 1:
            raise ConfigError("trainer.patience must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("trainer.epochs and batch_size must be >= 1")
        if self.base_lr <= 0:
            raise ConfigError("trainer.base_lr must be positive")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def lr_at(step: float, total_steps: float, config: TrainConfig) -> float:
    """Linear warmup to base, flat hold, cosine decay to zero."""
    if not 0 <= step <= total_steps:
        raise UsageError(f"step {step} outside [0, {total_steps}]")
    base = config.base_lr
    warm = config.warmup_frac * total_steps
    hold_end = (config.warmup_frac + config.hold_frac) * total_steps
    if step < warm:
        return base * (step / warm)
    if step < hold_end or total_steps == hold_end:
        return base
    u = (step - hold_end) / (total_steps - hold_end)
    return base * 0.5 * (1.0 + math.cos(math.pi * u))


@dataclass
class SplitTensors:
    """Encoded sequences plus aligned supervision columns for one split."""

    batch: TokenBatch
    concepts: np.ndarray
    labels: np.ndarray
    patient_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def prepare_split(dataset: Dataset, max_len: int, min_visits: int = 3) -> SplitTensors:
    return SplitTensors(
        batch=encode_dataset(dataset, max_len, min_visits),
        concepts=dataset.concept_matrix(),
        labels=dataset.labels(),
        patient_ids=np.array([r.patient_id for r in dataset.records]),
    )


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    tune_loss: float
    lr: float
    tau: float | None


@dataclass
class TrainingHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_tune_loss: float = math.inf
    stopped_early: bool = False


def _chunked_eval_loss(model, data: SplitTensors, chunk: int) -> float:
    total, count = 0.0, 0
    for lo in range(0, len(data), chunk):
        rows = slice(lo, lo + chunk)
        n = len(data.labels[rows])
        total += model.evaluation_loss(data.batch.select(rows), data.concepts[rows], data.labels[rows]) * n
        count += n
    return total / count


def train(model, train_data: SplitTensors, tune_data: SplitTensors, config: TrainConfig) -> TrainingHistory:
    """Run the schedule until the epoch budget or the patience runs out,
    then restore the parameters of the best tuning-loss epoch."""
    rng = np.random.default_rng(config.seed)
    n = len(train_data)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    state = AdamState()
    params = model.tape.parameters()
    history = TrainingHistory()
    best_snapshot = None
    bad_epochs = 0
    step = 0
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n)
        losses = []
        lr = config.base_lr
        for lo in range(0, n, config.batch_size):
            rows = perm[lo : lo + config.batch_size]
            model.tape.zero_grad()
            loss = model.training_loss(
                train_data.batch.select(rows), train_data.concepts[rows],
                train_data.labels[rows], rng,
            )
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDiverged(f"loss became {value} at epoch {epoch}, step {step}")
            losses.append(value)
            model.tape.backward(loss)
            # midpoint of the step keeps the rate strictly positive at both
            # schedule endpoints (0 at step 0, 0 at the final step)
            lr = lr_at(step + 0.5, total_steps, config)
            adam_step(params, state, lr)
            model.post_step()
            step += 1
        tune_loss = _chunked_eval_loss(model, tune_data, config.eval_batch_size)
        tau = model.state.tau if hasattr(model, "state") else None
        history.epochs.append(EpochStats(epoch, float(np.mean(losses)), tune_loss, lr, tau))
        if tune_loss < history.best_tune_loss:
            history.best_tune_loss = tune_loss
            history.best_epoch = epoch
            best_snapshot = (model.tape.state_dict(), getattr(model, "state", None))
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= config.patience:
                history.stopped_early = True
                break
    if best_snapshot is not None:
        model.tape.load_state_dict(best_snapshot[0])
        if best_snapshot[1] is not None:
            model.state = best_snapshot[1]
    return history


def write_history(history: TrainingHistory, path) -> None:
    lines = ["epoch\ttrain_loss\ttune_loss\tlr\ttau"]
    for e in history.epochs:
        tau = "" if e.tau is None else repr(e.tau)
        lines.append(f"{e.epoch}\t{e.train_loss!r}\t{e.tune_loss!r}\t{e.lr!r}\t{tau}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class Metrics:
    auroc: float
    auprc: float
    concept_f1: dict[str, float]
    loss: float

    def to_json(self) -> dict:
        return {
            "auroc": self.auroc,
            "auprc": self.auprc,
            "concept_f1": dict(sorted(self.concept_f1.items())),
            "loss": self.loss,
        }


def evaluate(model, data: SplitTensors, eval_batch_size: int = 512) -> Metrics:
    """Risk metrics under the test-time contract (predicted concepts feed
    the classifier) plus per-concept F1 from the concept heads."""
    risk, concept_logits, _codes = eval_in_batches(model, data.batch, eval_batch_size)
    concept_f1: dict[str, float] = {}
    if concept_logits is not None:
        for k, spec in enumerate(model.specs):
            true = data.concepts[:, k]
            if spec.kind == BINARY:
                concept_f1[spec.name] = binary_f1(concept_logits[k] > 0, true)
            else:
                concept_f1[spec.name] = macro_f1(
                    concept_logits[k].argmax(axis=-1), true, spec.num_categories
                )
    return Metrics(
        auroc=auroc(risk, data.labels),
        auprc=auprc(risk, data.labels),
        concept_f1=concept_f1,
        loss=_chunked_eval_loss(model, data, eval_batch_size),
    )


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"PCBCHKPT"
FORMAT_VERSION = 1


def save_checkpoint(model, vocab: CodeVocabulary, meta: dict, path) -> None:
    """Magic, version, checksum, JSON header, then named float64 blocks."""
    params = model.tape.state_dict()
    header = model.header()
    header["specs"] = [spec_to_json(s) for s in model.specs]
    header["vocab"] = [[e.token_id, e.code] for e in vocab.entries]
    header["meta"] = meta
    header["params"] = [{"name": k, "shape": list(v.shape)} for k, v in params.items()]
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = struct.pack("<Q", len(header_bytes)) + header_bytes
    payload += b"".join(np.ascontiguousarray(v, dtype=np.float64).tobytes() for v in params.values())
    digest = hashlib.sha256(payload).digest()
    Path(path).write_bytes(MAGIC + struct.pack("<I", FORMAT_VERSION) + digest + payload)


@dataclass
class CheckpointBundle:
    model: object
    vocab: CodeVocabulary
    meta: dict


def load_checkpoint(path) -> CheckpointBundle:
    raw = Path(path).read_bytes()
    prefix = len(MAGIC) + 4 + 32
    if len(raw) < prefix + 8:
        raise TruncatedFileError(f"{path}: file shorter than the checkpoint preamble")
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic bytes)")
    (version,) = struct.unpack_from("<I", raw, len(MAGIC))
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    digest = raw[len(MAGIC) + 4 : prefix]
    payload = raw[prefix:]
    (header_len,) = struct.unpack_from("<Q", payload, 0)
    if len(payload) < 8 + header_len:
        raise TruncatedFileError(f"{path}: header truncated")
    try:
        header = json.loads(payload[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        # byte damage inside the header surfaces as a checksum problem
        if hashlib.sha256(payload).digest() != digest:
            raise ChecksumError(f"{path}: checksum mismatch") from None
        raise CheckpointError(f"{path}: unreadable header") from None
    block_bytes = sum(
        8 * int(np.prod(p["shape"], dtype=np.int64, initial=1)) for p in header["params"]
    )
    if len(payload) != 8 + header_len + block_bytes:
        raise TruncatedFileError(
            f"{path}: expected {8 + header_len + block_bytes} payload bytes, got {len(payload)}"
        )
    if hashlib.sha256(payload).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch")

    specs = tuple(spec_from_json(o) for o in header["specs"])
    encoder_config = EncoderConfig(**header["encoder"])
    if header["kind"] == BASELINE:
        model = BaselineModel(encoder_config)
    elif header["kind"] == PCB:
        model = PcbModel(encoder_config, specs, BottleneckConfig(**header["bottleneck"]))
        model.state = dataclasses.replace(model.state, steps=header["tau_steps"])
    else:
        raise CheckpointError(f"{path}: unknown model kind {header['kind']!r}")

    state = {}
    offset = 8 + header_len
    for p in header["params"]:
        shape = tuple(p["shape"])
        count = int(np.prod(shape, dtype=np.int64, initial=1))
        block = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(shape)
        state[p["name"]] = block.copy()
        offset += 8 * count
    model.tape.load_state_dict(state)

    vocab = CodeVocabulary.from_pairs(header["vocab"])
    return CheckpointBundle(model=model, vocab=vocab, meta=header.get("meta", {}))


def grid_search_latent_width(build_model, train_data, tune_data, config: TrainConfig, widths):
    """Train one model per candidate n; keep the best tuning loss."""
    best = None
    for n in widths:
        model = build_model(n)
        history = train(model, train_data, tune_data, config)
        if best is None or history.best_tune_loss < best[1].best_tune_loss:
            best = (model, history, n)
    return best
