"""The partial-bottleneck head: concept predictors, a Gumbel-Softmax vector
quantizer over n binary groups with a 1-d codebook entry per group value,
the risk classifier over concepts + latent embedding, and the joint loss.

Train-time quantization draws hard straight-through samples; eval-time
quantization is a deterministic per-group argmax, so a frozen model assigns
every input a stable n-bit code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .concepts import BINARY, ConceptSpec
from .errors import ConfigError, UsageError

TRAIN = "train"
EVAL = "eval"


@dataclass(frozen=True)
class BottleneckConfig:
    n_latent: int = 6
    tau_init: float = 2.0
    tau_min: float = 0.5
    tau_decay: float = 0.999
    concept_hidden: int = 64
    classifier_sizes: tuple[int, int] = (16, 8)
    lambda_c: float = 1.0

    def __post_init__(self):
        if self.n_latent < 1:
            raise ConfigError("bottleneck.n_latent must be >= 1")
        if not 0.0 < self.tau_min <= self.tau_init:
            raise ConfigError("bottleneck temperatures need 0 < tau_min <= tau_init")
        if not 0.0 < self.tau_decay <= 1.0:
            raise ConfigError("bottleneck.tau_decay must lie in (0, 1]")
        if self.lambda_c < 0:
            raise ConfigError("bottleneck.lambda_c must be non-negative")

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class QuantizerState:
    """Gumbel-Softmax temperature schedule: exponential decay to a floor.

    The temperature is derived from the step count in closed form
    (tau_init * decay**steps, clamped), so it matches the analytic schedule
    exactly instead of accumulating rounding from repeated multiplication.
    """

    tau_init: float = 2.0
    tau_min: float = 0.5
    decay: float = 0.999
    steps: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau_min <= self.tau_init:
            raise ConfigError("quantizer temperature needs 0 < tau_min <= tau_init")
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError("quantizer decay must lie in (0, 1]")
        if self.steps < 0:
            raise ConfigError("quantizer steps must be non-negative")

    @property
    def tau(self) -> float:
        return max(self.tau_min, self.tau_init * self.decay**self.steps)


def temperature_step(state: QuantizerState) -> QuantizerState:
    """Advance the schedule by one optimizer step."""
    return replace(state, steps=state.steps + 1)


@dataclass
class BottleneckOutput:
    """Eval-mode head outputs for a batch."""

    concept_logits: list[np.ndarray]
    latent_code: np.ndarray
    latent_embedding: np.ndarray


def gumbel_softmax(logits: Tensor, tau: float, hard: bool, rng: np.random.Generator) -> Tensor:
    """Temperature-scaled softmax over Gumbel-perturbed logits (last axis).

    With `hard`, the forward value is the exact one-hot argmax while the
    gradient is the relaxed sample's (straight-through).
    """
    if tau <= 0:
        raise UsageError(f"gumbel temperature must be positive, got {tau}")
    u = np.clip(rng.random(logits.shape), 1e-12, 1.0 - 1e-12)
    noise = -np.log(-np.log(u))
    y = ad.softmax((logits + Tensor(noise)) * Tensor(1.0 / tau))
    if not hard:
        return y
    onehot = _one_hot_like(y.data)
    return y + Tensor(onehot - y.data)


def _one_hot_like(values: np.ndarray) -> np.ndarray:
    onehot = np.zeros_like(values)
    idx = values.argmax(axis=-1)
    np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
    return onehot


class VectorQuantizer:
    """Projects a representation to n binary groups and embeds the choice.

    Group logits are scaled cosine similarities rather than raw linear
    scores: bounded logits keep the Gumbel samples explorable and the
    straight-through gradient alive for the whole run, where a free
    linear projection saturates early and freezes all groups onto the
    first risk-correlated direction it finds.
    """

    def __init__(self, tape, rng, hidden_dim: int, n_latent: int, prefix="quantizer",
                 logit_scale: float = 4.0):
        self.n = n_latent
        self.logit_scale = logit_scale
        self.proj_w = tape.parameter(f"{prefix}.proj_w", rng.normal(0, 0.02, (hidden_dim, 2 * n_latent)))
        self.proj_b = tape.parameter(f"{prefix}.proj_b", np.zeros(2 * n_latent))
        # one scalar embedding per (group, value); near-zero start keeps the
        # latent pathway neutral until it picks up signal the concept inputs
        # cannot explain
        self.codebook = tape.parameter(f"{prefix}.codebook", rng.normal(0, 0.01, (n_latent, 2)))

    def group_logits(self, representation: Tensor) -> Tensor:
        b = representation.shape[0]
        w_norm = ad.sqrt(
            ad.sum_(self.proj_w * self.proj_w, axis=0, keepdims=True) + Tensor(1e-12)
        )
        r_norm = ad.sqrt(
            ad.sum_(representation * representation, axis=1, keepdims=True) + Tensor(1e-12)
        )
        sims = ad.div(ad.matmul(representation, self.proj_w), r_norm * w_norm)
        flat = sims * Tensor(self.logit_scale) + self.proj_b
        return ad.reshape(flat, (b, self.n, 2))

    def _embed(self, selection: Tensor) -> Tensor:
        """selection: [B, n, 2] weights -> [B, n] codebook mixture."""
        b = selection.shape[0]
        book = ad.reshape(self.codebook, (1, self.n, 2))
        return ad.sum_(selection * book, axis=2)

    def quantize(self, representation: Tensor, mode: str, tau: float, rng=None):
        """-> (codes [B, n] int, latent embedding Tensor [B, n]).

        Train mode samples hard with straight-through gradients; eval mode
        is the noise-free per-group argmax.
        """
        logits = self.group_logits(representation)
        if mode == TRAIN:
            selection = gumbel_softmax(logits, tau, hard=True, rng=rng)
            codes = selection.data.argmax(axis=-1).astype(np.int64)
        elif mode == EVAL:
            codes = logits.data.argmax(axis=-1).astype(np.int64)
            selection = Tensor(_one_hot_like(logits.data))
        else:
            raise UsageError(f"unknown quantizer mode {mode!r}")
        return codes, self._embed(selection)

    def embed_codes(self, codes: np.ndarray) -> Tensor:
        """Latent embedding for explicit bit vectors [M, n]."""
        codes = np.asarray(codes)
        if codes.ndim != 2 or codes.shape[1] != self.n:
            raise UsageError(f"codes must have shape [*, {self.n}], got {codes.shape}")
        onehot = np.zeros((codes.shape[0], self.n, 2))
        np.put_along_axis(onehot, codes[..., None], 1.0, axis=-1)
        return self._embed(Tensor(onehot))


class ConceptHead:
    """Two-layer MLP from the representation to all concept logits."""

    def __init__(self, tape, rng, hidden_dim: int, specs, width: int = 64, prefix="concept_head"):
        self.specs = tuple(specs)
        total = sum(s.num_logits for s in self.specs)
        self.w1 = tape.parameter(f"{prefix}.w1", rng.normal(0, 0.02, (hidden_dim, width)))
        self.b1 = tape.parameter(f"{prefix}.b1", np.zeros(width))
        self.w2 = tape.parameter(f"{prefix}.w2", rng.normal(0, 0.02, (width, total)))
        self.b2 = tape.parameter(f"{prefix}.b2", np.zeros(total))

    def __call__(self, representation: Tensor) -> list[Tensor]:
        """Per-concept logits: [B] for binary, [B, K] for categorical."""
        hidden = ad.relu(ad.linear(representation, self.w1, self.b1))
        logits = ad.linear(hidden, self.w2, self.b2)
        out, offset = [], 0
        for spec in self.specs:
            chunk = logits[:, offset : offset + spec.num_logits]
            out.append(ad.reshape(chunk, (chunk.shape[0],)) if spec.kind == BINARY else chunk)
            offset += spec.num_logits
        return out


class RiskClassifier:
    """Three-layer MLP over [concept input, latent embedding] -> risk logit.

    The first `concept_width` input rows start with larger weights: the
    concept pathway must pick up its share of the risk signal before the
    quantizer's free embeddings can absorb it, otherwise interventions on
    concepts stop moving the prediction.
    """

    def __init__(self, tape, rng, input_dim: int, sizes=(16, 8), prefix="classifier",
                 concept_width: int = 0):
        self.input_dim = input_dim
        dims = [input_dim, *sizes, 1]
        self.layers = []
        for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
            weights = rng.normal(0, 0.25, (d_in, d_out))
            if i == 0 and concept_width:
                weights[:concept_width] *= 4.0
            self.layers.append(
                (
                    tape.parameter(f"{prefix}.w{i}", weights),
                    tape.parameter(f"{prefix}.b{i}", np.zeros(d_out)),
                )
            )

    def __call__(self, features: Tensor) -> Tensor:
        x = features
        for i, (w, b) in enumerate(self.layers):
            x = ad.linear(x, w, b)
            if i < len(self.layers) - 1:
                x = ad.relu(x)
        return ad.reshape(x, (features.shape[0],))


GROUND_TRUTH = "ground-truth"
PREDICTED = "predicted"


def assemble_concept_input(
    specs,
    embedding_tables: dict[str, Tensor],
    *,
    source: str,
    values: np.ndarray | None = None,
    predicted_logits: list[Tensor] | None = None,
) -> Tensor:
    """Concatenate per-concept inputs for the risk classifier.

    Ground-truth (and intervened) binary concepts enter as exact 0/1
    scalars and categorical ones as their embedding row; predicted binary
    concepts enter as sigmoid(logit) and categorical ones as the argmax
    category's embedding.
    """
    if source == GROUND_TRUTH:
        if values is None:
            raise UsageError("ground-truth assembly needs concept values")
        values = np.asarray(values)
        for k, spec in enumerate(specs):
            col = values[:, k]
            if col.min(initial=0) < 0 or col.max(initial=0) >= spec.arity:
                raise UsageError(f"concept {spec.name!r}: value outside [0, {spec.arity})")
    elif source == PREDICTED:
        if predicted_logits is None:
            raise UsageError("predicted assembly needs concept logits")
    else:
        raise UsageError(f"unknown concept source {source!r}")

    parts = []
    for k, spec in enumerate(specs):
        if spec.kind == BINARY:
            if source == GROUND_TRUTH:
                parts.append(Tensor(values[:, k].astype(np.float64)[:, None]))
            else:
                probs = ad.sigmoid(predicted_logits[k])
                parts.append(ad.reshape(probs, (probs.shape[0], 1)))
        else:
            table = embedding_tables[spec.name]
            if source == GROUND_TRUTH:
                idx = values[:, k]
            else:
                idx = predicted_logits[k].data.argmax(axis=-1)
            parts.append(ad.embedding_lookup(table, idx))
    return ad.concat(parts, axis=1)


def make_embedding_tables(tape, rng, specs, prefix="concept_emb") -> dict[str, Tensor]:
    tables = {}
    for spec in specs:
        if spec.kind != BINARY:
            tables[spec.name] = tape.parameter(
                f"{prefix}.{spec.name}", rng.normal(0, 0.25, (spec.num_categories, spec.embed_dim))
            )
    return tables


def joint_loss(
    risk_logit: Tensor,
    labels: np.ndarray,
    concept_logits: list[Tensor],
    true_concepts: np.ndarray,
    specs,
    lambda_c: float = 1.0,
) -> Tensor:
    """Outcome BCE plus the (optionally weighted) sum of concept losses."""
    loss = ad.bce_with_logits(risk_logit, labels)
    true_concepts = np.asarray(true_concepts)
    for k, spec in enumerate(specs):
        col = true_concepts[:, k]
        if spec.kind == BINARY:
            term = ad.bce_with_logits(concept_logits[k], col.astype(np.float64))
        else:
            term = ad.ce_with_logits(concept_logits[k], col)
        if lambda_c == 1.0:
            loss = loss + term
        else:
            loss = loss + Tensor(lambda_c) * term
    return loss
