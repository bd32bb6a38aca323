"""Trainable model assemblies: the black-box baseline (encoder + linear
risk head) and the partial-bottleneck model (encoder + concept head +
vector quantizer + risk classifier over concepts and latent embedding)."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .bottleneck import (
    EVAL,
    GROUND_TRUTH,
    PREDICTED,
    TRAIN,
    BottleneckConfig,
    BottleneckOutput,
    ConceptHead,
    QuantizerState,
    RiskClassifier,
    VectorQuantizer,
    assemble_concept_input,
    joint_loss,
    make_embedding_tables,
    temperature_step,
)
from .encoder import EncoderConfig, HiEncoder, LinearRiskHead
from .errors import UsageError
from .synthdata import TokenBatch

BASELINE = "baseline"
PCB = "pcb"


class BaselineModel:
    """End-to-end black box: patient representation -> one risk logit."""

    kind = BASELINE

    def __init__(self, encoder_config: EncoderConfig, seed: int = 0):
        self.encoder_config = encoder_config
        self.specs = ()
        self.tape = Tape()
        rng = np.random.default_rng(seed)
        self.encoder = HiEncoder(encoder_config, self.tape, rng)
        self.head = LinearRiskHead(self.tape, rng, encoder_config.hidden_dim)

    def risk_logits(self, batch: TokenBatch, *, train=False, rng=None) -> Tensor:
        return self.head(self.encoder(batch, train=train, rng=rng))

    def training_loss(self, batch, concepts, labels, rng) -> Tensor:
        return ad.bce_with_logits(self.risk_logits(batch, train=True, rng=rng), labels)

    def evaluation_loss(self, batch, concepts, labels) -> float:
        return ad.bce_with_logits(self.risk_logits(batch), labels).item()

    def eval_outputs(self, batch) -> tuple[np.ndarray, None]:
        probs = ad.sigmoid(self.risk_logits(batch))
        return probs.data, None

    def post_step(self) -> None:
        pass

    def header(self) -> dict:
        return {"kind": self.kind, "encoder": self.encoder_config.to_json()}


class PcbModel:
    """Partial concept bottleneck over the shared hierarchical encoder."""

    kind = PCB

    def __init__(
        self,
        encoder_config: EncoderConfig,
        specs,
        bottleneck_config: BottleneckConfig | None = None,
        seed: int = 0,
    ):
        self.encoder_config = encoder_config
        self.specs = tuple(specs)
        self.bottleneck_config = bottleneck_config or BottleneckConfig()
        bn = self.bottleneck_config
        self.tape = Tape()
        rng = np.random.default_rng(seed)
        self.encoder = HiEncoder(encoder_config, self.tape, rng)
        self.concept_head = ConceptHead(
            self.tape, rng, encoder_config.hidden_dim, self.specs, width=bn.concept_hidden
        )
        self.quantizer = VectorQuantizer(
            self.tape, rng, encoder_config.hidden_dim, bn.n_latent
        )
        self.embedding_tables = make_embedding_tables(self.tape, rng, self.specs)
        concept_width = sum(s.input_width for s in self.specs)
        input_dim = concept_width + bn.n_latent
        self.classifier = RiskClassifier(
            self.tape, rng, input_dim, sizes=bn.classifier_sizes, concept_width=concept_width
        )
        self.state = QuantizerState(tau_init=bn.tau_init, tau_min=bn.tau_min, decay=bn.tau_decay)

    @property
    def n_latent(self) -> int:
        return self.bottleneck_config.n_latent

    def _risk_logit(self, concept_input: Tensor, latent_embedding: Tensor) -> Tensor:
        return self.classifier(ad.concat([concept_input, latent_embedding], axis=1))

    def training_loss(self, batch, concepts, labels, rng) -> Tensor:
        """Joint objective on one minibatch: hard-sampled latent, ground-truth
        concepts feeding the classifier, concept heads supervised."""
        rep = self.encoder(batch, train=True, rng=rng)
        concept_logits = self.concept_head(rep)
        _codes, embedding = self.quantizer.quantize(rep, TRAIN, self.state.tau, rng)
        concept_input = assemble_concept_input(
            self.specs, self.embedding_tables, source=GROUND_TRUTH, values=concepts
        )
        risk_logit = self._risk_logit(concept_input, embedding)
        return joint_loss(
            risk_logit, labels, concept_logits, concepts, self.specs,
            lambda_c=self.bottleneck_config.lambda_c,
        )

    def evaluation_loss(self, batch, concepts, labels) -> float:
        """Deterministic counterpart of the training objective (no dropout,
        argmax quantization); drives early stopping."""
        rep = self.encoder(batch)
        concept_logits = self.concept_head(rep)
        _codes, embedding = self.quantizer.quantize(rep, EVAL, self.state.tau)
        concept_input = assemble_concept_input(
            self.specs, self.embedding_tables, source=GROUND_TRUTH, values=concepts
        )
        risk_logit = self._risk_logit(concept_input, embedding)
        return joint_loss(
            risk_logit, labels, concept_logits, concepts, self.specs,
            lambda_c=self.bottleneck_config.lambda_c,
        ).item()

    def eval_outputs(self, batch) -> tuple[np.ndarray, BottleneckOutput]:
        """Test-time contract: predicted concepts feed the classifier."""
        rep = self.encoder(batch)
        concept_logits = self.concept_head(rep)
        codes, embedding = self.quantizer.quantize(rep, EVAL, self.state.tau)
        concept_input = assemble_concept_input(
            self.specs, self.embedding_tables, source=PREDICTED, predicted_logits=concept_logits
        )
        probs = ad.sigmoid(self._risk_logit(concept_input, embedding))
        out = BottleneckOutput(
            concept_logits=[t.data for t in concept_logits],
            latent_code=codes,
            latent_embedding=embedding.data,
        )
        return probs.data, out

    def risk_for(self, codes: np.ndarray, concept_values: np.ndarray) -> np.ndarray:
        """Risk under explicit (latent code, full concept assignment) pairs;
        a pure function of its arguments given frozen parameters."""
        codes = np.atleast_2d(np.asarray(codes))
        values = np.atleast_2d(np.asarray(concept_values))
        if len(codes) != len(values):
            raise UsageError("codes and concept assignments must pair up")
        embedding = self.quantizer.embed_codes(codes)
        concept_input = assemble_concept_input(
            self.specs, self.embedding_tables, source=GROUND_TRUTH, values=values
        )
        return ad.sigmoid(self._risk_logit(concept_input, embedding)).data

    def post_step(self) -> None:
        self.state = temperature_step(self.state)

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "encoder": self.encoder_config.to_json(),
            "bottleneck": self.bottleneck_config.to_json(),
            "tau_steps": self.state.steps,
        }


def eval_in_batches(model, batch: TokenBatch, batch_size: int = 256):
    """(risk probs, concept logit arrays or None, latent codes or None)."""
    probs, logit_parts, code_parts = [], [], []
    for lo in range(0, len(batch), batch_size):
        p, out = model.eval_outputs(batch.select(slice(lo, lo + batch_size)))
        probs.append(p)
        if out is not None:
            logit_parts.append(out.concept_logits)
            code_parts.append(out.latent_code)
    risk = np.concatenate(probs)
    if not logit_parts:
        return risk, None, None
    logits = [np.concatenate(parts) for parts in zip(*logit_parts)]
    return risk, logits, np.concatenate(code_parts)
