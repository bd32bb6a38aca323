"""Hierarchical sequence encoder: summed channel embeddings, a sliding-window
transformer that extracts one vector per window, and a second transformer
that aggregates window vectors into a single patient representation.

All blocks are pre-norm. Masked positions contribute exactly zero attention
weight (additive -1e9 bias underflows to 0 after softmax), so edits confined
to padding never change any output bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, DataError
from .synthdata import TokenBatch

MASK_BIAS = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 32
    heads: int = 4
    intermediate_dim: int = 64
    extractor_layers: int = 2
    aggregator_layers: int = 2
    dropout: float = 0.1
    attention_dropout: float = 0.1
    max_len: int = 64
    window: int = 16
    stride: int = 8
    age_vocab_size: int = 120

    def __post_init__(self):
        if self.hidden_dim % self.heads != 0:
            raise ConfigError(
                f"encoder.hidden_dim {self.hidden_dim} not divisible by heads {self.heads}"
            )
        if self.window > self.max_len:
            raise ConfigError(f"encoder.window {self.window} exceeds max_len {self.max_len}")
        if not 1 <= self.stride <= self.window:
            raise ConfigError(f"encoder.stride must satisfy 1 <= stride <= window")
        if self.vocab_size < 1 or self.max_len < 2:
            raise ConfigError("encoder needs vocab_size >= 1 and max_len >= 2")
        for key in ("dropout", "attention_dropout"):
            if not 0.0 <= getattr(self, key) < 1.0:
                raise ConfigError(f"encoder.{key} must lie in [0, 1)")

    @property
    def num_segments(self) -> int:
        """Window count; a final partial window is padded, not dropped."""
        return math.ceil((self.max_len - self.window) / self.stride) + 1

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def window_index(config: EncoderConfig) -> tuple[np.ndarray, np.ndarray]:
    """(positions[S, W] clipped into range, in_range[S, W] 0/1 overhang mask)."""
    starts = np.arange(config.num_segments) * config.stride
    pos = starts[:, None] + np.arange(config.window)[None, :]
    in_range = (pos < config.max_len).astype(np.float64)
    return np.minimum(pos, config.max_len - 1), in_range


def _init(rng, shape, scale=0.02):
    return rng.normal(0.0, scale, size=shape)


class TransformerStack:
    """A pre-norm self-attention stack ending in a final layer norm."""

    def __init__(self, tape, rng, prefix, layers, hidden, heads, intermediate):
        self.heads = heads
        self.hidden = hidden
        self.head_dim = hidden // heads
        self.layers = []
        for i in range(layers):
            p = f"{prefix}.layer{i}"
            self.layers.append(
                {
                    "ln1_g": tape.parameter(f"{p}.ln1_g", np.ones(hidden)),
                    "ln1_b": tape.parameter(f"{p}.ln1_b", np.zeros(hidden)),
                    "wq": tape.parameter(f"{p}.wq", _init(rng, (hidden, hidden))),
                    "bq": tape.parameter(f"{p}.bq", np.zeros(hidden)),
                    "wk": tape.parameter(f"{p}.wk", _init(rng, (hidden, hidden))),
                    "bk": tape.parameter(f"{p}.bk", np.zeros(hidden)),
                    "wv": tape.parameter(f"{p}.wv", _init(rng, (hidden, hidden))),
                    "bv": tape.parameter(f"{p}.bv", np.zeros(hidden)),
                    "wo": tape.parameter(f"{p}.wo", _init(rng, (hidden, hidden))),
                    "bo": tape.parameter(f"{p}.bo", np.zeros(hidden)),
                    "ln2_g": tape.parameter(f"{p}.ln2_g", np.ones(hidden)),
                    "ln2_b": tape.parameter(f"{p}.ln2_b", np.zeros(hidden)),
                    "w1": tape.parameter(f"{p}.w1", _init(rng, (hidden, intermediate))),
                    "b1": tape.parameter(f"{p}.b1", np.zeros(intermediate)),
                    "w2": tape.parameter(f"{p}.w2", _init(rng, (intermediate, hidden))),
                    "b2": tape.parameter(f"{p}.b2", np.zeros(hidden)),
                }
            )
        self.final_g = tape.parameter(f"{prefix}.final_g", np.ones(hidden))
        self.final_b = tape.parameter(f"{prefix}.final_b", np.zeros(hidden))

    def _heads_split(self, t: Tensor, n: int, length: int) -> Tensor:
        t = ad.reshape(t, (n, length, self.heads, self.head_dim))
        return ad.transpose(t, (0, 2, 1, 3))

    def __call__(self, x: Tensor, key_mask: np.ndarray, *, train, rng, dropout, attn_dropout):
        """x: [N, T, H]; key_mask: [N, T] with 1 = attendable."""
        n, length, _ = x.shape
        bias = Tensor(MASK_BIAS * (1.0 - key_mask)[:, None, None, :])
        scale = Tensor(1.0 / math.sqrt(self.head_dim))
        for p in self.layers:
            h = ad.layer_norm(x, p["ln1_g"], p["ln1_b"])
            q = self._heads_split(ad.linear(h, p["wq"], p["bq"]), n, length)
            k = self._heads_split(ad.linear(h, p["wk"], p["bk"]), n, length)
            v = self._heads_split(ad.linear(h, p["wv"], p["bv"]), n, length)
            scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * scale + bias
            probs = ad.dropout(ad.softmax(scores), attn_dropout, train, rng)
            ctx = ad.transpose(ad.matmul(probs, v), (0, 2, 1, 3))
            ctx = ad.reshape(ctx, (n, length, self.hidden))
            ctx = ad.dropout(ad.linear(ctx, p["wo"], p["bo"]), dropout, train, rng)
            x = x + ctx
            h2 = ad.layer_norm(x, p["ln2_g"], p["ln2_b"])
            ff = ad.linear(ad.relu(ad.linear(h2, p["w1"], p["b1"])), p["w2"], p["b2"])
            x = x + ad.dropout(ff, dropout, train, rng)
        return ad.layer_norm(x, self.final_g, self.final_b)


class HiEncoder:
    """Maps a TokenBatch to one hidden vector per patient."""

    def __init__(self, config: EncoderConfig, tape, rng, prefix="encoder"):
        self.config = config
        h = config.hidden_dim
        self.tok_emb = tape.parameter(f"{prefix}.tok_emb", _init(rng, (config.vocab_size, h)))
        self.age_emb = tape.parameter(f"{prefix}.age_emb", _init(rng, (config.age_vocab_size, h)))
        self.seg_emb = tape.parameter(f"{prefix}.seg_emb", _init(rng, (2, h)))
        self.pos_emb = tape.parameter(f"{prefix}.pos_emb", _init(rng, (config.max_len, h)))
        self.extractor = TransformerStack(
            tape, rng, f"{prefix}.extract", config.extractor_layers, h, config.heads,
            config.intermediate_dim,
        )
        self.segment_index_emb = tape.parameter(
            f"{prefix}.segment_index_emb", _init(rng, (config.num_segments, h))
        )
        self.aggregator = TransformerStack(
            tape, rng, f"{prefix}.aggregate", config.aggregator_layers, h, config.heads,
            config.intermediate_dim,
        )
        self._window_pos, self._window_in_range = window_index(config)

    def embed(self, batch: TokenBatch) -> Tensor:
        """Sum of token, age, segment, and position embeddings, [B, L, H]."""
        cfg = self.config
        if batch.tokens.max(initial=0) >= cfg.vocab_size or batch.tokens.min(initial=0) < 0:
            raise DataError(f"token id outside vocabulary of size {cfg.vocab_size}")
        if batch.age_ids.max(initial=0) >= cfg.age_vocab_size or batch.age_ids.min(initial=0) < 0:
            raise DataError(f"age id outside embedding range [0, {cfg.age_vocab_size})")
        return (
            ad.embedding_lookup(self.tok_emb, batch.tokens)
            + ad.embedding_lookup(self.age_emb, batch.age_ids)
            + ad.embedding_lookup(self.seg_emb, batch.segment_ids)
            + ad.embedding_lookup(self.pos_emb, batch.position_ids)
        )

    def slide_windows(self, embedded: Tensor, mask: np.ndarray):
        """Gather [B, L, H] into per-window [B*S, W, H] plus window masks."""
        cfg = self.config
        b = embedded.shape[0]
        s, w = self._window_pos.shape
        gathered = ad.take(embedded, self._window_pos.reshape(-1), axis=1)
        segments = ad.reshape(gathered, (b * s, w, cfg.hidden_dim))
        window_mask = mask[:, self._window_pos.reshape(-1)].reshape(b, s, w)
        window_mask = window_mask * self._window_in_range[None, :, :]
        return segments, window_mask.reshape(b * s, w)

    def extract_segments(self, segments: Tensor, window_mask: np.ndarray, *, train, rng):
        """Row 0 of the extractor stack per window; fully-masked windows
        come back as exact zero vectors (their active flag is 0)."""
        cfg = self.config
        out = self.extractor(
            segments, window_mask, train=train, rng=rng,
            dropout=cfg.dropout, attn_dropout=cfg.attention_dropout,
        )
        first = out[:, 0, :]
        active = window_mask.max(axis=1)
        return first * Tensor(active[:, None]), active

    def aggregate(self, segment_vectors: Tensor, active: np.ndarray, *, train, rng):
        """Attend over window vectors (plus window-index embeddings); the
        pooled representation is position 0 of the last layer."""
        cfg = self.config
        b = active.shape[0]
        if not (active.max(axis=1) > 0).all():
            raise DataError("every patient needs at least one active window")
        x = segment_vectors + ad.reshape(
            self.segment_index_emb, (1, cfg.num_segments, cfg.hidden_dim)
        )
        out = self.aggregator(
            x, active, train=train, rng=rng,
            dropout=cfg.dropout, attn_dropout=cfg.attention_dropout,
        )
        return out[:, 0, :]

    def __call__(self, batch: TokenBatch, *, train=False, rng=None) -> Tensor:
        cfg = self.config
        b = len(batch)
        embedded = self.embed(batch)
        segments, window_mask = self.slide_windows(embedded, batch.attention_mask)
        vectors, active = self.extract_segments(segments, window_mask, train=train, rng=rng)
        vectors = ad.reshape(vectors, (b, cfg.num_segments, cfg.hidden_dim))
        return self.aggregate(vectors, active.reshape(b, cfg.num_segments), train=train, rng=rng)


class LinearRiskHead:
    """The black-box baseline's output layer: one logit per patient."""

    def __init__(self, tape, rng, hidden_dim, prefix="head"):
        self.w = tape.parameter(f"{prefix}.w", _init(rng, (hidden_dim, 1)))
        self.b = tape.parameter(f"{prefix}.b", np.zeros(1))

    def __call__(self, representation: Tensor) -> Tensor:
        logits = ad.linear(representation, self.w, self.b)
        return ad.reshape(logits, (representation.shape[0],))
