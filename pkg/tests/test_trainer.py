"""Metric oracles, LR schedule boundary values, early stopping, checkpoint
format, and the overfit sanity run."""

import dataclasses
import math

import numpy as np
import pytest

from pcbrisk import autodiff as ad
from pcbrisk import metrics as mx
from pcbrisk.bottleneck import BottleneckConfig
from pcbrisk.concepts import ConceptSpec
from pcbrisk.encoder import EncoderConfig
from pcbrisk.errors import (
    ChecksumError,
    CheckpointError,
    ConfigError,
    TrainingDiverged,
    TruncatedFileError,
    UndefinedMetricError,
    UnsupportedVersionError,
    UsageError,
)
from pcbrisk.model import BaselineModel, PcbModel
from pcbrisk.synthdata import TokenBatch
from pcbrisk.trainer import (
    SplitTensors,
    TrainConfig,
    TrainingHistory,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    train,
    write_history,
)

BIN_SPECS = (
    ConceptSpec(name="af"),
    ConceptSpec(name="hypertension"),
    ConceptSpec(name="diabetes"),
)


# ---------------------------------------------------------------------------
# metric oracles


def oracle_auroc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    wins = sum(1.0 for p in pos for n in neg if p > n)
    ties = sum(1.0 for p in pos for n in neg if p == n)
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def oracle_auprc(scores, labels):
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    total_pos = int(labels.sum())
    thresholds = sorted(set(scores), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for theta in thresholds:
        kept = scores >= theta
        tp = int((labels[kept] == 1).sum())
        fp = int((labels[kept] == 0).sum())
        recall = tp / total_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def test_auroc_worked_example():
    assert mx.auroc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_auroc_perfect_and_ties():
    assert mx.auroc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert mx.auprc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert mx.auroc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5


def test_metrics_reject_single_class():
    with pytest.raises(UndefinedMetricError):
        mx.auroc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        mx.auprc([0.1, 0.2], [0, 0])


@pytest.mark.parametrize("seed", range(200))
def test_ranking_metrics_match_oracles_exactly(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 101))
    # ties are likely: quantized scores
    scores = np.round(rng.random(n), 2)
    labels = (rng.random(n) > rng.uniform(0.2, 0.8)).astype(int)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    assert mx.auroc(scores, labels) == oracle_auroc(scores, labels)
    assert mx.auprc(scores, labels) == oracle_auprc(scores, labels)


def test_f1_scores():
    assert mx.binary_f1([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.5)
    assert mx.binary_f1([0, 0], [0, 0]) == 0.0
    assert mx.macro_f1([0, 1, 2, 2], [0, 1, 2, 1], num_classes=3) == pytest.approx(
        np.mean([1.0, 2 / 3, 2 / 3])
    )


def test_spearman_known_values():
    assert mx.spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert mx.spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    with pytest.raises(UndefinedMetricError):
        mx.spearman([1, 2], [2, 1])
    with pytest.raises(UndefinedMetricError):
        mx.spearman([1, 1, 1], [1, 2, 3])


def test_spearman_matches_rank_pearson(rng):
    x = rng.normal(size=50)
    y = 0.5 * x + rng.normal(size=50)
    rx, ry = mx.midranks(x), mx.midranks(y)
    expected = np.corrcoef(rx, ry)[0, 1]
    assert mx.spearman(x, y) == pytest.approx(expected, rel=1e-12)


# ---------------------------------------------------------------------------
# learning-rate schedule


def cfg_with(**kw):
    base = dict(epochs=10, batch_size=4, base_lr=1e-3, patience=3, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_lr_boundary_values_exact():
    config = cfg_with(base_lr=2e-4)
    total = 1000
    assert lr_at(100, total, config) == 2e-4          # end of warmup
    assert lr_at(500, total, config) == 2e-4          # end of hold
    assert lr_at(750, total, config) == 1e-4          # cosine midpoint: base/2
    assert lr_at(1000, total, config) == 0.0          # schedule end


def test_lr_continuous_and_nonnegative():
    config = cfg_with()
    total = 997  # awkward total: boundaries off-integer
    values = [lr_at(s, total, config) for s in np.linspace(0, total, 4000)]
    assert min(values) >= 0.0
    diffs = np.abs(np.diff(values))
    assert diffs.max() < config.base_lr / 50


def test_lr_warmup_linear():
    config = cfg_with(base_lr=1e-2)
    assert lr_at(0, 1000, config) == 0.0
    assert lr_at(50, 1000, config) == pytest.approx(5e-3)


def test_lr_rejects_out_of_range():
    with pytest.raises(UsageError):
        lr_at(1001, 1000, cfg_with())


def test_train_config_validation_names_key():
    with pytest.raises(ConfigError) as err:
        cfg_with(warmup_frac=0.3, hold_frac=0.3, decay_frac=0.3)
    assert "warmup" in str(err.value)
    with pytest.raises(ConfigError):
        cfg_with(patience=0)
    with pytest.raises(ConfigError):
        cfg_with(base_lr=0.0)


# ---------------------------------------------------------------------------
# training loop semantics (scripted model)


class ScriptedModel:
    """Real one-parameter tape; tuning losses follow a script."""

    kind = "scripted"
    specs = ()

    def __init__(self, tune_losses):
        self.tape = ad.Tape()
        self.w = self.tape.parameter("w", np.array([1.0]))
        self._script = list(tune_losses)
        self._epoch = -1
        self.snapshots = []

    def training_loss(self, batch, concepts, labels, rng):
        return ad.mean(ad.mul(self.w, self.w))

    def evaluation_loss(self, batch, concepts, labels):
        self._epoch += 1
        self.snapshots.append(self.w.data.copy())
        return self._script[min(self._epoch, len(self._script) - 1)]

    def post_step(self):
        pass


def dummy_split(n=8):
    return SplitTensors(
        batch=TokenBatch(
            np.zeros((n, 4), dtype=int), np.zeros((n, 4), dtype=int),
            np.zeros((n, 4), dtype=int), np.tile(np.arange(4), (n, 1)), np.ones((n, 4)),
        ),
        concepts=np.zeros((n, 3), dtype=int),
        labels=np.zeros(n),
        patient_ids=np.arange(n),
    )


def test_early_stopping_patience_semantics():
    # strictly increasing tuning loss from epoch 1: stop after epoch 11
    model = ScriptedModel(tune_losses=[float(i) for i in range(1, 100)])
    config = cfg_with(epochs=50, patience=10, eval_batch_size=8)
    history = train(model, dummy_split(), dummy_split(), config)
    assert len(history.epochs) == 11
    assert history.stopped_early
    assert history.best_epoch == 1
    # parameters restored from the best epoch's snapshot
    assert np.array_equal(model.w.data, model.snapshots[0])


def test_early_stopping_returns_best_not_last():
    script = [5.0, 3.0, 4.0, 2.5, 6.0, 7.0, 8.0, 9.0]
    model = ScriptedModel(tune_losses=script)
    config = cfg_with(epochs=8, patience=4, eval_batch_size=8)
    history = train(model, dummy_split(), dummy_split(), config)
    assert history.best_epoch == 4
    assert history.best_tune_loss == 2.5
    assert all(e.tune_loss >= 2.5 for e in history.epochs)
    assert np.array_equal(model.w.data, model.snapshots[3])


class DivergingModel(ScriptedModel):
    def training_loss(self, batch, concepts, labels, rng):
        return ad.Tensor(float("nan"))


def test_divergence_aborts():
    with pytest.raises(TrainingDiverged):
        train(DivergingModel([1.0]), dummy_split(), dummy_split(), cfg_with())


# ---------------------------------------------------------------------------
# real-model training determinism and overfit sanity


def tiny_setup(seed=0, n=32):
    enc = EncoderConfig(
        vocab_size=12, hidden_dim=8, heads=2, intermediate_dim=16,
        extractor_layers=1, aggregator_layers=1, max_len=10, window=5, stride=5,
        dropout=0.1, attention_dropout=0.0, age_vocab_size=20,
    )
    rng = np.random.default_rng(seed)
    tokens = rng.integers(1, enc.vocab_size, size=(n, enc.max_len))
    batch = TokenBatch(
        tokens, rng.integers(0, 20, size=(n, enc.max_len)),
        rng.integers(0, 2, size=(n, enc.max_len)),
        np.tile(np.arange(enc.max_len), (n, 1)), np.ones((n, enc.max_len)),
    )
    concepts = rng.integers(0, 2, size=(n, 3))
    # learnable labels: make outcome depend on the first token's parity
    labels = (tokens[:, 0] % 2).astype(float)
    return enc, SplitTensors(batch, concepts, labels, np.arange(n))


def test_training_deterministic_same_seed():
    def run():
        enc, data = tiny_setup()
        model = PcbModel(enc, BIN_SPECS, BottleneckConfig(n_latent=3), seed=5)
        history = train(model, data, data, cfg_with(epochs=3, batch_size=8, eval_batch_size=16))
        return history, model.tape.state_dict()

    h1, s1 = run()
    h2, s2 = run()
    assert [(e.train_loss, e.tune_loss, e.lr, e.tau) for e in h1.epochs] == [
        (e.train_loss, e.tune_loss, e.lr, e.tau) for e in h2.epochs
    ]
    assert all(np.array_equal(s1[k], s2[k]) for k in s1)


@pytest.mark.slow
def test_overfit_32_samples_under_500_steps():
    enc, data = tiny_setup(seed=1)
    model = BaselineModel(enc, seed=2)
    config = cfg_with(epochs=125, batch_size=8, base_lr=3e-3, patience=125, eval_batch_size=32)
    # 125 epochs x 4 steps = 500 optimizer steps
    train(model, data, data, config)
    final = model.evaluation_loss(data.batch, data.concepts, data.labels)
    assert final < 0.05


def test_write_history_format(tmp_path):
    history = TrainingHistory(
        epochs=[type("E", (), {"epoch": 1, "train_loss": 0.5, "tune_loss": 0.4, "lr": 1e-3, "tau": 2.0})()],
    )
    path = tmp_path / "history.tsv"
    write_history(history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch\ttrain_loss\ttune_loss\tlr\ttau"
    assert lines[1].startswith("1\t0.5\t0.4\t0.001\t2.0")


# ---------------------------------------------------------------------------
# checkpoints


@pytest.fixture(scope="module")
def saved_model(tmp_path_factory):
    enc, data = tiny_setup()
    model = PcbModel(enc, BIN_SPECS, BottleneckConfig(n_latent=3), seed=4)
    model.state = dataclasses.replace(model.state, steps=77)
    from pcbrisk.templates import af_hf_generator
    from pcbrisk.synthdata import build_vocabulary

    vocab, _specs = build_vocabulary(af_hf_generator(10, 0))
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    save_checkpoint(model, vocab, {"task": "af-hf-style"}, path)
    return model, vocab, path, data


def test_checkpoint_round_trip_bit_exact(saved_model):
    model, vocab, path, data = saved_model
    bundle = load_checkpoint(path)
    assert bundle.model.kind == "pcb"
    assert bundle.model.state.steps == 77
    assert bundle.vocab.entries == vocab.entries
    assert bundle.meta == {"task": "af-hf-style"}
    r1, o1 = model.eval_outputs(data.batch)
    r2, o2 = bundle.model.eval_outputs(data.batch)
    assert np.array_equal(r1, r2)
    assert np.array_equal(o1.latent_code, o2.latent_code)
    assert np.array_equal(o1.latent_embedding, o2.latent_embedding)


def test_checkpoint_corrupted_byte_fails_checksum(saved_model, tmp_path):
    _model, _vocab, path, _data = saved_model
    raw = bytearray(path.read_bytes())
    raw[-5] ^= 0xFF
    bad = tmp_path / "corrupt.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        load_checkpoint(bad)


def test_checkpoint_version_mismatch(saved_model, tmp_path):
    _model, _vocab, path, _data = saved_model
    raw = bytearray(path.read_bytes())
    raw[8] = 99  # format version field
    bad = tmp_path / "newer.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(UnsupportedVersionError):
        load_checkpoint(bad)


def test_checkpoint_truncated(saved_model, tmp_path):
    _model, _vocab, path, _data = saved_model
    raw = path.read_bytes()
    bad = tmp_path / "short.ckpt"
    bad.write_bytes(raw[: len(raw) - 100])
    with pytest.raises(TruncatedFileError):
        load_checkpoint(bad)
    bad.write_bytes(raw[:20])
    with pytest.raises(TruncatedFileError):
        load_checkpoint(bad)


def test_checkpoint_bad_magic(saved_model, tmp_path):
    _model, _vocab, path, _data = saved_model
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_checkpoint_baseline_round_trip(tmp_path):
    enc, data = tiny_setup()
    model = BaselineModel(enc, seed=9)
    from pcbrisk.templates import af_hf_generator
    from pcbrisk.synthdata import build_vocabulary

    vocab, _ = build_vocabulary(af_hf_generator(10, 0))
    path = tmp_path / "baseline.ckpt"
    save_checkpoint(model, vocab, {}, path)
    bundle = load_checkpoint(path)
    r1, _ = model.eval_outputs(data.batch)
    r2, _ = bundle.model.eval_outputs(data.batch)
    assert np.array_equal(r1, r2)
