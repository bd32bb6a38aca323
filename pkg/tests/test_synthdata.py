"""Generator, encoding, splits, measurement bucketing, and file formats."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcbrisk import synthdata as sd
from pcbrisk.concepts import (
    ConceptSpec,
    derive_concepts,
    followup_category,
    frequency_category,
)
from pcbrisk.errors import ConfigError, DataError, UsageError
from pcbrisk.templates import af_hf_generator, f_hf_generator


def small_config(**overrides):
    base = af_hf_generator(num_patients=200, seed=7)
    return sd.GeneratorConfig(**{**base.__dict__, **overrides})


@pytest.fixture(scope="module")
def small_cohort():
    return sd.generate_cohort(small_config())


# ---------------------------------------------------------------------------
# bucketing


def test_frequency_categories():
    assert frequency_category(9.0) == 3  # "8-12/year"
    assert frequency_category(1.9) == 0
    assert frequency_category(2.0) == 1  # boundary goes up
    assert frequency_category(24.0) == 6
    assert frequency_category(500.0) == 6


def test_followup_categories():
    assert followup_category(2.5) == 2  # "2-3"
    assert followup_category(5.0) == 5  # boundary: 5 lands in "5-7"
    assert followup_category(0.0) == 0
    assert followup_category(10.0) == 7
    assert followup_category(30.0) == 7


def test_measurement_bucketing():
    assert sd.measurement_code(132, "systolic-bp") == "MEAS/SBP_130_135"
    assert sd.measurement_code(210, "systolic-bp") is None
    assert sd.measurement_code(15, "bmi") is None
    assert sd.measurement_code(80, "systolic-bp") == "MEAS/SBP_80_85"
    assert sd.measurement_code(200, "systolic-bp") == "MEAS/SBP_200_205"
    assert sd.measurement_code(49, "diastolic-bp") is None
    with pytest.raises(UsageError):
        sd.measurement_code(100, "heart-rate")
    with pytest.raises(UsageError):
        sd.measurement_code(float("nan"), "bmi")


def test_categorize_measurement_returns_vocab_id(small_cohort):
    vocab = small_cohort.vocab
    token = sd.categorize_measurement(132.0, "systolic-bp", vocab)
    assert vocab.code_of(token) == "MEAS/SBP_130_135"
    assert sd.categorize_measurement(300.0, "systolic-bp", vocab) is None


# ---------------------------------------------------------------------------
# vocabulary


def test_vocabulary_invariants(small_cohort):
    vocab = small_cohort.vocab
    assert vocab.entries[0].code == "PAD" and vocab.entries[sd.CLS_ID].code == "CLS"
    ids = [e.token_id for e in vocab.entries]
    assert ids == list(range(vocab.size))
    with pytest.raises(DataError):
        sd.CodeVocabulary(tuple([sd.VocabEntry(0, "X", "special"), sd.VocabEntry(1, "X", "special")]))


def test_vocabulary_file_round_trip(tmp_path, small_cohort):
    path = tmp_path / "vocab.tsv"
    small_cohort.vocab.save(path)
    loaded = sd.CodeVocabulary.load(path)
    assert loaded.entries == small_cohort.vocab.entries
    bad = tmp_path / "bad.tsv"
    bad.write_text("nonsense\n0\tPAD\n")
    with pytest.raises(DataError):
        sd.CodeVocabulary.load(bad)


# ---------------------------------------------------------------------------
# generator


def test_constant_risk_prevalence():
    combos = 8
    cfg = small_config(
        num_patients=10_000,
        num_strata=1,
        stratum_weights=(1.0,),
        combo_dists=(tuple([1 / combos] * combos),),
        risk_table=(tuple([0.5] * combos),),
    )
    ds = sd.generate_cohort(cfg)
    assert abs(ds.labels().mean() - 0.5) < 0.02


def test_oracle_risk_ratio_reads_table():
    cfg = small_config()
    risks = {c: cfg.oracle_risk(2, c) for c in [(0, 1, 0), (1, 1, 0)]}
    assert cfg.oracle_risk_ratio(2, 0, (0, 1, 0)) == pytest.approx(risks[(1, 1, 0)] / risks[(0, 1, 0)])
    # exposure ratio is planted stratum-wise: same base gives the same RR
    assert cfg.oracle_risk_ratio(2, 0, (0, 0, 1)) == pytest.approx(
        cfg.oracle_risk_ratio(2, 0, (0, 1, 0))
    )


def test_generator_deterministic_and_shard_independent():
    cfg = small_config(num_patients=60)
    a = sd.generate_cohort(cfg)
    b = sd.generate_cohort(cfg)
    c = sd.generate_cohort(cfg, shards=4)
    for x, y in ((a, b), (a, c)):
        assert all(
            r1.events == r2.events and r1.label == r2.label and r1.concepts == r2.concepts
            for r1, r2 in zip(x.records, y.records)
        )


def test_generator_markers_match_concepts(small_cohort):
    specs = small_cohort.specs
    for record in small_cohort.records:
        derived = derive_concepts(record, specs)
        assert derived == record.concepts


def test_generator_monte_carlo_risk_ratio():
    """Empirical within-cell RR converges to the risk-table ratio."""
    cfg = small_config(num_patients=50_000)
    ds = sd.generate_cohort(cfg)
    labels = ds.labels()
    concepts = ds.concept_matrix()
    strata = ds.strata()
    stratum = 2
    base = (0, 1, 0)
    exposed = (strata == stratum) & (concepts[:, 0] == 1) & (concepts[:, 1] == 1) & (concepts[:, 2] == 0)
    unexposed = (strata == stratum) & (concepts[:, 0] == 0) & (concepts[:, 1] == 1) & (concepts[:, 2] == 0)
    rr = labels[exposed].mean() / labels[unexposed].mean()
    oracle = cfg.oracle_risk_ratio(stratum, 0, base)
    assert abs(rr / oracle - 1.0) < 0.10


def test_generator_config_validation():
    with pytest.raises(ConfigError):
        small_config(stratum_weights=(0.5, 0.5, 0.5, 0.5))
    with pytest.raises(ConfigError):
        small_config(risk_table=tuple(tuple(1.5 for _ in row) for row in small_config().risk_table))
    with pytest.raises(ConfigError):
        small_config(num_patients=0)


def test_f_hf_generator_plants_categorical_concepts():
    cfg = f_hf_generator(num_patients=150, seed=3)
    ds = sd.generate_cohort(cfg)
    assert ds.specs[0].kind == "categorical" and ds.specs[0].num_categories == 7
    assert ds.specs[1].num_categories == 8
    concepts = ds.concept_matrix()
    assert concepts[:, 0].max() <= 6 and concepts[:, 1].max() <= 7
    for record in ds.records[:50]:
        assert derive_concepts(record, ds.specs) == record.concepts


def test_derive_concepts_needs_index_condition(small_cohort):
    spec = ConceptSpec(
        name="followup-years", kind="categorical", num_categories=8,
        derived_from="followup-years", index_code_set=frozenset({999_999}),
    )
    from pcbrisk.concepts import ConceptNotApplicable

    with pytest.raises(ConceptNotApplicable):
        derive_concepts(small_cohort.records[0], (spec,))


def test_derive_binary_absent_code(small_cohort):
    spec = ConceptSpec(name="never", code_set=frozenset({10_000}))
    assert derive_concepts(small_cohort.records[0], (spec,)) == (0,)


# ---------------------------------------------------------------------------
# encoding


def _record(events, concepts=(0, 0, 0)):
    return sd.PatientRecord(
        patient_id=1,
        events=tuple(sd.MedicalEvent(*e) for e in events),
        baseline_index=len(events),
        concepts=concepts,
        label=0,
        stratum=0,
    )


def test_encode_hand_traced_segments(small_cohort):
    vocab = small_cohort.vocab
    record = _record([(5, 50, 0), (6, 50, 0), (7, 51, 1)])
    seq = sd.encode_patient(record, vocab, max_len=8, min_visits=2)
    assert seq.tokens.tolist() == [sd.CLS_ID, 5, 6, 7, 0, 0, 0, 0]
    assert seq.segment_ids.tolist() == [0, 0, 0, 1, 0, 0, 0, 0]
    assert seq.attention_mask.tolist() == [1, 1, 1, 1, 0, 0, 0, 0]
    assert seq.age_ids.tolist() == [50, 50, 50, 51, 0, 0, 0, 0]
    assert seq.position_ids.tolist() == list(range(8))


def test_encode_exact_fit_no_padding(small_cohort):
    events = [(5, 40 + i, i) for i in range(7)]
    seq = sd.encode_patient(_record(events), small_cohort.vocab, max_len=8)
    assert seq.attention_mask.sum() == 8
    assert sd.decode_tokens(seq) == [5] * 7


def test_encode_truncates_front_keeping_recent(small_cohort):
    events = [(5 + (i % 3), min(40 + i // 50, 119), i) for i in range(2000)]
    seq = sd.encode_patient(_record(events), small_cohort.vocab, max_len=1220)
    assert len(seq.tokens) == 1220
    assert seq.attention_mask.sum() == 1220
    kept = sd.decode_tokens(seq)
    assert kept == [e[0] for e in events[-1219:]]


def test_encode_rejects_thin_history(small_cohort):
    with pytest.raises(DataError):
        sd.encode_patient(_record([(5, 50, 0), (6, 50, 0)]), small_cohort.vocab, max_len=8)


def test_encode_round_trip_on_cohort(small_cohort):
    for record in small_cohort.records[:40]:
        seq = sd.encode_patient(record, small_cohort.vocab, max_len=48)
        codes = [e.code for e in record.history][-47:]
        assert sd.decode_tokens(seq) == codes


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=3, max_value=40),
    st.integers(min_value=0, max_value=2**31 - 1),
    st.integers(min_value=8, max_value=64),
)
def test_token_sequence_invariants(n_events, seed, max_len):
    rng = np.random.default_rng(seed)
    visits = np.sort(rng.integers(0, max(3, n_events // 2), size=n_events))
    events = [(int(rng.integers(4, 40)), int(rng.integers(0, 119)), int(v)) for v in visits]
    record = _record(events)
    if len(set(visits)) < 3:
        return
    vocab, _specs = sd.build_vocabulary(af_hf_generator(10, 0))
    seq = sd.encode_patient(record, vocab, max_len=max_len)
    assert (
        len(seq.tokens) == len(seq.age_ids) == len(seq.segment_ids)
        == len(seq.position_ids) == len(seq.attention_mask) == max_len
    )
    assert set(np.unique(seq.segment_ids)) <= {0, 1}
    assert np.all(seq.tokens[seq.attention_mask == 0] == sd.PAD_ID)
    # segment ids alternate at visit boundaries among kept events
    kept = record.history[-(max_len - 1):]
    live_segments = seq.segment_ids[seq.attention_mask > 0][1:]
    changes = [i for i in range(1, len(kept)) if kept[i].visit != kept[i - 1].visit]
    flips = [i for i in range(1, len(kept)) if live_segments[i] != live_segments[i - 1]]
    assert flips == changes


# ---------------------------------------------------------------------------
# splits


def test_split_exact_sizes(small_cohort):
    cfg = small_config(num_patients=100)
    ds = sd.generate_cohort(cfg)
    train, tune, valid = sd.split_dataset(ds, (0.6, 0.1, 0.3), seed=4)
    assert (len(train), len(tune), len(valid)) == (60, 10, 30)


def test_split_rejects_degenerate_ratios(small_cohort):
    with pytest.raises(ConfigError):
        sd.split_dataset(small_cohort, (1.0, 0.0, 0.0), seed=0)
    with pytest.raises(ConfigError):
        sd.split_dataset(small_cohort, (0.5, 0.2, 0.2), seed=0)


@pytest.mark.parametrize("seed", [0, 1, 17, 991])
def test_split_partition_property(small_cohort, seed):
    train, tune, valid = sd.split_dataset(small_cohort, (0.6, 0.1, 0.3), seed=seed)
    ids = [r.patient_id for part in (train, tune, valid) for r in part.records]
    assert len(ids) == len(small_cohort)
    assert set(ids) == {r.patient_id for r in small_cohort.records}
    sizes = sorted((len(train), len(tune), len(valid)))
    exact = sorted((0.6 * len(ids), 0.1 * len(ids), 0.3 * len(ids)))
    assert all(abs(s - e) <= 1 for s, e in zip(sizes, exact))


def test_split_deterministic(small_cohort):
    a = sd.split_dataset(small_cohort, seed=9)
    b = sd.split_dataset(small_cohort, seed=9)
    assert [r.patient_id for r in a[0].records] == [r.patient_id for r in b[0].records]


# ---------------------------------------------------------------------------
# persistence


def test_dataset_file_round_trip(tmp_path, small_cohort):
    path = tmp_path / "cohort.jsonl"
    sd.save_dataset(small_cohort, path)
    loaded = sd.load_dataset(path, small_cohort.vocab)
    assert loaded.task == small_cohort.task
    assert loaded.specs == small_cohort.specs
    assert len(loaded) == len(small_cohort)
    for a, b in zip(loaded.records, small_cohort.records):
        assert a == b


def test_dataset_same_seed_byte_identical(tmp_path):
    cfg = small_config(num_patients=40)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    sd.save_dataset(sd.generate_cohort(cfg), p1)
    sd.save_dataset(sd.generate_cohort(cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_dataset_header_validation(tmp_path, small_cohort):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("#pcbrisk-dataset v99\n#meta {}\n")
    with pytest.raises(DataError):
        sd.load_dataset(bad, small_cohort.vocab)
