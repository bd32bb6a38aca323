"""Synthetic longitudinal cohorts with a planted stratum/concept/outcome
structure, plus the encoding that turns records into model-ready sequences.

The generator samples, per patient: a hidden stratum, a concept
combination from that stratum's distribution, and a Bernoulli outcome from
a risk table indexed by (stratum, combination). Event streams emit
stratum-signature codes, concept marker codes (emitted iff the concept is
positive, so ground truth is recoverable from the stream), and noise.
True counterfactual risk ratios are therefore available in closed form
from the risk table, which is what the acceptance suite checks against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .concepts import (
    BINARY,
    CATEGORICAL,
    FROM_CODES,
    FROM_FOLLOWUP_YEARS,
    FROM_VISIT_FREQUENCY,
    FOLLOWUP_EDGES,
    FREQUENCY_EDGES,
    ConceptSpec,
    all_combinations,
    combination_index,
    derive_concepts,
    frequency_category,
    followup_category,
    num_combinations,
)
from .errors import ConfigError, DataError, UsageError

PAD_ID, CLS_ID, UNK_ID, SEP_ID = 0, 1, 2, 3
SPECIAL_CODES = ("PAD", "CLS", "UNK", "SEP")

AF_HF_STYLE = "af-hf-style"
F_HF_STYLE = "f-hf-style"

DATASET_HEADER = "#pcbrisk-dataset v1"
VOCAB_HEADER = "#pcbrisk-vocab v1"

_CHANNEL_PREFIXES = {
    "DIAG": "diagnosis",
    "MED": "medication",
    "PROC": "procedure",
    "TEST": "test",
    "MEAS": "measurement-bucket",
    "LIFE": "lifestyle",
}

MEASUREMENT_RANGES = {
    "systolic-bp": (80.0, 200.0, 5.0, "SBP"),
    "diastolic-bp": (50.0, 140.0, 5.0, "DBP"),
    "bmi": (16.0, 50.0, 1.0, "BMI"),
}


class VocabEntry(NamedTuple):
    token_id: int
    code: str
    channel: str


class MedicalEvent(NamedTuple):
    code: int
    age: int
    visit: int


@dataclass
class CodeVocabulary:
    """Dense token-id <-> code-string mapping with channel tags."""

    entries: tuple[VocabEntry, ...]

    def __post_init__(self):
        ids = [e.token_id for e in self.entries]
        if ids != list(range(len(ids))):
            raise DataError("vocabulary ids must be dense 0..V-1 in order")
        codes = [e.code for e in self.entries]
        if len(set(codes)) != len(codes):
            raise DataError("vocabulary code strings must be unique")
        if not self.entries or self.entries[PAD_ID].code != "PAD":
            raise DataError("vocabulary must map id 0 to PAD")
        self._id_by_code = {e.code: e.token_id for e in self.entries}

    @property
    def size(self) -> int:
        return len(self.entries)

    def id_of(self, code: str) -> int:
        try:
            return self._id_by_code[code]
        except KeyError:
            raise DataError(f"unknown code {code!r}") from None

    def code_of(self, token_id: int) -> str:
        return self.entries[token_id].code

    def channel_of(self, token_id: int) -> str:
        return self.entries[token_id].channel

    def save(self, path) -> None:
        lines = [VOCAB_HEADER]
        lines += [f"{e.token_id}\t{e.code}" for e in self.entries]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "CodeVocabulary":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != VOCAB_HEADER:
            raise DataError(f"{path}: missing or unsupported vocabulary header")
        pairs = []
        for line in lines[1:]:
            if not line:
                continue
            token_id, code = line.split("\t")
            pairs.append((int(token_id), code))
        return cls.from_pairs(pairs)

    @classmethod
    def from_pairs(cls, pairs) -> "CodeVocabulary":
        return cls(
            tuple(VocabEntry(int(i), code, _channel_from_code(code)) for i, code in pairs)
        )


def _channel_from_code(code: str) -> str:
    prefix = code.split("/", 1)[0]
    if code in SPECIAL_CODES:
        return "special"
    if prefix in _CHANNEL_PREFIXES:
        return _CHANNEL_PREFIXES[prefix]
    return "diagnosis"


def measurement_code(value: float, kind: str) -> str | None:
    """Bucket a raw measurement into its code string, or None if out of range."""
    if kind not in MEASUREMENT_RANGES:
        raise UsageError(f"unknown measurement kind {kind!r}")
    if not math.isfinite(value):
        raise UsageError(f"measurement value must be finite, got {value}")
    lo, hi, step, tag = MEASUREMENT_RANGES[kind]
    if value < lo or value > hi:
        return None
    idx = int((value - lo) // step)
    low_edge = lo + idx * step
    return f"MEAS/{tag}_{low_edge:g}_{low_edge + step:g}"


def categorize_measurement(value: float, kind: str, vocab: CodeVocabulary) -> int | None:
    """Token id for a bucketed measurement; None when the value is excluded."""
    code = measurement_code(value, kind)
    return None if code is None else vocab.id_of(code)


@dataclass
class PatientRecord:
    patient_id: int
    events: tuple[MedicalEvent, ...]
    baseline_index: int
    concepts: tuple[int, ...]
    label: int
    stratum: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise DataError(f"patient {self.patient_id}: label must be 0/1")
        if not 0 <= self.baseline_index <= len(self.events):
            raise DataError(f"patient {self.patient_id}: baseline index out of range")
        visits = [e.visit for e in self.events]
        if any(b < a for a, b in zip(visits, visits[1:])):
            raise DataError(f"patient {self.patient_id}: visit indices must be non-decreasing")

    @property
    def history(self) -> tuple[MedicalEvent, ...]:
        return self.events[: self.baseline_index]


@dataclass
class Dataset:
    """A cohort plus the vocabulary and concept specs it was built against."""

    task: str
    records: list[PatientRecord]
    specs: tuple[ConceptSpec, ...]
    vocab: CodeVocabulary

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.float64)

    def concept_matrix(self) -> np.ndarray:
        return np.array([r.concepts for r in self.records], dtype=np.int64)

    def strata(self) -> np.ndarray:
        return np.array([r.stratum for r in self.records], dtype=np.int64)

    def by_id(self) -> dict[int, PatientRecord]:
        return {r.patient_id: r for r in self.records}

    def subset(self, indices) -> "Dataset":
        return Dataset(self.task, [self.records[i] for i in indices], self.specs, self.vocab)


# ---------------------------------------------------------------------------
# generator configuration


@dataclass(frozen=True)
class GeneratorConfig:
    """Planted-structure cohort parameters; the risk table is the oracle."""

    task: str = AF_HF_STYLE
    num_patients: int = 1000
    num_strata: int = 4
    stratum_weights: tuple[float, ...] = (0.25, 0.25, 0.25, 0.25)
    concept_names: tuple[str, ...] = ("af", "hypertension", "diabetes")
    combo_dists: tuple[tuple[float, ...], ...] = ()
    risk_table: tuple[tuple[float, ...], ...] = ()
    codes_per_concept: int = 2
    codes_per_stratum: int = 6
    factored_signatures: bool = False
    noise_codes: int = 24
    visits_min: int = 4
    visits_max: int = 10
    events_per_visit_min: int = 2
    events_per_visit_max: int = 5
    signature_rate: float = 0.6
    marker_visit_frac: float = 0.4
    measurement_rate: float = 0.1
    age_min: int = 40
    age_max: int = 70
    seed: int = 0

    def __post_init__(self):
        if self.task not in (AF_HF_STYLE, F_HF_STYLE):
            raise ConfigError(f"generator.task: unknown task {self.task!r}")
        if self.num_patients <= 0:
            raise ConfigError("generator.num_patients must be positive")
        if len(self.stratum_weights) != self.num_strata:
            raise ConfigError("generator.stratum_weights length must equal num_strata")
        _check_distribution("generator.stratum_weights", self.stratum_weights)
        specs = self.concept_specs()
        expected = num_combinations(specs)
        if len(self.combo_dists) != self.num_strata or len(self.risk_table) != self.num_strata:
            raise ConfigError("generator.combo_dists / risk_table need one row per stratum")
        for s, (dist, risks) in enumerate(zip(self.combo_dists, self.risk_table)):
            if len(dist) != expected or len(risks) != expected:
                raise ConfigError(
                    f"generator stratum {s}: need {expected} combination entries, "
                    f"got {len(dist)} probs / {len(risks)} risks"
                )
            _check_distribution(f"generator.combo_dists[{s}]", dist)
            if any(not 0.0 < r < 1.0 for r in risks):
                raise ConfigError(f"generator.risk_table[{s}]: risks must lie in (0, 1)")
        if self.visits_min < 1 or self.visits_max < self.visits_min:
            raise ConfigError("generator visit counts must satisfy 1 <= min <= max")
        if self.factored_signatures and self.num_strata & (self.num_strata - 1):
            raise ConfigError(
                "generator.factored_signatures needs a power-of-two number of strata"
            )

    def concept_specs(self) -> tuple[ConceptSpec, ...]:
        """Specs without code sets; `build_vocabulary` fills those in."""
        if self.task == AF_HF_STYLE:
            return tuple(ConceptSpec(name=n, kind=BINARY) for n in self.concept_names)
        return (
            ConceptSpec(
                name="visit-frequency",
                kind=CATEGORICAL,
                num_categories=len(FREQUENCY_EDGES) + 1,
                embed_dim=2,
                derived_from=FROM_VISIT_FREQUENCY,
            ),
            ConceptSpec(
                name="followup-years",
                kind=CATEGORICAL,
                num_categories=len(FOLLOWUP_EDGES) + 1,
                embed_dim=2,
                derived_from=FROM_FOLLOWUP_YEARS,
            ),
        )

    def oracle_risk(self, stratum: int, combo) -> float:
        """Ground-truth outcome probability for a stratum and full assignment."""
        specs = self.concept_specs()
        return self.risk_table[stratum][combination_index(specs, tuple(combo))]

    def oracle_risk_ratio(self, stratum: int, exposure_index: int, base_combo) -> float:
        """True RR of flipping one binary concept, everything else held at base."""
        exposed = list(base_combo)
        exposed[exposure_index] = 1
        unexposed = list(base_combo)
        unexposed[exposure_index] = 0
        return self.oracle_risk(stratum, exposed) / self.oracle_risk(stratum, unexposed)


def _check_distribution(name: str, values) -> None:
    if any(v < 0 for v in values):
        raise ConfigError(f"{name}: probabilities must be non-negative")
    total = float(sum(values))
    if abs(total - 1.0) > 1e-9:
        raise ConfigError(f"{name}: probabilities sum to {total!r}, expected 1")


def independent_combo_dist(per_concept_probs: Iterable[Iterable[float]]) -> tuple[float, ...]:
    """Joint distribution over combinations from independent per-concept ones."""
    tables = [tuple(p) for p in per_concept_probs]
    combos = list(np.ndindex(*[len(t) for t in tables]))
    return tuple(
        float(np.prod([t[v] for t, v in zip(tables, combo)])) for combo in combos
    )


# ---------------------------------------------------------------------------
# vocabulary assembly


def build_vocabulary(config: GeneratorConfig) -> tuple[CodeVocabulary, tuple[ConceptSpec, ...]]:
    """Deterministic vocabulary for a generator config, with concept code sets."""
    codes: list[tuple[str, str]] = [(c, "special") for c in SPECIAL_CODES]

    def push(code: str) -> int:
        codes.append((code, _channel_from_code(code)))
        return len(codes) - 1

    specs = list(config.concept_specs())
    concept_sets: dict[str, set[int]] = {s.name: set() for s in specs}
    index_set: set[int] = set()
    if config.task == AF_HF_STYLE:
        for spec in specs:
            for j in range(config.codes_per_concept):
                concept_sets[spec.name].add(push(f"DIAG/{spec.name.upper()}_MARK{j}"))
    else:
        index_set.add(push("DIAG/INDEX_CONDITION"))

    channels = ("DIAG", "MED", "PROC", "TEST")
    if config.factored_signatures:
        # one signature pool per (hidden axis, level); a stratum's signature
        # is the union of its axis-level pools
        for axis in range(_num_axes(config.num_strata)):
            for level in (0, 1):
                for j in range(config.codes_per_stratum):
                    push(f"{channels[j % len(channels)]}/A{axis}L{level}_SIG{j}")
    else:
        for s in range(config.num_strata):
            for j in range(config.codes_per_stratum):
                push(f"{channels[j % len(channels)]}/S{s}_SIG{j}")

    noise_ids = [
        push(f"{channels[j % len(channels)]}/NOISE{j}") for j in range(config.noise_codes)
    ]
    for life in ("LIFE/SMOKER", "LIFE/EX_SMOKER", "LIFE/DRINKER"):
        noise_ids.append(push(life))

    for kind, (lo, hi, step, _tag) in MEASUREMENT_RANGES.items():
        buckets = int((hi - lo) // step) + 1
        for b in range(buckets):
            push(measurement_code(lo + b * step, kind))

    vocab = CodeVocabulary(
        tuple(VocabEntry(i, code, channel) for i, (code, channel) in enumerate(codes))
    )
    filled = []
    for spec in specs:
        filled.append(
            replace(
                spec,
                code_set=frozenset(concept_sets[spec.name]),
                index_code_set=frozenset(index_set),
            )
        )
    return vocab, tuple(filled)


def _num_axes(num_strata: int) -> int:
    return max(1, num_strata.bit_length() - 1)


def _stratum_levels(stratum: int, num_axes: int) -> tuple[int, ...]:
    return tuple((stratum >> (num_axes - 1 - a)) & 1 for a in range(num_axes))


def _stratum_and_noise_pools(config, vocab):
    noise_pool = [
        e.token_id
        for e in vocab.entries
        if "/NOISE" in e.code or e.code.startswith("LIFE/")
    ]
    stratum_pools = []
    if config.factored_signatures:
        num_axes = _num_axes(config.num_strata)
        axis_pools = {
            (axis, level): [
                e.token_id for e in vocab.entries if f"/A{axis}L{level}_SIG" in e.code
            ]
            for axis in range(num_axes)
            for level in (0, 1)
        }
        for s in range(config.num_strata):
            pool = []
            for axis, level in enumerate(_stratum_levels(s, num_axes)):
                pool.extend(axis_pools[(axis, level)])
            stratum_pools.append(np.array(pool))
    else:
        stratum_pools = [
            np.array([e.token_id for e in vocab.entries if f"/S{s}_SIG" in e.code])
            for s in range(config.num_strata)
        ]
    return stratum_pools, np.array(noise_pool)


# ---------------------------------------------------------------------------
# cohort generation


def generate_cohort(config: GeneratorConfig, shards: int = 1) -> Dataset:
    """Sample the full cohort. Per-patient rng streams keyed by (seed, index)
    make the result independent of how generation is sharded."""
    vocab, specs = build_vocabulary(config)
    bounds = np.linspace(0, config.num_patients, shards + 1).astype(int)
    records: list[PatientRecord] = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        records.extend(generate_patients(config, vocab, specs, int(lo), int(hi)))
    return Dataset(config.task, records, specs, vocab)


def generate_patients(config, vocab, specs, lo: int, hi: int) -> list[PatientRecord]:
    stratum_pools, noise_pool = _stratum_and_noise_pools(config, vocab)
    combos = all_combinations(specs)
    stratum_weights = np.asarray(config.stratum_weights)
    combo_dists = [np.asarray(d) for d in config.combo_dists]
    out = []
    for idx in range(lo, hi):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, idx]))
        stratum = int(rng.choice(config.num_strata, p=stratum_weights))
        combo = combos[int(rng.choice(len(combos), p=combo_dists[stratum]))]
        label = int(rng.random() < config.risk_table[stratum][combination_index(specs, combo)])
        if config.task == AF_HF_STYLE:
            events = _emit_marker_stream(
                config, rng, stratum_pools[stratum], noise_pool, specs, combo, vocab
            )
        else:
            events = _emit_timeline_stream(
                config, rng, stratum_pools[stratum], noise_pool, specs, combo, vocab
            )
        record = PatientRecord(
            patient_id=idx,
            events=tuple(events),
            baseline_index=len(events),
            concepts=combo,
            label=label,
            stratum=stratum,
        )
        derived = derive_concepts(record, specs)
        if derived != combo:
            raise DataError(
                f"generator self-check failed for patient {idx}: "
                f"planted {combo}, derived {derived}"
            )
        out.append(record)
    return out


def _visit_body(config, rng, stratum_pool, noise_pool, vocab):
    n = int(rng.integers(config.events_per_visit_min, config.events_per_visit_max + 1))
    codes = []
    for _ in range(n):
        if rng.random() < config.signature_rate:
            codes.append(int(rng.choice(stratum_pool)))
        else:
            codes.append(int(rng.choice(noise_pool)))
    if rng.random() < config.measurement_rate:
        kind = ("systolic-bp", "diastolic-bp", "bmi")[int(rng.integers(3))]
        lo, hi, _step, _tag = MEASUREMENT_RANGES[kind]
        codes.append(categorize_measurement(float(rng.uniform(lo, hi)), kind, vocab))
    return codes


def _emit_marker_stream(config, rng, stratum_pool, noise_pool, specs, combo, vocab):
    """Binary-concept stream: markers appear iff the concept is positive."""
    num_visits = int(rng.integers(config.visits_min, config.visits_max + 1))
    visit_codes = [
        _visit_body(config, rng, stratum_pool, noise_pool, vocab) for _ in range(num_visits)
    ]
    for spec, value in zip(specs, combo):
        if value != 1:
            continue
        marker_ids = sorted(spec.code_set)
        n_marked = max(1, int(round(config.marker_visit_frac * num_visits)))
        for v in rng.choice(num_visits, size=n_marked, replace=False):
            code = marker_ids[int(rng.integers(len(marker_ids)))]
            slot = int(rng.integers(len(visit_codes[v]) + 1))
            visit_codes[v].insert(slot, code)
    age = int(rng.integers(config.age_min, config.age_max + 1))
    events = []
    for v, codes in enumerate(visit_codes):
        for code in codes:
            events.append(MedicalEvent(code, age, v))
        age += int(rng.integers(0, 2))
    return events


def _pick_count_in_bucket(rng, edges, category: int, denom: int) -> int:
    """An integer count whose rate count/denom's bucket equals `category`."""
    lo = 0.0 if category == 0 else edges[category - 1]
    hi = edges[category] if category < len(edges) else lo + 8.0
    low = max(1, math.ceil(lo * denom))
    high = max(low + 1, math.ceil(hi * denom))
    return int(rng.integers(low, high))


def _emit_timeline_stream(config, rng, stratum_pool, noise_pool, specs, combo, vocab):
    """Categorical-concept stream: frequency and follow-up are planted
    structurally via visit timing around an index-condition code."""
    freq_cat, followup_cat = combo
    fu_lo = 0 if followup_cat == 0 else int(FOLLOWUP_EDGES[followup_cat - 1])
    fu_hi = (
        int(FOLLOWUP_EDGES[followup_cat]) if followup_cat < len(FOLLOWUP_EDGES) else fu_lo + 4
    )
    followup = int(rng.integers(fu_lo, max(fu_lo + 1, fu_hi)))
    denom = max(followup, 1)
    num_post = _pick_count_in_bucket(rng, FREQUENCY_EDGES, freq_cat, denom)
    if frequency_category(num_post / denom) != freq_cat:
        raise DataError("internal: planted frequency bucket mismatch")

    index_spec = next(s for s in specs if s.index_code_set)
    index_code = sorted(index_spec.index_code_set)[0]
    index_age = int(rng.integers(max(config.age_min, 45), config.age_max - 14))

    events = []
    visit = 0
    num_pre = int(rng.integers(3, 6))
    for j in range(num_pre):
        for code in _visit_body(config, rng, stratum_pool, noise_pool, vocab):
            events.append(MedicalEvent(code, index_age - (num_pre - j), visit))
        visit += 1
    events.append(MedicalEvent(index_code, index_age, visit))
    for code in _visit_body(config, rng, stratum_pool, noise_pool, vocab):
        events.append(MedicalEvent(code, index_age, visit))
    visit += 1

    post_ages = np.sort(rng.integers(index_age, index_age + followup + 1, size=num_post))
    post_ages[-1] = index_age + followup  # anchor so follow-up derives exactly
    for age in post_ages:
        for code in _visit_body(config, rng, stratum_pool, noise_pool, vocab):
            events.append(MedicalEvent(code, int(age), visit))
        visit += 1
    return events


# ---------------------------------------------------------------------------
# sequence encoding


@dataclass
class TokenSequence:
    """One encoded patient: four id channels plus the attention mask."""

    tokens: np.ndarray
    age_ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    attention_mask: np.ndarray

    def __post_init__(self):
        lengths = {
            len(self.tokens),
            len(self.age_ids),
            len(self.segment_ids),
            len(self.position_ids),
            len(self.attention_mask),
        }
        if len(lengths) != 1:
            raise DataError(f"token sequence channels differ in length: {sorted(lengths)}")
        if not np.isin(self.segment_ids, (0, 1)).all():
            raise DataError("segment ids must be 0/1")
        if ((self.attention_mask == 0) & (self.tokens != PAD_ID)).any():
            raise DataError("masked positions must hold PAD tokens")


def encode_patient(
    record: PatientRecord,
    vocab: CodeVocabulary,
    max_len: int,
    min_visits: int = 3,
) -> TokenSequence:
    """CLS + most-recent pre-baseline events, padded/masked to max_len.

    Segment ids alternate 0/1 at visit boundaries (CLS adopts the first
    kept visit's segment); when history overflows, the oldest events are
    dropped so the window always ends at baseline.
    """
    history = record.history
    if len({e.visit for e in history}) < min_visits:
        raise DataError(
            f"patient {record.patient_id}: history below the {min_visits}-visit minimum"
        )
    kept = history[-(max_len - 1) :]
    for event in kept:
        if not 0 <= event.code < vocab.size:
            raise DataError(f"patient {record.patient_id}: code {event.code} outside vocabulary")

    visit_rank: dict[int, int] = {}
    for event in kept:
        visit_rank.setdefault(event.visit, len(visit_rank))
    tokens = [CLS_ID] + [e.code for e in kept]
    ages = [kept[0].age] + [e.age for e in kept]
    segments = [visit_rank[kept[0].visit] % 2] + [visit_rank[e.visit] % 2 for e in kept]

    pad = max_len - len(tokens)
    return TokenSequence(
        tokens=np.array(tokens + [PAD_ID] * pad, dtype=np.int64),
        age_ids=np.array(ages + [0] * pad, dtype=np.int64),
        segment_ids=np.array(segments + [0] * pad, dtype=np.int64),
        position_ids=np.arange(max_len, dtype=np.int64),
        attention_mask=np.array([1.0] * len(tokens) + [0.0] * pad, dtype=np.float64),
    )


def decode_tokens(seq: TokenSequence) -> list[int]:
    """Inverse of encode_patient up to truncation: event codes, no CLS/pads."""
    live = seq.tokens[seq.attention_mask > 0]
    return [int(c) for c in live[1:]]


@dataclass
class TokenBatch:
    """Column-stacked TokenSequences for vectorized model input."""

    tokens: np.ndarray
    age_ids: np.ndarray
    segment_ids: np.ndarray
    position_ids: np.ndarray
    attention_mask: np.ndarray

    def __len__(self) -> int:
        return self.tokens.shape[0]

    def select(self, rows) -> "TokenBatch":
        return TokenBatch(
            self.tokens[rows],
            self.age_ids[rows],
            self.segment_ids[rows],
            self.position_ids[rows],
            self.attention_mask[rows],
        )


def encode_dataset(dataset: Dataset, max_len: int, min_visits: int = 3) -> TokenBatch:
    seqs = [encode_patient(r, dataset.vocab, max_len, min_visits) for r in dataset.records]
    return TokenBatch(
        tokens=np.stack([s.tokens for s in seqs]),
        age_ids=np.stack([s.age_ids for s in seqs]),
        segment_ids=np.stack([s.segment_ids for s in seqs]),
        position_ids=np.stack([s.position_ids for s in seqs]),
        attention_mask=np.stack([s.attention_mask for s in seqs]),
    )


# ---------------------------------------------------------------------------
# splits


def split_dataset(dataset: Dataset, ratios=(0.6, 0.1, 0.3), seed: int = 0):
    """Random train/tune/valid partition with sizes within 1 of exact."""
    if len(ratios) != 3:
        raise ConfigError("split ratios must have three parts (train, tune, valid)")
    if any(not 0.0 < r < 1.0 for r in ratios):
        raise ConfigError(f"split ratios must each lie in (0, 1), got {tuple(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {sum(ratios)!r}")
    n = len(dataset)
    exact = [r * n for r in ratios]
    counts = [int(math.floor(x)) for x in exact]
    remainder = n - sum(counts)
    by_frac = sorted(range(3), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in range(remainder):
        counts[by_frac[i]] += 1
    perm = np.random.default_rng(seed).permutation(n)
    stops = np.cumsum(counts)
    return (
        dataset.subset(perm[: stops[0]]),
        dataset.subset(perm[stops[0] : stops[1]]),
        dataset.subset(perm[stops[1] :]),
    )


# ---------------------------------------------------------------------------
# persistence


def spec_to_json(spec: ConceptSpec) -> dict:
    return {
        "name": spec.name,
        "kind": spec.kind,
        "num_categories": spec.num_categories,
        "embed_dim": spec.embed_dim,
        "derived_from": spec.derived_from,
        "code_set": sorted(spec.code_set),
        "index_code_set": sorted(spec.index_code_set),
    }


def spec_from_json(obj: dict) -> ConceptSpec:
    return ConceptSpec(
        name=obj["name"],
        kind=obj["kind"],
        num_categories=obj["num_categories"],
        embed_dim=obj["embed_dim"],
        derived_from=obj["derived_from"],
        code_set=frozenset(obj["code_set"]),
        index_code_set=frozenset(obj["index_code_set"]),
    )


def save_dataset(dataset: Dataset, path) -> None:
    meta = {"task": dataset.task, "concepts": [spec_to_json(s) for s in dataset.specs]}
    lines = [DATASET_HEADER, "#meta " + json.dumps(meta, sort_keys=True)]
    for r in dataset.records:
        lines.append(
            json.dumps(
                {
                    "id": r.patient_id,
                    "stratum": r.stratum,
                    "label": r.label,
                    "concepts": list(r.concepts),
                    "baseline": r.baseline_index,
                    "events": [[e.code, e.age, e.visit] for e in r.events],
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path, vocab: CodeVocabulary) -> Dataset:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != DATASET_HEADER:
        raise DataError(f"{path}: missing or unsupported dataset header")
    if len(lines) < 2 or not lines[1].startswith("#meta "):
        raise DataError(f"{path}: missing dataset meta line")
    meta = json.loads(lines[1][len("#meta ") :])
    specs = tuple(spec_from_json(o) for o in meta["concepts"])
    records = []
    for line in lines[2:]:
        if not line:
            continue
        obj = json.loads(line)
        records.append(
            PatientRecord(
                patient_id=obj["id"],
                events=tuple(MedicalEvent(*e) for e in obj["events"]),
                baseline_index=obj["baseline"],
                concepts=tuple(obj["concepts"]),
                label=obj["label"],
                stratum=obj["stratum"],
            )
        )
    return Dataset(meta["task"], records, specs, vocab)
