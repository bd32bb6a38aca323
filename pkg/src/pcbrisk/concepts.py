"""Concept definitions and the rules that derive them from a patient record.

A concept is either binary (present iff any code from its code set occurs
before baseline) or categorical (a bucketed quantity such as visit
frequency per year, or years elapsed since an index condition). All
buckets are left-closed/right-open, so a value sitting exactly on a
boundary belongs to the higher bucket.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, UsageError

BINARY = "binary"
CATEGORICAL = "categorical"

# derivation rules
FROM_CODES = "codes"
FROM_VISIT_FREQUENCY = "visit-frequency"
FROM_FOLLOWUP_YEARS = "followup-years"

# upper bucket edges; the last bucket is open-ended
FREQUENCY_EDGES = (2.0, 4.0, 8.0, 12.0, 16.0, 24.0)
FREQUENCY_LABELS = (
    "<=2/year",
    "2-4/year",
    "4-8/year",
    "8-12/year",
    "12-16/year",
    "16-24/year",
    ">24/year",
)
FOLLOWUP_EDGES = (1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 10.0)
FOLLOWUP_LABELS = ("0-1", "1-2", "2-3", "3-4", "4-5", "5-7", "7-10", ">10")


class ConceptNotApplicable(DataError):
    """The record lacks the index condition a derived concept requires."""


@dataclass(frozen=True)
class ConceptSpec:
    """One human-defined concept: its arity, embedding width, and derivation."""

    name: str
    kind: str = BINARY
    num_categories: int = 2
    embed_dim: int = 2
    derived_from: str = FROM_CODES
    code_set: frozenset = frozenset()
    index_code_set: frozenset = frozenset()

    def __post_init__(self):
        if self.kind not in (BINARY, CATEGORICAL):
            raise UsageError(f"concept {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL and self.num_categories < 2:
            raise UsageError(f"concept {self.name!r}: categorical needs >= 2 categories")
        if self.derived_from not in (FROM_CODES, FROM_VISIT_FREQUENCY, FROM_FOLLOWUP_YEARS):
            raise UsageError(f"concept {self.name!r}: unknown derivation {self.derived_from!r}")

    @property
    def arity(self) -> int:
        return 2 if self.kind == BINARY else self.num_categories

    @property
    def input_width(self) -> int:
        """Width this concept occupies in the risk classifier's input."""
        return 1 if self.kind == BINARY else self.embed_dim

    @property
    def num_logits(self) -> int:
        return 1 if self.kind == BINARY else self.num_categories


def frequency_category(rate_per_year: float) -> int:
    """Bucket an average visits-per-year rate into one of 7 categories."""
    return int(np.searchsorted(FREQUENCY_EDGES, rate_per_year, side="right"))


def followup_category(years: float) -> int:
    """Bucket years since the index condition into one of 8 categories."""
    return int(np.searchsorted(FOLLOWUP_EDGES, years, side="right"))


def _index_event(history, spec: ConceptSpec):
    for event in history:
        if event.code in spec.index_code_set:
            return event
    raise ConceptNotApplicable(
        f"concept {spec.name!r}: no index-condition code found before baseline"
    )


def derive_concepts(record, specs) -> tuple[int, ...]:
    """Read ground-truth concept values off a record's pre-baseline history."""
    history = record.events[: record.baseline_index]
    if not history:
        raise DataError(f"patient {record.patient_id}: empty pre-baseline history")
    values = []
    for spec in specs:
        if spec.derived_from == FROM_CODES:
            hit = any(event.code in spec.code_set for event in history)
            values.append(int(hit))
            continue
        index_event = _index_event(history, spec)
        followup = history[-1].age - index_event.age
        if spec.derived_from == FROM_FOLLOWUP_YEARS:
            values.append(followup_category(followup))
        else:
            visits_after = {e.visit for e in history if e.visit > index_event.visit}
            rate = len(visits_after) / max(followup, 1.0)
            values.append(frequency_category(rate))
    return tuple(values)


def all_combinations(specs) -> list[tuple[int, ...]]:
    """Every full concept-value assignment, in row-major order."""
    return list(itertools.product(*(range(s.arity) for s in specs)))


def combination_index(specs, combo) -> int:
    arities = [s.arity for s in specs]
    if len(combo) != len(arities):
        raise UsageError(f"combination {combo} does not match {len(arities)} concepts")
    idx = 0
    for value, arity in zip(combo, arities):
        if not 0 <= value < arity:
            raise UsageError(f"concept value {value} out of range [0, {arity})")
        idx = idx * arity + value
    return idx


def num_combinations(specs) -> int:
    n = 1
    for s in specs:
        n *= s.arity
    return n
