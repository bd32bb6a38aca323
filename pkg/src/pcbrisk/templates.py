"""Built-in task templates over synthetic data, desk-scale by default.

The binary-concept template plants a 4-stratum cohort where the exposure
concept multiplies risk by a stratum-specific ratio (larger in low-risk
strata), the other two concepts act on the odds, and stratum signatures
dominate the event stream. The categorical template plants visit-frequency
and follow-up concepts structurally in the visit timeline.
"""

from __future__ import annotations

import itertools

from .concepts import FOLLOWUP_EDGES, FREQUENCY_EDGES
from .errors import ConfigError
from .synthdata import (
    AF_HF_STYLE,
    F_HF_STYLE,
    GeneratorConfig,
    independent_combo_dist,
)

AF_HF_EXPOSURE = "af"

# Planted risk surface. The four strata form a 2x2 factorial: stratum id
# s = 2*a1 + a2, where the two hidden axes multiply the baseline odds and
# the exposure risk ratio, and each axis level emits its own signature
# codes. Two independent residual axes is what an n-bit binary latent is
# built to express; a single ordinal risk ladder invites every quantizer
# group to learn the same split (observed as 2^n-complement cluster pairs).
#
# Concept prevalences are identical across strata on purpose: concept bits
# then carry zero information about the hidden axes, so the quantizer
# gains nothing by duplicating concepts the classifier already receives.
_AF_BASE_ODDS = 0.008
_AF_AXIS_ODDS = ((1.0, 40.0), (1.0, 6.0))  # odds multiplier per (axis, level)
_AF_EXPOSURE_BASE_RR = 7.0
_AF_AXIS_RR = ((1.0, 0.30), (1.0, 0.5))  # exposure RR multiplier per (axis, level)
_AF_ODDS_MULT = (2.2, 0.22)  # hypertension, diabetes
_AF_STRATUM_WEIGHTS = (0.27, 0.26, 0.24, 0.23)
_AF_CONCEPT_PROBS = (
    # per stratum: P(af=1), P(hypertension=1), P(diabetes=1)
    (0.40, 0.45, 0.45),
    (0.40, 0.45, 0.45),
    (0.40, 0.45, 0.45),
    (0.40, 0.45, 0.45),
)


def stratum_axes(stratum: int) -> tuple[int, int]:
    return (stratum >> 1) & 1, stratum & 1


def af_hf_exposure_rr(stratum: int) -> float:
    a1, a2 = stratum_axes(stratum)
    return _AF_EXPOSURE_BASE_RR * _AF_AXIS_RR[0][a1] * _AF_AXIS_RR[1][a2]


def af_hf_risk_table() -> tuple[tuple[float, ...], ...]:
    combos = list(itertools.product(range(2), repeat=3))
    table = []
    for s in range(4):
        a1, a2 = stratum_axes(s)
        base_odds = _AF_BASE_ODDS * _AF_AXIS_ODDS[0][a1] * _AF_AXIS_ODDS[1][a2]
        row = []
        for c in combos:
            odds = base_odds * (_AF_ODDS_MULT[0] ** c[1]) * (_AF_ODDS_MULT[1] ** c[2])
            unexposed = odds / (1.0 + odds)
            row.append(unexposed * (af_hf_exposure_rr(s) if c[0] else 1.0))
        table.append(tuple(row))
    return tuple(table)


def af_hf_generator(num_patients: int = 10_000, seed: int = 0) -> GeneratorConfig:
    dists = tuple(
        independent_combo_dist([(1 - p, p) for p in probs]) for probs in _AF_CONCEPT_PROBS
    )
    return GeneratorConfig(
        task=AF_HF_STYLE,
        num_patients=num_patients,
        num_strata=4,
        stratum_weights=_AF_STRATUM_WEIGHTS,
        concept_names=("af", "hypertension", "diabetes"),
        combo_dists=dists,
        risk_table=af_hf_risk_table(),
        factored_signatures=True,
        visits_min=4,
        visits_max=10,
        events_per_visit_min=2,
        events_per_visit_max=4,
        seed=seed,
    )


_F_ODDS_BASE = (0.05, 0.13, 0.33, 0.85)
_F_STRATUM_WEIGHTS = (0.28, 0.26, 0.24, 0.22)
# U-shaped in frequency, elevated at CHD onset and long histories
_F_FREQ_MULT = (1.6, 1.2, 0.8, 0.9, 1.1, 1.3, 1.6)
_F_FOLLOWUP_MULT = (1.5, 1.2, 1.0, 0.9, 0.85, 0.9, 1.1, 1.3)
_F_FREQ_PROBS = (0.18, 0.22, 0.20, 0.15, 0.10, 0.08, 0.07)
_F_FOLLOWUP_PROBS = (0.14, 0.14, 0.13, 0.12, 0.11, 0.14, 0.12, 0.10)


def f_hf_risk_table() -> tuple[tuple[float, ...], ...]:
    table = []
    for s in range(4):
        row = []
        for f_cat in range(len(FREQUENCY_EDGES) + 1):
            for u_cat in range(len(FOLLOWUP_EDGES) + 1):
                odds = _F_ODDS_BASE[s] * _F_FREQ_MULT[f_cat] * _F_FOLLOWUP_MULT[u_cat]
                row.append(odds / (1.0 + odds))
        table.append(tuple(row))
    return tuple(table)


def f_hf_generator(num_patients: int = 10_000, seed: int = 0) -> GeneratorConfig:
    dists = tuple(
        independent_combo_dist([_F_FREQ_PROBS, _F_FOLLOWUP_PROBS]) for _ in range(4)
    )
    return GeneratorConfig(
        task=F_HF_STYLE,
        num_patients=num_patients,
        num_strata=4,
        stratum_weights=_F_STRATUM_WEIGHTS,
        concept_names=(),
        combo_dists=dists,
        risk_table=f_hf_risk_table(),
        visits_min=4,
        visits_max=10,
        events_per_visit_min=1,
        events_per_visit_max=3,
        seed=seed,
    )


GENERATORS = {AF_HF_STYLE: af_hf_generator, F_HF_STYLE: f_hf_generator}


def template_generator(task: str, num_patients: int = 10_000, seed: int = 0) -> GeneratorConfig:
    if task not in GENERATORS:
        raise ConfigError(f"unknown task template {task!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[task](num_patients=num_patients, seed=seed)
