"""Cluster-conditioned counterfactual reasoning over a frozen model:
latent-code cluster assignment, concept-combination (UpSet) tables,
prevalence-based plausibility verdicts, intervention risk estimates, risk
ratios, and the estimated-vs-observed sanity report.

Everything here is read-only over a frozen model snapshot and immutable
arrays; repeated queries return identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .concepts import BINARY, all_combinations
from .errors import UndefinedMetricError, UsageError
from .metrics import spearman
from .model import eval_in_batches

PLAUSIBLE = "plausible"
IMPLAUSIBLE = "implausible"
IMPOSSIBLE = "impossible"


# ---------------------------------------------------------------------------
# cluster codes: n bits <-> integer (big-endian) <-> "b1,b2,...,bn"


def code_to_int(bits) -> int:
    value = 0
    for b in bits:
        if b not in (0, 1):
            raise UsageError(f"cluster bits must be 0/1, got {tuple(bits)}")
        value = (value << 1) | int(b)
    return value


def int_to_code(value: int, n: int) -> tuple[int, ...]:
    if not 0 <= value < (1 << n):
        raise UsageError(f"cluster id {value} outside [0, 2^{n})")
    return tuple((value >> (n - 1 - i)) & 1 for i in range(n))


def render_code(bits) -> str:
    return ",".join(str(int(b)) for b in bits)


def parse_code(text: str, n: int) -> tuple[int, ...]:
    parts = text.split(",")
    if len(parts) != n:
        raise UsageError(f"cluster code {text!r} must have {n} comma-separated bits")
    return tuple(int(p) for p in parts)


# ---------------------------------------------------------------------------
# assignment and cluster profiles


def assign_clusters(model, batch, eval_batch_size: int = 512) -> np.ndarray:
    """Eval-mode quantizer code per patient, as integers in [0, 2^n)."""
    _risk, _logits, codes = eval_in_batches(model, batch, eval_batch_size)
    if codes is None:
        raise UsageError("cluster assignment needs a bottleneck model")
    weights = 1 << np.arange(codes.shape[1] - 1, -1, -1)
    return codes @ weights


@dataclass(frozen=True)
class ClusterInfo:
    code: int
    bits: tuple[int, ...]
    size: int
    share: float
    mean_risk: float
    major: bool


def select_major_clusters(sizes: dict[int, int], coverage: float = 0.95) -> list[int]:
    """Shortest prefix of clusters (by size desc, code asc) reaching coverage."""
    if not sizes:
        raise UsageError("no cluster assignments given")
    if not 0.0 < coverage <= 1.0:
        raise UsageError(f"coverage must lie in (0, 1], got {coverage}")
    total = sum(sizes.values())
    ordered = sorted(sizes, key=lambda c: (-sizes[c], c))
    chosen, covered = [], 0
    for code in ordered:
        chosen.append(code)
        covered += sizes[code]
        if covered >= coverage * total:
            break
    return chosen


def cluster_profiles(assignments, risks, n_latent: int, coverage: float = 0.95) -> list[ClusterInfo]:
    """Occupied clusters sorted largest-first, flagged if in the major set."""
    assignments = np.asarray(assignments)
    codes, counts = np.unique(assignments, return_counts=True)
    sizes = {int(c): int(k) for c, k in zip(codes, counts)}
    major = set(select_major_clusters(sizes, coverage))
    out = []
    for code in sorted(sizes, key=lambda c: (-sizes[c], c)):
        members = assignments == code
        out.append(
            ClusterInfo(
                code=code,
                bits=int_to_code(code, n_latent),
                size=sizes[code],
                share=sizes[code] / len(assignments),
                mean_risk=float(np.mean(np.asarray(risks)[members])),
                major=code in major,
            )
        )
    return out


# ---------------------------------------------------------------------------
# UpSet tables


@dataclass(frozen=True)
class UpsetCell:
    combo: tuple[int, ...]
    count: int
    estimated_risk: float


@dataclass
class UpsetTable:
    """Concept-combination counts among one cluster's members; zero cells
    are omitted, so the cell counts always sum to the cluster size."""

    code: int
    bits: tuple[int, ...]
    size: int
    cells: list[UpsetCell] = field(default_factory=list)

    def prevalence(self, combo) -> float:
        if self.size == 0:
            return 0.0
        combo = tuple(combo)
        for cell in self.cells:
            if cell.combo == combo:
                return cell.count / self.size
        return 0.0


def upset(model, cluster_code: int, member_concepts: np.ndarray) -> UpsetTable:
    """Count each full concept combination among the given members and attach
    the model's estimated risk for (this cluster, that combination).

    Cell risks go through the same single-assignment path as
    `estimate_risk`, so the numbers match counterfactual queries bit for
    bit (batched BLAS kernels may round the last ulp differently)."""
    bits = int_to_code(cluster_code, model.n_latent)
    member_concepts = np.asarray(member_concepts)
    if member_concepts.size == 0:
        return UpsetTable(code=cluster_code, bits=bits, size=0, cells=[])
    combos, counts = np.unique(member_concepts, axis=0, return_counts=True)
    order = np.lexsort(tuple(combos[:, k] for k in range(combos.shape[1] - 1, -1, -1)))
    order = order[np.argsort(-counts[order], kind="mergesort")]
    cells = [
        UpsetCell(
            combo=tuple(int(v) for v in combos[i]),
            count=int(counts[i]),
            estimated_risk=estimate_risk(model, bits, combos[i]),
        )
        for i in order
    ]
    return UpsetTable(code=cluster_code, bits=bits, size=int(counts.sum()), cells=cells)


# ---------------------------------------------------------------------------
# plausibility and interventions


@dataclass(frozen=True)
class PlausibilityRange:
    """Prevalence band inside which a counterfactual counts as plausible;
    prevalence exactly 0 or 1 is impossible regardless of the band."""

    lo: float = 0.05
    hi: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi <= 1.0:
            raise UsageError(f"plausibility range needs 0 <= lo < hi <= 1, got ({self.lo}, {self.hi})")


def judge_plausibility(table: UpsetTable, combo, prange: PlausibilityRange) -> str:
    p = table.prevalence(combo)
    if p == 0.0 or p == 1.0:
        return IMPOSSIBLE
    return PLAUSIBLE if prange.lo <= p <= prange.hi else IMPLAUSIBLE


def estimate_risk(model, cluster_bits, combo) -> float:
    """sigmoid(f(assembled concepts, codebook embedding of the cluster))."""
    return float(model.risk_for(np.array([cluster_bits]), np.array([tuple(combo)]))[0])


@dataclass(frozen=True)
class RiskRatioResult:
    ratio: float
    risk_exposed: float
    risk_unexposed: float


def risk_ratio(model, cluster_bits, exposure_index: int, base_combo, specs) -> RiskRatioResult:
    """Model RR of flipping one binary concept, others held at base."""
    if specs[exposure_index].kind != BINARY:
        raise UsageError(f"exposure concept {specs[exposure_index].name!r} must be binary")
    exposed = list(base_combo)
    exposed[exposure_index] = 1
    unexposed = list(base_combo)
    unexposed[exposure_index] = 0
    re_ = estimate_risk(model, cluster_bits, exposed)
    ru = estimate_risk(model, cluster_bits, unexposed)
    if ru == 0.0:  # sigmoid cannot emit 0, but guard the division anyway
        raise UndefinedMetricError("unexposed risk is zero; risk ratio undefined")
    return RiskRatioResult(ratio=re_ / ru, risk_exposed=re_, risk_unexposed=ru)


@dataclass(frozen=True)
class ObservedRR:
    """Label-prevalence ratio between exposure arms; ratio None = missing."""

    ratio: float | None
    exposed_total: int
    exposed_positive: int
    unexposed_total: int
    unexposed_positive: int


def observed_risk_ratio(
    labels, concepts, assignments, cluster_code: int, exposure_index: int, base_combo
) -> ObservedRR:
    labels = np.asarray(labels)
    concepts = np.asarray(concepts)
    assignments = np.asarray(assignments)
    others = [k for k in range(concepts.shape[1]) if k != exposure_index]
    member = assignments == cluster_code
    for k in others:
        member &= concepts[:, k] == base_combo[k]
    exposed = member & (concepts[:, exposure_index] == 1)
    unexposed = member & (concepts[:, exposure_index] == 0)
    ne, nu = int(exposed.sum()), int(unexposed.sum())
    pe = int(labels[exposed].sum())
    pu = int(labels[unexposed].sum())
    if ne == 0 or nu == 0 or pu == 0:
        return ObservedRR(None, ne, pe, nu, pu)
    return ObservedRR((pe / ne) / (pu / nu), ne, pe, nu, pu)


@dataclass(frozen=True)
class CounterfactualResult:
    cluster: int
    bits: tuple[int, ...]
    intervention: tuple[int, ...]
    estimated_risk: float
    reference: tuple[int, ...]
    reference_risk: float
    risk_ratio: float
    prevalence: float
    verdict: str


def all_unexposed_variant(specs, combo) -> tuple[int, ...]:
    """The reference assignment: every binary concept set to 0, categorical
    values kept."""
    return tuple(0 if s.kind == BINARY else v for s, v in zip(specs, combo))


def counterfactual_query(
    model,
    table: UpsetTable,
    intervention,
    specs,
    prange: PlausibilityRange,
    reference=None,
) -> CounterfactualResult:
    intervention = tuple(int(v) for v in intervention)
    if len(intervention) != len(specs):
        raise UsageError(f"assignment must cover all {len(specs)} concepts")
    for spec, v in zip(specs, intervention):
        if not 0 <= v < spec.arity:
            raise UsageError(f"concept {spec.name!r}: value {v} outside [0, {spec.arity})")
    if reference is None:
        reference = all_unexposed_variant(specs, intervention)
    else:
        reference = tuple(int(v) for v in reference)
        if len(reference) != len(specs):
            raise UsageError(f"reference must cover all {len(specs)} concepts")
    est = estimate_risk(model, table.bits, intervention)
    ref = estimate_risk(model, table.bits, reference)
    return CounterfactualResult(
        cluster=table.code,
        bits=table.bits,
        intervention=intervention,
        estimated_risk=est,
        reference=reference,
        reference_risk=ref,
        risk_ratio=est / ref,
        prevalence=table.prevalence(intervention),
        verdict=judge_plausibility(table, intervention, prange),
    )


# ---------------------------------------------------------------------------
# sanity report: estimated vs observed RR per major cluster


@dataclass(frozen=True)
class SanityRow:
    cluster: int
    bits: tuple[int, ...]
    base_combo: tuple[int, ...]
    estimated_rr: float
    observed: ObservedRR


@dataclass
class SanityReport:
    exposure: str
    rows: list[SanityRow]
    spearman: float | None
    notice: str | None


def _base_combo_for(model, table: UpsetTable, exposure_index: int, specs,
                    labels, concepts, assignments) -> tuple[int, ...] | None:
    """The most informative contrast: among non-exposure profiles present in
    both arms, pick the one maximizing the smaller arm's expected positives
    (arm size times the model's estimated risk)."""
    member = np.asarray(assignments) == table.code
    concepts = np.asarray(concepts)
    best = None
    seen = set()
    for cell in table.cells:
        profile = tuple(v for k, v in enumerate(cell.combo) if k != exposure_index)
        if profile in seen:
            continue
        seen.add(profile)
        rows = member.copy()
        for k, v in enumerate(cell.combo):
            if k != exposure_index:
                rows &= concepts[:, k] == v
        base = list(cell.combo)
        arm_scores = []
        for value in (0, 1):
            base[exposure_index] = value
            n_arm = int((rows & (concepts[:, exposure_index] == value)).sum())
            arm_scores.append(n_arm * estimate_risk(model, table.bits, base) if n_arm else 0.0)
        if min(arm_scores) == 0.0:
            continue
        base[exposure_index] = 0
        if best is None or min(arm_scores) > best[0]:
            best = (min(arm_scores), tuple(base))
    return None if best is None else best[1]


def sanity_report(
    model,
    labels,
    concepts,
    assignments,
    specs,
    exposure_index: int,
    upsets: dict[int, UpsetTable],
    major_clusters,
    min_rows_for_correlation: int = 3,
) -> SanityReport:
    rows = []
    for code in major_clusters:
        table = upsets[code]
        base = _base_combo_for(model, table, exposure_index, specs, labels, concepts, assignments)
        if base is None:
            continue
        est = risk_ratio(model, table.bits, exposure_index, base, specs)
        obs = observed_risk_ratio(labels, concepts, assignments, code, exposure_index, base)
        rows.append(SanityRow(code, table.bits, base, est.ratio, obs))
    usable = [(r.estimated_rr, r.observed.ratio) for r in rows if r.observed.ratio is not None]
    if len(usable) >= min_rows_for_correlation:
        rho = spearman([u[0] for u in usable], [u[1] for u in usable])
        notice = None
    else:
        rho = None
        notice = (
            f"rank correlation omitted: only {len(usable)} cluster(s) with both "
            f"estimated and observed risk ratios (need {min_rows_for_correlation})"
        )
    return SanityReport(exposure=specs[exposure_index].name, rows=rows, spearman=rho, notice=notice)
