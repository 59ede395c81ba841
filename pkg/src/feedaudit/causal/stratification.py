"""Equal-size propensity strata, standardized mean differences, and the
balance filter that decides which strata enter effect estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, EmptyArmError
from .propensity import CovariateMatrix

BIGRAM_PREFIX = "bigram:"
BIGRAM_GROUP = "title_bigrams"


@dataclass
class Stratum:
    index: int
    propensity_range: tuple[float, float]
    member_idx: np.ndarray        # row indices, ascending propensity
    treated_idx: np.ndarray
    control_idx: np.ndarray
    smd_per_covariate: dict[str, float] = field(default_factory=dict)
    retained: bool = True
    rejection_reason: str | None = None

    @property
    def n_treated(self) -> int:
        return len(self.treated_idx)

    @property
    def n_control(self) -> int:
        return len(self.control_idx)

    @property
    def n(self) -> int:
        return len(self.member_idx)

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "propensity_range": [float(v) for v in self.propensity_range],
            "n_treated": self.n_treated,
            "n_control": self.n_control,
            "max_smd": (max(self.smd_per_covariate.values())
                        if self.smd_per_covariate else None),
            "retained": self.retained,
            "rejection_reason": self.rejection_reason,
        }


def stratify(scores, treated, n_strata: int, ids=None) -> list[Stratum]:
    """Cut samples into n_strata score-contiguous groups of equal size (+-1).

    Samples are ordered by (score, id); ids give a stable tie-break so that
    input order never changes stratum membership.
    """
    scores = np.asarray(scores, dtype=float)
    treated = np.asarray(treated, dtype=bool)
    n = scores.size
    if n_strata < 1:
        raise DomainError("n_strata must be >= 1")
    if n_strata > n:
        raise DomainError(f"n_strata={n_strata} exceeds {n} samples")
    if ids is None:
        ids = np.arange(n)
    order = sorted(range(n), key=lambda i: (scores[i], ids[i]))
    order = np.asarray(order)

    base = n // n_strata
    remainder = n % n_strata
    strata = []
    start = 0
    for s in range(n_strata):
        size = base + (1 if s < remainder else 0)
        members = order[start:start + size]
        start += size
        member_scores = scores[members]
        strata.append(Stratum(
            index=s,
            propensity_range=(float(member_scores.min()),
                              float(member_scores.max())),
            member_idx=members,
            treated_idx=members[treated[members]],
            control_idx=members[~treated[members]],
        ))
    return strata


def smd(treated_values, control_values) -> float:
    """|mean difference| / sqrt((var_t + var_c) / 2), population variances.

    Both arms constant and equal gives 0; a zero pooled deviation with
    differing means returns +inf as a sentinel.
    """
    t = np.asarray(treated_values, dtype=float)
    c = np.asarray(control_values, dtype=float)
    if t.size == 0 or c.size == 0:
        raise EmptyArmError("<smd>", "treated" if t.size == 0 else "control")
    diff = abs(float(t.mean()) - float(c.mean()))
    pooled = math.sqrt((float(t.var()) + float(c.var())) / 2.0)
    if pooled == 0.0:
        return 0.0 if diff == 0.0 else math.inf
    return diff / pooled


def stratum_smds(stratum: Stratum, covariates: CovariateMatrix) -> dict[str, float]:
    """Per-covariate SMDs; bigram indicators collapse to their max."""
    out: dict[str, float] = {}
    bigram_max = None
    t_idx, c_idx = stratum.treated_idx, stratum.control_idx
    for col, name in enumerate(covariates.names):
        value = smd(covariates.X[t_idx, col], covariates.X[c_idx, col])
        if name.startswith(BIGRAM_PREFIX):
            if bigram_max is None or value > bigram_max:
                bigram_max = value
        else:
            out[name] = value
    if bigram_max is not None:
        out[BIGRAM_GROUP] = bigram_max
    return out


@dataclass
class StrataReport:
    """Table-style summary of the matching step (one treatment analysis)."""

    variable: str
    strength: str
    cutoff_label: str
    pre_filter: int
    post_filter: int
    per_stratum: int
    total_samples: int
    rejected: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "variable": self.variable,
            "strength": self.strength,
            "cutoff_label": self.cutoff_label,
            "pre_filter": self.pre_filter,
            "post_filter": self.post_filter,
            "per_stratum": self.per_stratum,
            "total_samples": self.total_samples,
            "rejected": self.rejected,
        }


def filter_strata(strata: list[Stratum], covariates: CovariateMatrix,
                  min_arm: int = 200, smd_max: float = 0.3) -> list[Stratum]:
    """Mark each stratum retained or rejected; returns the retained list.

    A stratum is retained iff both arms hold at least `min_arm` samples and
    every covariate SMD (bigrams aggregated by max) is at most `smd_max`.
    Rejection reasons are recorded on the stratum in place.
    """
    retained = []
    for stratum in strata:
        if min(stratum.n_treated, stratum.n_control) >= min_arm:
            stratum.smd_per_covariate = stratum_smds(stratum, covariates)
            worst = max(stratum.smd_per_covariate.values(), default=0.0)
            if worst <= smd_max:
                stratum.retained = True
                stratum.rejection_reason = None
                retained.append(stratum)
            else:
                stratum.retained = False
                name = max(stratum.smd_per_covariate,
                           key=stratum.smd_per_covariate.get)
                stratum.rejection_reason = (
                    f"smd: {name} = {worst:.3f} > {smd_max}")
        else:
            stratum.retained = False
            stratum.rejection_reason = (
                f"min_arm: treated={stratum.n_treated} "
                f"control={stratum.n_control} < {min_arm}")
    return retained


def build_report(spec_variable: str, strength: str, cutoff_label: str,
                 strata: list[Stratum]) -> StrataReport:
    retained = [s for s in strata if s.retained]
    total = sum(s.n for s in retained)
    return StrataReport(
        variable=spec_variable,
        strength=strength,
        cutoff_label=cutoff_label,
        pre_filter=len(strata),
        post_filter=len(retained),
        per_stratum=int(round(total / len(retained))) if retained else 0,
        total_samples=total,
        rejected=[{"index": s.index, "reason": s.rejection_reason}
                  for s in strata if not s.retained],
    )
