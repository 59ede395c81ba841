"""End-to-end audit: treatment labeling -> propensity -> strata -> pooled
hierarchical effect, with the strata report attached to every result.

Snapshot treatments (recent commenting volume, recent undesired proportion)
estimate effects on next-snapshot outcomes: membership in the top 10/25/50
and movement direction. The rank-movement treatment operates on stationary
intervals and estimates effects on commenting rates and on the undesired
proportion, with interval duration as exposure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bayes import (
    HierarchicalFit,
    fit_hier_logistic,
    fit_hier_multinomial,
    fit_hier_negbin_proportion,
    fit_hier_negbin_rate,
)
from ..bayes.summary import DEFAULT_ROPE, PosteriorSummary
from ..errors import ConfigError, InsufficientStrataError
from ..features import FeatureRow, OutcomeLabels, StationaryInterval
from .propensity import AdaBoostPropensity, build_covariates
from .stratification import Stratum, build_report, filter_strata, stratify
from .treatments import standard_treatment, define_treatment

SNAPSHOT_OUTCOMES = ("top10", "top25", "top50", "move")
INTERVAL_OUTCOMES = ("rate", "und-rate", "und-prop")
OUTCOME_KINDS = SNAPSHOT_OUTCOMES + INTERVAL_OUTCOMES


@dataclass
class AuditConfig:
    treatment: str = "tc-w"
    outcome: str = "top10"
    n_strata: int | None = None       # default: 200 snapshot / 100 interval
    min_arm: int = 200
    smd_max: float = 0.3
    n_bigrams: int = 200
    propensity_rounds: int = 100
    rope_bounds: tuple[float, float] = DEFAULT_ROPE
    n_chains: int = 4
    n_iter: int = 2000
    warmup: int = 1000
    seed: int = 0
    threads: int = 1
    tr_strong_rule: str = "quartile"

    def __post_init__(self):
        if self.outcome not in OUTCOME_KINDS:
            raise ConfigError(f"unknown outcome {self.outcome!r}")

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment, "outcome": self.outcome,
            "n_strata": self.n_strata, "min_arm": self.min_arm,
            "smd_max": self.smd_max, "n_bigrams": self.n_bigrams,
            "propensity_rounds": self.propensity_rounds,
            "rope_bounds": list(self.rope_bounds), "n_chains": self.n_chains,
            "n_iter": self.n_iter, "warmup": self.warmup, "seed": self.seed,
            "tr_strong_rule": self.tr_strong_rule,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        d = dict(d)
        if "rope_bounds" in d:
            d["rope_bounds"] = tuple(d["rope_bounds"])
        d.pop("threads", None)
        return cls(**d)


@dataclass
class AuditResult:
    treatment: str
    outcome: str
    summaries: dict[str, PosteriorSummary]
    report: dict
    cutoffs: dict
    n_units: int
    n_strata_used: int
    warnings: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "treatment": self.treatment,
            "outcome": self.outcome,
            "summaries": {k: v.to_dict() for k, v in self.summaries.items()},
            "report": self.report,
            "cutoffs": self.cutoffs,
            "n_units": self.n_units,
            "n_strata_used": self.n_strata_used,
            "warnings": self.warnings,
            "config": self.config,
        }


def estimate_effect(retained: list[Stratum], treated: np.ndarray,
                    outcome_kind: str, payload: dict,
                    rope_bounds=DEFAULT_ROPE, n_chains: int = 4,
                    n_iter: int = 2000, warmup: int = 1000, seed: int = 0,
                    threads: int = 1) -> HierarchicalFit:
    """Dispatch retained strata to the matching hierarchical family.

    `payload` carries unit-aligned outcome arrays: `y` plus `exposure`
    (rate outcomes) or `totals` (proportion outcome).
    """
    if len(retained) < 2:
        raise InsufficientStrataError(
            f"need at least 2 retained strata, have {len(retained)}")
    n_units = treated.shape[0]
    stratum_of = np.full(n_units, -1, dtype=int)
    for pos, stratum in enumerate(retained):
        stratum_of[stratum.member_idx] = pos
    sel = stratum_of >= 0
    strat = stratum_of[sel]
    t = np.asarray(treated, dtype=bool)[sel]
    kw = dict(n_chains=n_chains, n_iter=n_iter, warmup=warmup, seed=seed,
              rope_bounds=rope_bounds, threads=threads)

    if outcome_kind in ("top10", "top25", "top50"):
        return fit_hier_logistic(payload["y"][sel], t, strat, **kw)
    if outcome_kind == "move":
        return fit_hier_multinomial(payload["y"][sel], t, strat, **kw)
    if outcome_kind in ("rate", "und-rate"):
        return fit_hier_negbin_rate(payload["y"][sel], payload["exposure"][sel],
                                    t, strat, **kw)
    if outcome_kind == "und-prop":
        return fit_hier_negbin_proportion(payload["y"][sel], payload["totals"][sel],
                                          t, strat, **kw)
    raise ConfigError(f"unknown outcome kind {outcome_kind!r}")


def _snapshot_units(rows: list[FeatureRow], outcomes: list[OutcomeLabels],
                    variable: str, outcome_kind: str):
    """Unit table for snapshot treatments; drops censored outcomes."""
    attr = {"top10": "in_top_10_next", "top25": "in_top_25_next",
            "top50": "in_top_50_next", "move": "movement"}[outcome_kind]
    units, values, payload_y = [], [], []
    for row, out in zip(rows, outcomes):
        y = getattr(out, attr)
        if y is None:
            continue
        v = (row.recent_comments if variable == "recent_comments"
             else row.prop_recent_undesired)
        units.append(row)
        values.append(float(v))
        payload_y.append(y)
    ids = [f"{r.post_id}:{r.captured_at}" for r in units]
    order = sorted(range(len(units)), key=lambda i: ids[i])
    units = [units[i] for i in order]
    values = np.asarray([values[i] for i in order])
    if outcome_kind == "move":
        y = np.asarray([payload_y[i] for i in order], dtype=object)
    else:
        y = np.asarray([bool(payload_y[i]) for i in order])
    return units, [ids[i] for i in order], values, {"y": y}


def _interval_units(intervals: list[StationaryInterval],
                    rows: list[FeatureRow], outcome_kind: str):
    """Unit table for rank-movement treatments on stationary intervals."""
    by_key = {(r.post_id, r.captured_at): r for r in rows}
    units, covrows, values = [], [], []
    for iv in intervals:
        if iv.entry_move is None:
            continue
        row = by_key.get((iv.post_id, iv.t_start))
        if row is None:
            continue
        units.append(iv)
        covrows.append(row)
        values.append(float(iv.entry_move))
    ids = [f"{iv.post_id}:{iv.t_start}" for iv in units]
    order = sorted(range(len(units)), key=lambda i: ids[i])
    units = [units[i] for i in order]
    covrows = [covrows[i] for i in order]
    values = np.asarray([values[i] for i in order])
    payload = {}
    if outcome_kind in ("rate",):
        payload["y"] = np.asarray([iv.n_comments for iv in units], dtype=float)
        payload["exposure"] = np.asarray(
            [iv.delta_t_minutes for iv in units], dtype=float)
    elif outcome_kind == "und-rate":
        payload["y"] = np.asarray([iv.n_undesired for iv in units], dtype=float)
        payload["exposure"] = np.asarray(
            [iv.delta_t_minutes for iv in units], dtype=float)
    elif outcome_kind == "und-prop":
        payload["y"] = np.asarray([iv.n_undesired for iv in units], dtype=float)
        payload["totals"] = np.asarray([iv.n_comments for iv in units], dtype=float)
    return covrows, [ids[i] for i in order], values, payload


def run_audit(rows: list[FeatureRow], outcomes: list[OutcomeLabels],
              intervals: list[StationaryInterval],
              cfg: AuditConfig) -> AuditResult:
    """The full matching pipeline for one treatment/outcome pair."""
    spec = standard_treatment(cfg.treatment, cfg.tr_strong_rule)
    interval_based = spec.variable == "rank_movement"
    if interval_based and cfg.outcome not in INTERVAL_OUTCOMES:
        raise ConfigError(
            f"treatment {cfg.treatment} pairs with interval outcomes "
            f"{INTERVAL_OUTCOMES}, not {cfg.outcome!r}")
    if not interval_based and cfg.outcome not in SNAPSHOT_OUTCOMES:
        raise ConfigError(
            f"treatment {cfg.treatment} pairs with snapshot outcomes "
            f"{SNAPSHOT_OUTCOMES}, not {cfg.outcome!r}")

    if interval_based:
        covrows, ids, values, payload = _interval_units(
            intervals, rows, cfg.outcome)
    else:
        covrows, ids, values, payload = _snapshot_units(
            rows, outcomes, spec.variable, cfg.outcome)
    if len(covrows) == 0:
        raise InsufficientStrataError("no analyzable units")

    assignment = define_treatment(values, spec)
    warnings = list(assignment.warnings)
    included = np.concatenate([assignment.control, assignment.treated])
    included.sort()
    treated_mask = np.zeros(len(covrows), dtype=bool)
    treated_mask[assignment.treated] = True

    sub_rows = [covrows[i] for i in included]
    sub_ids = [ids[i] for i in included]
    sub_treated = treated_mask[included]
    covariates = build_covariates(sub_rows, n_bigrams=cfg.n_bigrams)

    model = AdaBoostPropensity(n_rounds=cfg.propensity_rounds,
                               random_state=cfg.seed)
    model.fit(covariates.X, sub_treated.astype(int))
    scores = model.propensity(covariates.X)

    n_strata = cfg.n_strata or (100 if interval_based else 200)
    n_strata = min(n_strata, len(sub_ids))
    strata = stratify(scores, sub_treated, n_strata, ids=sub_ids)
    retained = filter_strata(strata, covariates,
                             min_arm=cfg.min_arm, smd_max=cfg.smd_max)
    cutoff_label = (f"control {spec.control_rule.op} "
                    f"{assignment.cutoffs['control']:g}, treated "
                    f"{spec.treatment_rule.op} {assignment.cutoffs['treatment']:g}")
    report = build_report(spec.variable, spec.strength, cutoff_label, strata)

    sub_payload = {k: v[included] for k, v in payload.items()}
    fit = estimate_effect(retained, sub_treated, cfg.outcome, sub_payload,
                          rope_bounds=cfg.rope_bounds, n_chains=cfg.n_chains,
                          n_iter=cfg.n_iter, warmup=cfg.warmup, seed=cfg.seed,
                          threads=cfg.threads)
    warnings.extend(fit.warnings)
    return AuditResult(
        treatment=cfg.treatment,
        outcome=cfg.outcome,
        summaries=fit.summaries,
        report=report.to_dict(),
        cutoffs=assignment.cutoffs,
        n_units=len(sub_ids),
        n_strata_used=len(retained),
        warnings=warnings,
        config=cfg.to_dict(),
    )
