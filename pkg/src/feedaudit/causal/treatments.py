"""Treatment/control labeling by percentile or absolute cutoffs.

Three treatment variables, each in a weak and a strong variant:

  recent_comments       (tc)  high recent commenting volume
  recent_prop_undesired (tu)  high recent proportion of undesired comments
  rank_movement         (tr)  upward feed movement; the variable is the
                              signed rank delta, negative = moved up

Weak variants split at the median (control <= Q(0.5), treated above);
strong variants treat from the 75th percentile up and exclude the middle
band from both arms. Rank movement splits at zero: any upward move is
weak treatment, and the strong variant requires the move to reach the
lower quartile of signed movement (equivalently the largest upward
quarter); a `five_ranks` alternative instead requires moving up at least
five ranks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

TREATMENT_CODES = ("tc-w", "tc-s", "tu-w", "tu-s", "tr-w", "tr-s")

VARIABLES = ("recent_comments", "recent_prop_undesired", "rank_movement")


@dataclass(frozen=True)
class CutoffRule:
    """One comparison against a percentile-resolved or absolute cutoff."""

    op: str  # "le" | "lt" | "ge" | "gt"
    quantile: float | None = None
    value: float | None = None

    def __post_init__(self):
        if self.op not in ("le", "lt", "ge", "gt"):
            raise ConfigError(f"unknown cutoff op {self.op!r}")
        if (self.quantile is None) == (self.value is None):
            raise ConfigError("exactly one of quantile/value must be set")

    def resolve(self, values: np.ndarray) -> float:
        if self.value is not None:
            return float(self.value)
        return float(np.quantile(values, self.quantile))

    @staticmethod
    def apply(op: str, values: np.ndarray, cutoff: float) -> np.ndarray:
        if op == "le":
            return values <= cutoff
        if op == "lt":
            return values < cutoff
        if op == "ge":
            return values >= cutoff
        return values > cutoff


@dataclass(frozen=True)
class TreatmentSpec:
    variable: str
    strength: str
    control_rule: CutoffRule
    treatment_rule: CutoffRule
    code: str = ""

    def __post_init__(self):
        if self.variable not in VARIABLES:
            raise ConfigError(f"unknown treatment variable {self.variable!r}")
        if self.strength not in ("weak", "strong"):
            raise ConfigError("strength must be weak or strong")


def standard_treatment(code: str, tr_strong_rule: str = "quartile") -> TreatmentSpec:
    """The six built-in treatment definitions by short code."""
    code = code.lower()
    if code == "tc-w":
        return TreatmentSpec("recent_comments", "weak",
                             CutoffRule("le", quantile=0.5),
                             CutoffRule("gt", quantile=0.5), code=code)
    if code == "tc-s":
        return TreatmentSpec("recent_comments", "strong",
                             CutoffRule("le", quantile=0.5),
                             CutoffRule("ge", quantile=0.75), code=code)
    if code == "tu-w":
        return TreatmentSpec("recent_prop_undesired", "weak",
                             CutoffRule("le", quantile=0.5),
                             CutoffRule("gt", quantile=0.5), code=code)
    if code == "tu-s":
        return TreatmentSpec("recent_prop_undesired", "strong",
                             CutoffRule("le", quantile=0.5),
                             CutoffRule("ge", quantile=0.75), code=code)
    if code == "tr-w":
        return TreatmentSpec("rank_movement", "weak",
                             CutoffRule("ge", value=0.0),
                             CutoffRule("lt", value=0.0), code=code)
    if code == "tr-s":
        if tr_strong_rule == "five_ranks":
            treat = CutoffRule("le", value=-5.0)
        elif tr_strong_rule == "quartile":
            treat = CutoffRule("le", quantile=0.25)
        else:
            raise ConfigError(f"unknown tr_strong_rule {tr_strong_rule!r}")
        return TreatmentSpec("rank_movement", "strong",
                             CutoffRule("ge", value=0.0), treat, code=code)
    raise ConfigError(f"unknown treatment code {code!r}; "
                      f"expected one of {TREATMENT_CODES}")


@dataclass
class TreatmentAssignment:
    treated: np.ndarray   # indices into the input values
    control: np.ndarray
    excluded: np.ndarray
    cutoffs: dict[str, float]
    warnings: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.treated) + len(self.control) + len(self.excluded)


def define_treatment(values, spec: TreatmentSpec) -> TreatmentAssignment:
    """Partition sample indices into treated / control / excluded.

    Percentile cutoffs are resolved against the supplied values themselves.
    A degenerate distribution where the treatment cutoff collapses onto the
    control cutoff disables the treated arm with a warning instead of
    producing overlapping arms.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1:
        raise ConfigError("treatment variable must be one-dimensional")
    control_cut = spec.control_rule.resolve(values)
    treat_cut = spec.treatment_rule.resolve(values)
    warnings = []

    control_mask = CutoffRule.apply(spec.control_rule.op, values, control_cut)
    treat_mask = CutoffRule.apply(spec.treatment_rule.op, values, treat_cut)

    overlap = control_mask & treat_mask
    if np.any(overlap):
        # collapsed percentiles (e.g. median == 75th); treated arm is disabled
        warnings.append(
            f"degenerate cutoffs for {spec.code or spec.variable}: control "
            f"cutoff {control_cut:g} and treatment cutoff {treat_cut:g} "
            f"overlap on {int(np.sum(overlap))} samples; treated arm disabled")
        treat_mask = np.zeros_like(treat_mask)
    if not np.any(treat_mask):
        if not warnings:
            warnings.append(
                f"no samples qualify as treated for {spec.code or spec.variable}")

    idx = np.arange(values.size)
    excluded_mask = ~(control_mask | treat_mask)
    return TreatmentAssignment(
        treated=idx[treat_mask],
        control=idx[control_mask],
        excluded=idx[excluded_mask],
        cutoffs={"control": control_cut, "treatment": treat_cut},
        warnings=warnings,
    )
