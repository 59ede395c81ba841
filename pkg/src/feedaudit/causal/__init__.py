"""Quasi-experimental pipeline: treatment labeling, propensity modeling,
stratification with balance filtering, and pooled effect estimation."""

from .treatments import (
    TREATMENT_CODES,
    TreatmentAssignment,
    TreatmentSpec,
    define_treatment,
    standard_treatment,
)
from .propensity import AdaBoostPropensity, CovariateMatrix, build_covariates
from .stratification import (
    StrataReport,
    Stratum,
    filter_strata,
    smd,
    stratify,
)
from .effects import AuditConfig, AuditResult, estimate_effect, run_audit

__all__ = [
    "TREATMENT_CODES",
    "TreatmentSpec",
    "TreatmentAssignment",
    "standard_treatment",
    "define_treatment",
    "AdaBoostPropensity",
    "CovariateMatrix",
    "build_covariates",
    "Stratum",
    "StrataReport",
    "stratify",
    "smd",
    "filter_strata",
    "AuditConfig",
    "AuditResult",
    "estimate_effect",
    "run_audit",
]
