"""Posterior sampling engine and the Bayesian model families built on it."""

from .sampler import Chains, SamplerModel, mcmc_sample
from .summary import PosteriorSummary, summarize
from .ordinal import OrdinalPosterior, fit_ordinal_next_rank
from .hierarchical import (
    HierarchicalFit,
    fit_hier_logistic,
    fit_hier_multinomial,
    fit_hier_negbin_proportion,
    fit_hier_negbin_rate,
)

__all__ = [
    "Chains",
    "SamplerModel",
    "mcmc_sample",
    "PosteriorSummary",
    "summarize",
    "OrdinalPosterior",
    "fit_ordinal_next_rank",
    "HierarchicalFit",
    "fit_hier_logistic",
    "fit_hier_multinomial",
    "fit_hier_negbin_rate",
    "fit_hier_negbin_proportion",
]
