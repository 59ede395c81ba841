"""feedaudit: a desk-scale audit toolkit for ranked social feeds.

Simulate or ingest ranked-feed snapshot streams, extract regression
features, fit the descriptive regression families, and estimate pooled
treatment effects through a stratified propensity + hierarchical Bayesian
pipeline, all seeded and reproducible.
"""

__version__ = "0.1.0"

from . import bayes, causal, features, feedsim, glm, ingest, modeling  # noqa: F401
from .glm import (  # noqa: F401
    DesignMatrix,
    FitResult,
    bonferroni,
    fit_logistic,
    fit_multinomial,
    fit_negbin,
    odds_percent,
    pseudo_r2,
)
