"""Posterior effect summaries: mean, credible interval, probability of
direction, and mass inside a region of practical equivalence (ROPE).

Effects sampled on the log-odds / log-rate scale are reported as percent
changes, (e^draw - 1) * 100. The default ROPE of [-4.8%, +5%] is symmetric
on the log scale (ln 0.952 is about -ln 1.05).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DomainError

DEFAULT_ROPE = (-4.8, 5.0)
MIN_DRAWS = 1000


@dataclass(frozen=True)
class PosteriorSummary:
    effect_mean: float          # percent
    ci95: tuple[float, float]   # percent
    pd: float
    rope_prob: float
    rope_bounds: tuple[float, float]
    n_draws: int

    def to_dict(self) -> dict:
        return {
            "effect_mean": self.effect_mean,
            "ci95": list(self.ci95),
            "pd": self.pd,
            "rope_prob": self.rope_prob,
            "rope_bounds": list(self.rope_bounds),
            "n_draws": self.n_draws,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorSummary":
        return cls(
            effect_mean=d["effect_mean"],
            ci95=tuple(d["ci95"]),
            pd=d["pd"],
            rope_prob=d["rope_prob"],
            rope_bounds=tuple(d["rope_bounds"]),
            n_draws=d["n_draws"],
        )


def summarize_draws(draws: np.ndarray,
                    rope_bounds: tuple[float, float] = DEFAULT_ROPE,
                    log_scale: bool = True,
                    min_draws: int = MIN_DRAWS) -> PosteriorSummary:
    """Summarize effect draws; `log_scale` converts to percent first."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size < min_draws:
        raise DomainError(
            f"need at least {min_draws} post-warmup draws, got {draws.size}")
    pct = (np.exp(draws) - 1.0) * 100.0 if log_scale else draws
    lo, hi = rope_bounds
    if lo >= hi:
        raise DomainError("rope bounds must satisfy lo < hi")
    pd = float(max(np.mean(pct >= 0.0), np.mean(pct <= 0.0)))
    return PosteriorSummary(
        effect_mean=float(np.mean(pct)),
        ci95=(float(np.percentile(pct, 2.5)), float(np.percentile(pct, 97.5))),
        pd=pd,
        rope_prob=float(np.mean((pct >= lo) & (pct <= hi))),
        rope_bounds=(float(lo), float(hi)),
        n_draws=int(draws.size),
    )


def summarize(chains, parameter: str,
              rope_bounds: tuple[float, float] = DEFAULT_ROPE,
              log_scale: bool = True) -> PosteriorSummary:
    """Summarize one named parameter of a Chains object on the percent scale."""
    return summarize_draws(chains.extract(parameter), rope_bounds, log_scale)
