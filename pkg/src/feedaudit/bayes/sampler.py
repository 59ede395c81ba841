"""Seeded multi-chain MCMC via adaptive random-walk Metropolis within blocks.

Proposal scales adapt during warmup toward an acceptance rate around 0.3
(kept inside [0.2, 0.5] for healthy mixing) and are frozen afterwards, so
post-warmup draws target the exact posterior. Models may supply per-block
densities that drop terms constant within the block; the Metropolis ratio
only ever compares densities from the same block.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DomainError

TARGET_ACCEPT = 0.3
ADAPT_INTERVAL = 25


class SamplerModel:
    """Base class for block-sampled models.

    Subclasses define `param_names`, `initial_point`, and `log_density`;
    they may override `blocks` (index arrays) and `block_log_density` to
    expose cheaper block-local densities.
    """

    param_names: list[str] = []

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, theta: np.ndarray) -> float:
        raise NotImplementedError

    def blocks(self) -> list[np.ndarray]:
        return [np.arange(self.n_params)]

    def block_log_density(self, theta: np.ndarray, block_id: int) -> float:
        return self.log_density(theta)

    def propose_block(self, theta: np.ndarray, block_id: int,
                      idx: np.ndarray, scale: float, coord_sd: np.ndarray,
                      rng: np.random.Generator) -> tuple[np.ndarray | None, float]:
        """Propose a new point for one block.

        Returns (proposal, log Hastings correction); the default is an iid
        normal step on the block's coordinates (symmetric, correction 0).
        A None proposal is rejected outright (out-of-support move).
        """
        prop = theta.copy()
        prop[idx] += scale * coord_sd[idx] * rng.standard_normal(len(idx))
        return prop, 0.0


@dataclass
class Chains:
    """Post-warmup draws from several independent chains."""

    draws: np.ndarray  # (n_chains, n_draws, n_params)
    param_names: list[str]
    warmup: int
    seed: int
    acceptance_rate: float
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._name_to_idx = {n: i for i, n in enumerate(self.param_names)}

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    def extract(self, name: str) -> np.ndarray:
        """All post-warmup draws of one parameter, chains concatenated."""
        return self.draws[:, :, self._name_to_idx[name]].ravel()

    def by_chain(self, name: str) -> np.ndarray:
        return self.draws[:, :, self._name_to_idx[name]]

    def rhat(self, name: str) -> float:
        return split_rhat(self.by_chain(name))

    def ess(self, name: str) -> float:
        return effective_sample_size(self.by_chain(name))

    def rhat_all(self) -> dict[str, float]:
        return {n: self.rhat(n) for n in self.param_names}

    def ess_all(self) -> dict[str, float]:
        return {n: self.ess(n) for n in self.param_names}

    def posterior_mean(self, name: str) -> float:
        return float(np.mean(self.extract(name)))

    def mcse(self, name: str) -> float:
        """Monte Carlo standard error from the effective sample size."""
        x = self.extract(name)
        ess = max(self.ess(name), 1.0)
        return float(np.std(x) / math.sqrt(ess))

    def save(self, path: str | Path) -> None:
        """Deterministic binary container: one JSON header line + raw floats."""
        header = {
            "param_names": self.param_names,
            "shape": list(self.draws.shape),
            "warmup": self.warmup,
            "seed": self.seed,
            "acceptance_rate": self.acceptance_rate,
            "warnings": self.warnings,
        }
        with open(path, "wb") as fh:
            fh.write(json.dumps(header, separators=(",", ":")).encode("utf-8"))
            fh.write(b"\n")
            fh.write(np.ascontiguousarray(self.draws, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "Chains":
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
            raw = fh.read()
        draws = np.frombuffer(raw, dtype="<f8").reshape(header["shape"]).copy()
        return cls(
            draws=draws,
            param_names=header["param_names"],
            warmup=header["warmup"],
            seed=header["seed"],
            acceptance_rate=header["acceptance_rate"],
            warnings=header.get("warnings", []),
        )


def _run_chain(model: SamplerModel, n_iter: int, warmup: int,
               seed_seq: np.random.SeedSequence) -> tuple[np.ndarray, float]:
    rng = np.random.default_rng(seed_seq)
    theta = np.asarray(model.initial_point(rng), dtype=float).copy()
    lp0 = model.log_density(theta)
    if not np.isfinite(lp0):
        raise DomainError(
            f"log density not finite at initial point: lp={lp0}, theta={theta}")

    blocks = model.blocks()
    n_blocks = len(blocks)
    scales = np.full(n_blocks, 0.5)
    coord_sd = np.ones(model.n_params)
    accept_counts = np.zeros(n_blocks)
    proposal_counts = np.zeros(n_blocks)
    post_accepts = 0
    post_proposals = 0

    warm_buffer = []
    draws = np.empty((n_iter, model.n_params))

    for it in range(warmup + n_iter):
        warming = it < warmup
        for b, idx in enumerate(blocks):
            prop, log_corr = model.propose_block(
                theta, b, idx, scales[b], coord_sd, rng)
            proposal_counts[b] += 1
            if not warming:
                post_proposals += 1
            if prop is None:
                continue
            lp_cur = model.block_log_density(theta, b)
            lp_prop = model.block_log_density(prop, b)
            if np.isnan(lp_prop) or np.isnan(lp_cur):
                raise DomainError(
                    f"NaN log density in block {b} at theta={prop[idx]}")
            if math.log(rng.uniform()) < lp_prop - lp_cur + log_corr:
                theta = prop
                accept_counts[b] += 1
                if not warming:
                    post_accepts += 1
        if warming:
            warm_buffer.append(theta.copy())
            if (it + 1) % ADAPT_INTERVAL == 0:
                rates = accept_counts / np.maximum(proposal_counts, 1)
                scales *= np.exp(1.2 * (rates - TARGET_ACCEPT))
                scales = np.clip(scales, 1e-4, 50.0)
                accept_counts[:] = 0
                proposal_counts[:] = 0
            if it + 1 == warmup // 2 and len(warm_buffer) >= 20:
                arr = np.asarray(warm_buffer[len(warm_buffer) // 2:])
                sd = arr.std(axis=0)
                coord_sd = np.where(sd > 1e-8, sd, coord_sd)
        else:
            draws[it - warmup] = theta
    rate = post_accepts / max(post_proposals, 1)
    return draws, rate


def mcmc_sample(model: SamplerModel, n_chains: int = 4, n_iter: int = 2000,
                warmup: int = 1000, seed: int = 0, threads: int = 1) -> Chains:
    """Sample `n_iter` post-warmup draws per chain; deterministic given seed.

    Chains use independent seed streams, so any thread count yields the
    same draws. An r-hat above 1.05 on any parameter attaches a
    non-convergence warning to the result rather than failing.
    """
    seqs = np.random.SeedSequence(seed).spawn(n_chains)
    if threads > 1 and n_chains > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda sq: _run_chain(model, n_iter, warmup, sq), seqs))
    else:
        results = [_run_chain(model, n_iter, warmup, sq) for sq in seqs]
    draws = np.stack([r[0] for r in results])
    rate = float(np.mean([r[1] for r in results]))
    chains = Chains(
        draws=draws,
        param_names=list(model.param_names),
        warmup=warmup,
        seed=seed,
        acceptance_rate=rate,
    )
    bad = [(n, chains.rhat(n)) for n in model.param_names]
    bad = [(n, r) for n, r in bad if np.isfinite(r) and r > 1.05]
    for n, r in bad:
        chains.warnings.append(f"r_hat {r:.3f} > 1.05 for parameter {n!r}")
    return chains


def split_rhat(chain_draws: np.ndarray) -> float:
    """Split-chain potential scale reduction factor.

    chain_draws has shape (n_chains, n_draws); each chain is split in half
    so at least two sequences enter the between/within comparison.
    """
    m, n = chain_draws.shape
    half = n // 2
    if half < 2:
        return float("nan")
    seqs = np.concatenate(
        [chain_draws[:, :half], chain_draws[:, half:2 * half]], axis=0)
    k, n = seqs.shape
    means = seqs.mean(axis=1)
    variances = seqs.var(axis=1, ddof=1)
    w = variances.mean()
    b = n * means.var(ddof=1)
    if w <= 0:
        return 1.0
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def effective_sample_size(chain_draws: np.ndarray) -> float:
    """ESS via Geyer's initial positive sequence on chain autocorrelations."""
    m, n = chain_draws.shape
    if n < 4:
        return float(m * n)
    means = chain_draws.mean(axis=1, keepdims=True)
    centered = chain_draws - means
    max_lag = min(n - 1, 1000)
    acov = np.empty((m, max_lag + 1))
    for c in range(m):
        x = centered[c]
        full = np.correlate(x, x, mode="full")[n - 1:]
        acov[c] = full[:max_lag + 1] / n
    w = acov[:, 0].mean()
    b_over_n = chain_draws.mean(axis=1).var(ddof=1) / 1.0 if m > 1 else 0.0
    var_plus = w * (n - 1) / n + (b_over_n if m > 1 else 0.0)
    if var_plus <= 0:
        return float(m * n)
    rho = 1.0 - (w - acov.mean(axis=0)) / var_plus
    # Geyer: sum consecutive lag pairs while their sum stays positive
    tau = 1.0
    t = 1
    while t + 1 <= max_lag:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        tau += 2.0 * pair
        t += 2
    ess = m * n / tau
    return float(min(ess, m * n))
