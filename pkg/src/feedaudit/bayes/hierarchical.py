"""Hierarchical treatment-effect models pooled across matched strata.

Every family shares one skeleton: each stratum j gets its own intercept and
treatment coefficient, coefficients are pooled through
beta_j ~ Normal(mu_beta, sigma_beta), and the hyper mean mu_beta is the
average treatment effect. Hyperpriors are Normal(0, 1) on the means and
HalfCauchy(1) on the scales; intercepts are pooled the same way.

Families:
  logistic    -- binary outcome, logit(p) = alpha_j + beta_j x
  multinomial -- up/down/none outcome, one logit per non-baseline class
  negbin rate -- counts with exposure, log(rate) = gamma_j + beta_j x,
                 NBinom(mu = rate * exposure, shape alpha)
  negbin prop -- undesired counts out of totals, logit(p) = gamma_j + beta_j x,
                 NBinom(mu = p * total, shape alpha)

The negbin shape is parameterized through phi = 1/alpha with an
Exponential(1) prior on phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, gammaln

from ..errors import DegenerateDataError, DomainError, EmptyArmError
from .sampler import Chains, SamplerModel, mcmc_sample
from .summary import DEFAULT_ROPE, PosteriorSummary, summarize

LOG_2_OVER_PI = math.log(2.0 / math.pi)


def _log1pexp(x: float) -> float:
    if x > 30.0:
        return x
    return math.log1p(math.exp(x))


def _norm_lp_scalar(x: float, mu: float, sd: float) -> float:
    return -0.5 * ((x - mu) / sd) ** 2 - math.log(sd)


def _norm_lp_sum(x: np.ndarray, mu: float, sd: float) -> float:
    return float(np.sum(-0.5 * ((x - mu) / sd) ** 2) - x.size * math.log(sd))


def _half_cauchy_lp(log_sd: float) -> float:
    sd = math.exp(log_sd)
    return LOG_2_OVER_PI - math.log1p(sd * sd) + log_sd


def _empirical_logit(successes: float, total: float) -> float:
    return math.log((successes + 0.5) / (total - successes + 0.5))


@dataclass
class HierarchicalFit:
    chains: Chains
    effect_names: list[str]
    summaries: dict[str, PosteriorSummary]
    n_strata: int
    n_obs: int
    warnings: list[str] = field(default_factory=list)

    def summary(self, effect: str | None = None) -> PosteriorSummary:
        if effect is None:
            effect = self.effect_names[0]
        return self.summaries[effect]

    def to_dict(self) -> dict:
        return {
            "effects": {k: v.to_dict() for k, v in self.summaries.items()},
            "n_strata": self.n_strata,
            "n_obs": self.n_obs,
            "acceptance_rate": self.chains.acceptance_rate,
            "warnings": self.warnings,
        }


def _check_arms(stratum_ids, treated) -> list:
    """Distinct stratum labels, each required to hold both arms."""
    stratum_ids = np.asarray(stratum_ids)
    treated = np.asarray(treated, dtype=bool)
    labels = sorted(set(stratum_ids.tolist()))
    for lab in labels:
        mask = stratum_ids == lab
        if not np.any(treated[mask]):
            raise EmptyArmError(lab, "treated")
        if not np.any(~treated[mask]):
            raise EmptyArmError(lab, "control")
    return labels


# ---------------------------------------------------------------------------
# logistic family


class HierLogisticModel(SamplerModel):
    """Sufficient-statistic form: per stratum, successes/totals per arm."""

    def __init__(self, y, treated, stratum_ids):
        y = np.asarray(y, dtype=bool)
        treated = np.asarray(treated, dtype=bool)
        labels = _check_arms(stratum_ids, treated)
        stratum_ids = np.asarray(stratum_ids)
        self.stats = []
        for lab in labels:
            mask = stratum_ids == lab
            t = treated[mask]
            yy = y[mask]
            self.stats.append((
                float(np.sum(~t)), float(np.sum(yy[~t])),
                float(np.sum(t)), float(np.sum(yy[t])),
            ))
        self.labels = labels
        self.J = len(labels)
        self.n_obs = int(len(np.asarray(stratum_ids)))
        self.param_names = (
            ["mu_alpha", "log_sigma_alpha", "mu_beta", "log_sigma_beta"]
            + [f"alpha_{j}" for j in range(self.J)]
            + [f"beta_{j}" for j in range(self.J)]
        )
        self._ia = 4
        self._ib = 4 + self.J

    def _loglik_j(self, j: int, a: float, b: float) -> float:
        n_c, y_c, n_t, y_t = self.stats[j]
        return (y_c * a - n_c * _log1pexp(a)
                + y_t * (a + b) - n_t * _log1pexp(a + b))

    def log_density(self, theta: np.ndarray) -> float:
        lp = self._hyper_lp(theta, 0, self._ia) + self._hyper_lp(theta, 2, self._ib)
        for j in range(self.J):
            a = theta[self._ia + j]
            b = theta[self._ib + j]
            lp += self._loglik_j(j, a, b)
        return lp

    def _hyper_lp(self, theta, hyper_off: int, param_off: int) -> float:
        mu = theta[hyper_off]
        log_sd = theta[hyper_off + 1]
        sd = math.exp(log_sd)
        vals = theta[param_off:param_off + self.J]
        return (_norm_lp_sum(vals, mu, sd)
                - 0.5 * mu * mu + _half_cauchy_lp(log_sd))

    def blocks(self) -> list[np.ndarray]:
        out = [np.array([0, 1]), np.array([2, 3])]
        for j in range(self.J):
            out.append(np.array([self._ia + j, self._ib + j]))
        return out

    def block_log_density(self, theta: np.ndarray, block_id: int) -> float:
        if block_id == 0:
            return self._hyper_lp(theta, 0, self._ia)
        if block_id == 1:
            return self._hyper_lp(theta, 2, self._ib)
        j = block_id - 2
        a = theta[self._ia + j]
        b = theta[self._ib + j]
        return (self._loglik_j(j, a, b)
                + _norm_lp_scalar(a, theta[0], math.exp(theta[1]))
                + _norm_lp_scalar(b, theta[2], math.exp(theta[3])))

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.empty(self.n_params)
        alphas = np.array([_empirical_logit(y_c, n_c)
                           for n_c, y_c, _, _ in self.stats])
        betas = np.array([
            _empirical_logit(y_t, n_t) - _empirical_logit(y_c, n_c)
            for n_c, y_c, n_t, y_t in self.stats])
        alphas = np.clip(alphas, -4, 4) + 0.1 * rng.standard_normal(self.J)
        betas = np.clip(betas, -3, 3) + 0.1 * rng.standard_normal(self.J)
        theta[0] = float(np.mean(alphas))
        theta[1] = math.log(max(float(np.std(alphas)), 0.1))
        theta[2] = float(np.mean(betas))
        theta[3] = math.log(max(float(np.std(betas)), 0.1))
        theta[self._ia:self._ia + self.J] = alphas
        theta[self._ib:self._ib + self.J] = betas
        return theta


def fit_hier_logistic(y, treated, stratum_ids, n_chains: int = 4,
                      n_iter: int = 2000, warmup: int = 1000, seed: int = 0,
                      rope_bounds=DEFAULT_ROPE, threads: int = 1) -> HierarchicalFit:
    """Pooled treatment effect on a binary outcome across strata."""
    model = HierLogisticModel(y, treated, stratum_ids)
    chains = mcmc_sample(model, n_chains=n_chains, n_iter=n_iter,
                         warmup=warmup, seed=seed, threads=threads)
    summaries = {"mu_beta": summarize(chains, "mu_beta", rope_bounds)}
    return HierarchicalFit(chains=chains, effect_names=["mu_beta"],
                           summaries=summaries, n_strata=model.J,
                           n_obs=model.n_obs, warnings=chains.warnings)


# ---------------------------------------------------------------------------
# multinomial family


class HierMultinomialModel(SamplerModel):
    """Up/down/none outcome; independent pooled logits for up and down."""

    def __init__(self, outcome, treated, stratum_ids):
        outcome = np.asarray([str(v) for v in outcome])
        valid = {"up", "down", "none"}
        if not set(outcome) <= valid:
            raise DomainError(f"outcome values must be in {sorted(valid)}")
        if not valid <= set(outcome):
            raise DegenerateDataError(
                f"all of up/down/none must appear; got {sorted(set(outcome))}")
        treated = np.asarray(treated, dtype=bool)
        labels = _check_arms(stratum_ids, treated)
        stratum_ids = np.asarray(stratum_ids)
        self.stats = []
        for lab in labels:
            mask = stratum_ids == lab
            per_arm = []
            for arm in (False, True):
                sel = outcome[mask & (treated == arm)]
                per_arm.append((
                    float(np.sum(sel == "up")),
                    float(np.sum(sel == "down")),
                    float(len(sel)),
                ))
            self.stats.append(per_arm)
        self.labels = labels
        self.J = len(labels)
        self.n_obs = int(stratum_ids.size)
        self.param_names = (
            ["mu_alpha_up", "log_sigma_alpha_up",
             "mu_beta_up", "log_sigma_beta_up",
             "mu_alpha_down", "log_sigma_alpha_down",
             "mu_beta_down", "log_sigma_beta_down"]
            + [f"{nm}_{j}" for j in range(self.J)
               for nm in ("alpha_up", "beta_up", "alpha_down", "beta_down")]
        )
        self._base = 8

    def _stratum_slice(self, j: int) -> np.ndarray:
        return np.arange(self._base + 4 * j, self._base + 4 * j + 4)

    def _loglik_j(self, j: int, a_u: float, b_u: float,
                  a_d: float, b_d: float) -> float:
        lp = 0.0
        for arm, (n_up, n_down, n_tot) in enumerate(self.stats[j]):
            eta_u = a_u + (b_u if arm else 0.0)
            eta_d = a_d + (b_d if arm else 0.0)
            m = max(0.0, eta_u, eta_d)
            lse = m + math.log(
                math.exp(-m) + math.exp(eta_u - m) + math.exp(eta_d - m))
            lp += n_up * eta_u + n_down * eta_d - n_tot * lse
        return lp

    def _hyper_lp(self, theta, hyper_off: int, which: int) -> float:
        mu = theta[hyper_off]
        log_sd = theta[hyper_off + 1]
        sd = math.exp(log_sd)
        vals = theta[self._base + which::4][:self.J]
        return (_norm_lp_sum(vals, mu, sd)
                - 0.5 * mu * mu + _half_cauchy_lp(log_sd))

    def log_density(self, theta: np.ndarray) -> float:
        lp = sum(self._hyper_lp(theta, 2 * w, w) for w in range(4))
        for j in range(self.J):
            a_u, b_u, a_d, b_d = theta[self._stratum_slice(j)]
            lp += self._loglik_j(j, a_u, b_u, a_d, b_d)
        return lp

    def blocks(self) -> list[np.ndarray]:
        out = [np.array([0, 1]), np.array([2, 3]),
               np.array([4, 5]), np.array([6, 7])]
        for j in range(self.J):
            out.append(self._stratum_slice(j))
        return out

    def block_log_density(self, theta: np.ndarray, block_id: int) -> float:
        if block_id < 4:
            return self._hyper_lp(theta, 2 * block_id, block_id)
        j = block_id - 4
        a_u, b_u, a_d, b_d = theta[self._stratum_slice(j)]
        lp = self._loglik_j(j, a_u, b_u, a_d, b_d)
        for w, v in enumerate((a_u, b_u, a_d, b_d)):
            lp += _norm_lp_scalar(v, theta[2 * w], math.exp(theta[2 * w + 1]))
        return lp

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.empty(self.n_params)
        inits = np.empty((self.J, 4))
        for j, per_arm in enumerate(self.stats):
            (cu, cd, cn), (tu, td, tn) = per_arm
            c_none = max(cn - cu - cd, 0.0)
            t_none = max(tn - tu - td, 0.0)
            a_u = math.log((cu + 0.5) / (c_none + 0.5))
            a_d = math.log((cd + 0.5) / (c_none + 0.5))
            b_u = math.log((tu + 0.5) / (t_none + 0.5)) - a_u
            b_d = math.log((td + 0.5) / (t_none + 0.5)) - a_d
            inits[j] = np.clip([a_u, b_u, a_d, b_d], -4, 4)
        inits += 0.1 * rng.standard_normal(inits.shape)
        for w in range(4):
            theta[2 * w] = float(np.mean(inits[:, w]))
            theta[2 * w + 1] = math.log(max(float(np.std(inits[:, w])), 0.1))
        theta[self._base:] = inits.ravel()
        return theta


def fit_hier_multinomial(outcome, treated, stratum_ids, n_chains: int = 4,
                         n_iter: int = 2000, warmup: int = 1000, seed: int = 0,
                         rope_bounds=DEFAULT_ROPE, threads: int = 1) -> HierarchicalFit:
    """Pooled up-vs-none and down-vs-none treatment effects across strata."""
    model = HierMultinomialModel(outcome, treated, stratum_ids)
    chains = mcmc_sample(model, n_chains=n_chains, n_iter=n_iter,
                         warmup=warmup, seed=seed, threads=threads)
    names = ["mu_beta_up", "mu_beta_down"]
    summaries = {nm: summarize(chains, nm, rope_bounds) for nm in names}
    return HierarchicalFit(chains=chains, effect_names=names,
                           summaries=summaries, n_strata=model.J,
                           n_obs=model.n_obs, warnings=chains.warnings)


# ---------------------------------------------------------------------------
# negative binomial families


class _HierNegbinBase(SamplerModel):
    """Shared machinery: stratum (gamma_j, beta_j) pairs + pooled hypers +
    one shared dispersion parameter sampled as log(phi), phi = 1/alpha."""

    def __init__(self, y, treated, stratum_ids):
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise DomainError("counts must be non-negative")
        treated = np.asarray(treated, dtype=bool)
        labels = _check_arms(stratum_ids, treated)
        stratum_ids = np.asarray(stratum_ids)
        self.rows = []
        for lab in labels:
            mask = stratum_ids == lab
            self.rows.append((
                y[mask & ~treated], y[mask & treated], mask))
        self.labels = labels
        self.J = len(labels)
        self.n_obs = int(stratum_ids.size)
        # flat views for the shared-dispersion block
        label_pos = {lab: j for j, lab in enumerate(labels)}
        self._y_flat = y
        self._strat_flat = np.array([label_pos[lab] for lab in stratum_ids])
        self._treated_flat = treated.astype(float)
        self.param_names = (
            ["mu_gamma", "log_sigma_gamma", "mu_beta", "log_sigma_beta",
             "log_phi"]
            + [f"gamma_{j}" for j in range(self.J)]
            + [f"beta_{j}" for j in range(self.J)]
        )
        self._ig = 5
        self._ib = 5 + self.J

    # subclasses: _mu_arrays(j, gamma, beta) -> (mu_control, mu_treated)
    # and _mu_flat(eta) -> mu for all rows

    def _loglik_core_j(self, j: int, gamma: float, beta: float,
                       alpha: float) -> float:
        """Terms that vary with (gamma_j, beta_j); gammaln(y + alpha) omitted."""
        y_c, y_t, _ = self.rows[j]
        mu_c, mu_t = self._mu_arrays(j, gamma, beta)
        lp = float(np.sum(y_c * np.log(mu_c) - (y_c + alpha) * np.log(alpha + mu_c)))
        lp += float(np.sum(y_t * np.log(mu_t) - (y_t + alpha) * np.log(alpha + mu_t)))
        return lp

    def _loglik_full(self, theta: np.ndarray) -> float:
        alpha = self._alpha(theta)
        gammas = theta[self._ig:self._ig + self.J]
        betas = theta[self._ib:self._ib + self.J]
        eta = (gammas[self._strat_flat]
               + betas[self._strat_flat] * self._treated_flat)
        mu = self._mu_flat(eta)
        y = self._y_flat
        lp = float(np.sum(gammaln(y + alpha) + y * np.log(mu)
                          - (y + alpha) * np.log(alpha + mu)))
        lp += y.size * (alpha * math.log(alpha) - float(gammaln(alpha)))
        return lp

    def _alpha(self, theta: np.ndarray) -> float:
        return 1.0 / math.exp(theta[4])

    def _dispersion_prior(self, theta: np.ndarray) -> float:
        log_phi = theta[4]
        phi = math.exp(log_phi)
        return -phi + log_phi  # Exponential(1) on phi, log parameterization

    def _hyper_lp(self, theta, hyper_off: int, param_off: int) -> float:
        mu = theta[hyper_off]
        log_sd = theta[hyper_off + 1]
        sd = math.exp(log_sd)
        vals = theta[param_off:param_off + self.J]
        return (_norm_lp_sum(vals, mu, sd)
                - 0.5 * mu * mu + _half_cauchy_lp(log_sd))

    def log_density(self, theta: np.ndarray) -> float:
        return (self._hyper_lp(theta, 0, self._ig)
                + self._hyper_lp(theta, 2, self._ib)
                + self._dispersion_prior(theta)
                + self._loglik_full(theta))

    def blocks(self) -> list[np.ndarray]:
        out = [np.array([0, 1]), np.array([2, 3]), np.array([4])]
        for j in range(self.J):
            out.append(np.array([self._ig + j, self._ib + j]))
        return out

    def block_log_density(self, theta: np.ndarray, block_id: int) -> float:
        if block_id == 0:
            return self._hyper_lp(theta, 0, self._ig)
        if block_id == 1:
            return self._hyper_lp(theta, 2, self._ib)
        if block_id == 2:
            return self._dispersion_prior(theta) + self._loglik_full(theta)
        j = block_id - 3
        gamma = theta[self._ig + j]
        beta = theta[self._ib + j]
        alpha = self._alpha(theta)
        return (self._loglik_core_j(j, gamma, beta, alpha)
                + _norm_lp_scalar(gamma, theta[0], math.exp(theta[1]))
                + _norm_lp_scalar(beta, theta[2], math.exp(theta[3])))

    def _initial_stratum(self, j: int) -> tuple[float, float]:
        raise NotImplementedError

    def initial_point(self, rng: np.random.Generator) -> np.ndarray:
        theta = np.empty(self.n_params)
        inits = np.array([self._initial_stratum(j) for j in range(self.J)])
        inits += 0.05 * rng.standard_normal(inits.shape)
        theta[0] = float(np.mean(inits[:, 0]))
        theta[1] = math.log(max(float(np.std(inits[:, 0])), 0.1))
        theta[2] = float(np.mean(inits[:, 1]))
        theta[3] = math.log(max(float(np.std(inits[:, 1])), 0.1))
        theta[4] = math.log(0.2) + 0.2 * float(rng.standard_normal())
        theta[self._ig:self._ig + self.J] = inits[:, 0]
        theta[self._ib:self._ib + self.J] = inits[:, 1]
        return theta


class HierNegbinRateModel(_HierNegbinBase):
    """Counts over exposures: mu = exp(gamma_j + beta_j x) * exposure."""

    def __init__(self, y, exposure, treated, stratum_ids):
        exposure = np.asarray(exposure, dtype=float)
        if np.any(exposure <= 0):
            raise DomainError("exposures must be strictly positive")
        super().__init__(y, treated, stratum_ids)
        log_exp = np.log(exposure)
        treated = np.asarray(treated, dtype=bool)
        self._log_exp_flat = log_exp
        self._log_exp = []
        for j, (_, _, mask) in enumerate(self.rows):
            self._log_exp.append((log_exp[mask & ~treated], log_exp[mask & treated]))

    def _mu_flat(self, eta):
        return np.clip(np.exp(eta + self._log_exp_flat), 1e-300, 1e300)

    def _mu_arrays(self, j, gamma, beta):
        le_c, le_t = self._log_exp[j]
        mu_c = np.clip(np.exp(gamma + le_c), 1e-300, 1e300)
        mu_t = np.clip(np.exp(gamma + beta + le_t), 1e-300, 1e300)
        return mu_c, mu_t

    def _initial_stratum(self, j):
        y_c, y_t, _ = self.rows[j]
        le_c, le_t = self._log_exp[j]
        rate_c = (np.sum(y_c) + 0.5) / np.sum(np.exp(le_c))
        rate_t = (np.sum(y_t) + 0.5) / np.sum(np.exp(le_t))
        g = math.log(rate_c)
        return g, math.log(rate_t) - g


class HierNegbinProportionModel(_HierNegbinBase):
    """Undesired counts out of totals: mu = expit(gamma_j + beta_j x) * total."""

    def __init__(self, y, totals, treated, stratum_ids):
        y = np.asarray(y, dtype=float)
        totals = np.asarray(totals, dtype=float)
        if np.any(totals < 0):
            raise DomainError("totals must be non-negative")
        if np.any(y > totals):
            raise DomainError("undesired counts exceed totals")
        if not np.any(totals > 0):
            raise DegenerateDataError("all totals are zero")
        keep = totals > 0  # zero-total rows carry no proportion information
        super().__init__(y[keep], np.asarray(treated, dtype=bool)[keep],
                         np.asarray(stratum_ids)[keep])
        totals = totals[keep]
        treated = np.asarray(treated, dtype=bool)[keep]
        self._totals_flat = totals
        self._totals = []
        for j, (_, _, mask) in enumerate(self.rows):
            self._totals.append((totals[mask & ~treated], totals[mask & treated]))

    def _mu_flat(self, eta):
        return np.clip(expit(eta) * self._totals_flat, 1e-12, None)

    def _mu_arrays(self, j, gamma, beta):
        n_c, n_t = self._totals[j]
        mu_c = np.clip(expit(gamma) * n_c, 1e-12, None)
        mu_t = np.clip(expit(gamma + beta) * n_t, 1e-12, None)
        return mu_c, mu_t

    def _initial_stratum(self, j):
        y_c, y_t, _ = self.rows[j]
        n_c, n_t = self._totals[j]
        g = _empirical_logit(float(np.sum(y_c)), float(np.sum(n_c)))
        gt = _empirical_logit(float(np.sum(y_t)), float(np.sum(n_t)))
        return max(min(g, 4), -4), max(min(gt - g, 3), -3)


def fit_hier_negbin_rate(y, exposure, treated, stratum_ids, n_chains: int = 4,
                         n_iter: int = 2000, warmup: int = 1000, seed: int = 0,
                         rope_bounds=DEFAULT_ROPE, threads: int = 1) -> HierarchicalFit:
    """Pooled treatment effect on a commenting rate with exposure offsets."""
    model = HierNegbinRateModel(y, exposure, treated, stratum_ids)
    chains = mcmc_sample(model, n_chains=n_chains, n_iter=n_iter,
                         warmup=warmup, seed=seed, threads=threads)
    summaries = {"mu_beta": summarize(chains, "mu_beta", rope_bounds)}
    return HierarchicalFit(chains=chains, effect_names=["mu_beta"],
                           summaries=summaries, n_strata=model.J,
                           n_obs=model.n_obs, warnings=chains.warnings)


def fit_hier_negbin_proportion(y, totals, treated, stratum_ids,
                               n_chains: int = 4, n_iter: int = 2000,
                               warmup: int = 1000, seed: int = 0,
                               rope_bounds=DEFAULT_ROPE,
                               threads: int = 1) -> HierarchicalFit:
    """Pooled treatment effect on the proportion of undesired comments."""
    model = HierNegbinProportionModel(y, totals, treated, stratum_ids)
    chains = mcmc_sample(model, n_chains=n_chains, n_iter=n_iter,
                         warmup=warmup, seed=seed, threads=threads)
    summaries = {"mu_beta": summarize(chains, "mu_beta", rope_bounds)}
    return HierarchicalFit(chains=chains, effect_names=["mu_beta"],
                           summaries=summaries, n_strata=model.J,
                           n_obs=model.n_obs, warnings=chains.warnings)
