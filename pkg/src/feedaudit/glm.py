"""Frequentist regression engines: logistic, baseline-category multinomial,
and negative binomial with exposure offsets.

All models are fit by damped Newton iterations (step-halving line search) on
a caller-supplied design matrix that already contains its intercept column.
Convergence is declared when the score's infinity norm drops below `tol`.
Standard errors come from the inverse observed information at the optimum.

The negative binomial uses the shape parameterization Var(y) = mu + mu^2 /
alpha; alpha is profiled out by a golden-section search over log(alpha).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm as _normal
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import (
    DegenerateDataError,
    DomainError,
    FitConvergenceError,
    SchemaValidationError,
    SeparationError,
    SingularInformationError,
)

MAX_HALVINGS = 40


@dataclass
class DesignMatrix:
    """A named, validated design matrix (intercept column included by caller)."""

    X: np.ndarray
    columns: list[str]
    offsets: np.ndarray | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise SchemaValidationError("design matrix must be 2-dimensional")
        if len(self.columns) != self.X.shape[1]:
            raise SchemaValidationError(
                f"{len(self.columns)} column names for {self.X.shape[1]} columns")
        if len(set(self.columns)) != len(self.columns):
            raise SchemaValidationError("design matrix column names must be unique")
        if not np.all(np.isfinite(self.X)):
            raise SchemaValidationError("design matrix contains non-finite cells")
        if self.offsets is not None:
            self.offsets = np.asarray(self.offsets, dtype=float)
            if self.offsets.shape != (self.X.shape[0],):
                raise SchemaValidationError("offset length must match rows")
            if not np.all(np.isfinite(self.offsets)):
                raise SchemaValidationError("offsets must be finite")

    @property
    def n(self) -> int:
        return self.X.shape[0]


@dataclass
class FitResult:
    model: str
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    p_values_raw: dict[str, float]
    p_values_bonferroni: dict[str, float]
    log_likelihood: float
    null_log_likelihood: float
    pseudo_r2: dict[str, float]
    n_obs: int
    convergence: dict
    dispersion_alpha: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "coefficients": self.coefficients,
            "standard_errors": self.standard_errors,
            "p_values_raw": self.p_values_raw,
            "p_values_bonferroni": self.p_values_bonferroni,
            "log_likelihood": self.log_likelihood,
            "null_log_likelihood": self.null_log_likelihood,
            "pseudo_r2": self.pseudo_r2,
            "n_obs": self.n_obs,
            "convergence": self.convergence,
            "dispersion_alpha": self.dispersion_alpha,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        return cls(**d)


# ---------------------------------------------------------------------------
# reporting helpers


def odds_percent(coefficient: float) -> float:
    """Percent change in odds (or rate) for a one-unit step: (e^b - 1) * 100."""
    if not math.isfinite(coefficient):
        raise DomainError("coefficient must be finite")
    return (math.exp(coefficient) - 1.0) * 100.0


def bonferroni(p_values, m: int):
    """min(1, p * m) per entry; m must cover the number of tested coefficients."""
    arr = np.asarray(p_values, dtype=float)
    if np.any((arr < 0) | (arr > 1)):
        raise DomainError("p-values must lie in [0, 1]")
    if m < arr.size:
        raise DomainError(f"m={m} smaller than number of p-values ({arr.size})")
    adjusted = np.minimum(1.0, arr * m)
    if np.isscalar(p_values) or arr.ndim == 0:
        return float(adjusted)
    return adjusted


def pseudo_r2(log_likelihood: float, null_log_likelihood: float, n: int) -> dict[str, float]:
    """McFadden and Nagelkerke pseudo R-squared from fitted and null fits."""
    ll, ll0 = log_likelihood, null_log_likelihood
    if ll < ll0 - 1e-6:
        raise FitConvergenceError(
            f"fitted log-likelihood {ll:.6f} below null {ll0:.6f}")
    ll = max(ll, ll0)
    mcfadden = 0.0 if ll0 == 0 else 1.0 - ll / ll0
    cs = 1.0 - math.exp(2.0 * (ll0 - ll) / n)
    cs_max = 1.0 - math.exp(2.0 * ll0 / n)
    nagelkerke = cs / cs_max if cs_max > 0 else 0.0
    return {"mcfadden": mcfadden, "nagelkerke": nagelkerke}


def _wald_pvalues(coefs: np.ndarray, ses: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(ses > 0, coefs / ses, np.inf * np.sign(coefs))
    return 2.0 * _normal.sf(np.abs(z))


# ---------------------------------------------------------------------------
# log-likelihoods (shared by the solvers and by oracle/finite-difference tests)


def logistic_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    eta = X @ beta
    # log(1 + e^eta) computed stably
    return float(y @ eta - np.sum(np.logaddexp(0.0, eta)))


def multinomial_loglik(X: np.ndarray, y_idx: np.ndarray, B: np.ndarray) -> float:
    """B has one coefficient row per non-baseline class; y_idx 0 = baseline."""
    eta = X @ B.T
    full = np.concatenate([np.zeros((X.shape[0], 1)), eta], axis=1)
    lse = _logsumexp(full)
    picked = full[np.arange(X.shape[0]), y_idx]
    return float(np.sum(picked - lse))


def negbin_loglik(X: np.ndarray, y: np.ndarray, beta: np.ndarray,
                  alpha: float, offsets: np.ndarray | None = None) -> float:
    eta = X @ beta
    if offsets is not None:
        eta = eta + offsets
    mu = np.exp(eta)
    return float(np.sum(
        gammaln(y + alpha) - gammaln(alpha) - gammaln(y + 1.0)
        + alpha * math.log(alpha) + y * eta - (y + alpha) * np.log(alpha + mu)
    ))


def negbin_score(X: np.ndarray, y: np.ndarray, beta: np.ndarray,
                 alpha: float, offsets: np.ndarray | None = None) -> np.ndarray:
    """Analytic gradient of negbin_loglik with respect to beta."""
    eta = X @ beta
    if offsets is not None:
        eta = eta + offsets
    mu = np.exp(eta)
    return X.T @ ((y - mu) * alpha / (alpha + mu))


def _logsumexp(a: np.ndarray) -> np.ndarray:
    m = np.max(a, axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=1, keepdims=True))).ravel()


# ---------------------------------------------------------------------------
# estimators


class LogisticGLM(BaseEstimator):
    """Binary logistic regression via damped Newton on a full design matrix.

    Parameters
    ----------
    tol : float
        Convergence threshold on the score infinity norm.
    max_iter : int
        Newton iteration budget.
    separation_bound : float
        |coefficient| beyond which perfect separation is declared
        (appropriate for unit-scaled designs).
    """

    def __init__(self, tol: float = 1e-8, max_iter: int = 100,
                 separation_bound: float = 30.0):
        self.tol = tol
        self.max_iter = max_iter
        self.separation_bound = separation_bound

    def fit(self, X, y, feature_names: list[str] | None = None):
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise SchemaValidationError("X and y length mismatch")
        if not np.all((y == 0) | (y == 1)):
            raise SchemaValidationError("y must be binary 0/1")
        if y.min() == y.max():
            raise DegenerateDataError("outcome has no variation")
        names = feature_names or [f"x{j}" for j in range(X.shape[1])]

        beta = np.zeros(X.shape[1])
        ll = logistic_loglik(X, y, beta)
        ll_path = [ll]
        grad_norm = np.inf
        H = None
        for iteration in range(1, self.max_iter + 1):
            p = _sigmoid(X @ beta)
            g = X.T @ (y - p)
            grad_norm = float(np.max(np.abs(g)))
            if grad_norm < self.tol:
                break
            w = np.clip(p * (1.0 - p), 1e-10, None)
            H = X.T @ (X * w[:, None])
            delta = _solve_information(H, g, names)
            beta, ll = _damped_update(
                beta, delta, ll, lambda b: logistic_loglik(X, y, b))
            ll_path.append(ll)
            _check_separation(beta, names, self.separation_bound)
        else:
            iteration = self.max_iter

        p = _sigmoid(X @ beta)
        w = np.clip(p * (1.0 - p), 1e-10, None)
        H = X.T @ (X * w[:, None])
        self.coef_ = beta
        self.cov_ = _invert_information(H, names)
        self.se_ = np.sqrt(np.diag(self.cov_))
        self.loglik_ = ll
        self.ll_path_ = ll_path
        self.n_iter_ = iteration
        self.gradient_norm_ = grad_norm
        self.converged_ = grad_norm < self.tol
        self.feature_names_ = names
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        p1 = _sigmoid(X @ self.coef_)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)


class MultinomialGLM(BaseEstimator):
    """Baseline-category multinomial logit with damped Newton updates.

    Fitted coefficients form one block per non-baseline class; the linear
    predictor of the baseline class is fixed at zero.
    """

    def __init__(self, baseline: str = "none", tol: float = 1e-8,
                 max_iter: int = 100, separation_bound: float = 30.0):
        self.baseline = baseline
        self.tol = tol
        self.max_iter = max_iter
        self.separation_bound = separation_bound

    def fit(self, X, y, feature_names: list[str] | None = None):
        X = check_array(X, dtype=float)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise SchemaValidationError("X and y length mismatch")
        classes = sorted({str(v) for v in y})
        if len(classes) < 2:
            raise DegenerateDataError("outcome has fewer than two categories")
        if str(self.baseline) in classes:
            baseline = str(self.baseline)
        else:
            baseline = classes[0]
        others = [c for c in classes if c != baseline]
        self.classes_ = [baseline] + others
        class_to_idx = {c: i for i, c in enumerate(self.classes_)}
        y_idx = np.array([class_to_idx[str(v)] for v in y])

        names = feature_names or [f"x{j}" for j in range(X.shape[1])]
        n, p = X.shape
        k = len(others)
        B = np.zeros((k, p))
        ll = multinomial_loglik(X, y_idx, B)
        ll_path = [ll]
        grad_norm = np.inf
        for iteration in range(1, self.max_iter + 1):
            probs = self._probs(X, B)
            G = np.empty((k, p))
            for c in range(k):
                ind = (y_idx == c + 1).astype(float)
                G[c] = X.T @ (ind - probs[:, c + 1])
            g = G.ravel()
            grad_norm = float(np.max(np.abs(g)))
            if grad_norm < self.tol:
                break
            H = self._hessian(X, probs, k, p)
            flat_names = [f"{others[c]}:{nm}" for c in range(k) for nm in names]
            delta = _solve_information(H, g, flat_names)
            B_flat, ll = _damped_update(
                B.ravel(), delta, ll,
                lambda b: multinomial_loglik(X, y_idx, b.reshape(k, p)))
            B = B_flat.reshape(k, p)
            ll_path.append(ll)
            _check_separation(B.ravel(), flat_names, self.separation_bound)
        else:
            iteration = self.max_iter

        probs = self._probs(X, B)
        H = self._hessian(X, probs, k, p)
        flat_names = [f"{others[c]}:{nm}" for c in range(k) for nm in names]
        self.cov_ = _invert_information(H, flat_names)
        self.coef_ = B
        self.se_ = np.sqrt(np.diag(self.cov_)).reshape(k, p)
        self.loglik_ = ll
        self.ll_path_ = ll_path
        self.n_iter_ = iteration
        self.gradient_norm_ = grad_norm
        self.converged_ = grad_norm < self.tol
        self.feature_names_ = names
        self.n_features_in_ = p
        return self

    def _probs(self, X: np.ndarray, B: np.ndarray) -> np.ndarray:
        eta = np.concatenate(
            [np.zeros((X.shape[0], 1)), X @ B.T], axis=1)
        eta -= eta.max(axis=1, keepdims=True)
        e = np.exp(eta)
        return e / e.sum(axis=1, keepdims=True)

    def _hessian(self, X: np.ndarray, probs: np.ndarray, k: int, p: int) -> np.ndarray:
        H = np.empty((k * p, k * p))
        for c in range(k):
            for d in range(c, k):
                pc = probs[:, c + 1]
                pd = probs[:, d + 1]
                w = pc * ((1.0 if c == d else 0.0) - pd)
                block = X.T @ (X * w[:, None])
                H[c * p:(c + 1) * p, d * p:(d + 1) * p] = block
                if d != c:
                    H[d * p:(d + 1) * p, c * p:(c + 1) * p] = block
        return H

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        return self._probs(X, self.coef_)

    def predict(self, X):
        probs = self.predict_proba(X)
        return np.array([self.classes_[i] for i in np.argmax(probs, axis=1)])


class NegativeBinomialGLM(BaseEstimator):
    """Negative binomial regression (log link, optional exposure offset).

    Var(y) = mu + mu^2 / alpha. For fixed alpha, beta is fit by damped
    Newton with observed information; alpha is then profiled by a
    golden-section search over log(alpha) within [alpha_min, alpha_max].
    """

    def __init__(self, tol: float = 1e-8, max_iter: int = 100,
                 outer_max_iter: int = 200, alpha_min: float = 1e-2,
                 alpha_max: float = 1e6, outer_tol: float = 1e-8):
        self.tol = tol
        self.max_iter = max_iter
        self.outer_max_iter = outer_max_iter
        self.alpha_min = alpha_min
        self.alpha_max = alpha_max
        self.outer_tol = outer_tol

    def fit(self, X, y, offsets=None, feature_names: list[str] | None = None):
        X = check_array(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise SchemaValidationError("X and y length mismatch")
        if np.any(y < 0):
            raise DomainError("negative binomial outcome must be non-negative")
        if np.all(y == 0):
            raise DegenerateDataError("all-zero outcome cannot identify a rate")
        if offsets is not None:
            offsets = np.asarray(offsets, dtype=float).ravel()
            if not np.all(np.isfinite(offsets)):
                raise SchemaValidationError("offsets must be finite")
        names = feature_names or [f"x{j}" for j in range(X.shape[1])]

        profile_cache: dict[float, tuple[float, np.ndarray, int]] = {}

        def profile(log_alpha: float) -> float:
            alpha = math.exp(log_alpha)
            ll, beta, iters = self._fit_beta(X, y, offsets, alpha, names)
            profile_cache[log_alpha] = (ll, beta, iters)
            return ll

        lo, hi = math.log(self.alpha_min), math.log(self.alpha_max)
        log_alpha, outer_iters = _golden_section_max(
            profile, lo, hi, self.outer_tol, self.outer_max_iter)
        if outer_iters >= self.outer_max_iter:
            raise FitConvergenceError(
                f"dispersion search did not converge within "
                f"{self.outer_max_iter} outer iterations "
                f"(bracket [{lo:.3f}, {hi:.3f}], last log-alpha {log_alpha:.6f})")
        alpha = math.exp(log_alpha)
        ll, beta, inner_iters = profile_cache.get(
            log_alpha, (None, None, None))
        if ll is None:
            ll, beta, inner_iters = self._fit_beta(X, y, offsets, alpha, names)

        eta = X @ beta + (offsets if offsets is not None else 0.0)
        mu = np.exp(eta)
        w = alpha * mu * (alpha + y) / (alpha + mu) ** 2
        H = X.T @ (X * w[:, None])
        self.cov_ = _invert_information(H, names)
        self.coef_ = beta
        self.se_ = np.sqrt(np.diag(self.cov_))
        self.alpha_ = alpha
        self.loglik_ = ll
        self.n_iter_ = inner_iters
        self.outer_iter_ = outer_iters
        g = negbin_score(X, y, beta, alpha, offsets)
        self.gradient_norm_ = float(np.max(np.abs(g)))
        self.converged_ = self.gradient_norm_ < max(self.tol * 10, 1e-6)
        self.feature_names_ = names
        self.n_features_in_ = X.shape[1]
        return self

    def _fit_beta(self, X, y, offsets, alpha, names):
        beta = np.zeros(X.shape[1])
        # start the intercept near the observed mean rate when present
        mean_y = float(np.mean(y))
        off_mean = float(np.mean(offsets)) if offsets is not None else 0.0
        if "intercept" in names and mean_y > 0:
            beta[names.index("intercept")] = math.log(mean_y) - off_mean
        ll = negbin_loglik(X, y, beta, alpha, offsets)
        for iteration in range(1, self.max_iter + 1):
            eta = X @ beta + (offsets if offsets is not None else 0.0)
            mu = np.exp(eta)
            g = X.T @ ((y - mu) * alpha / (alpha + mu))
            if float(np.max(np.abs(g))) < self.tol:
                break
            w = alpha * mu * (alpha + y) / (alpha + mu) ** 2
            H = X.T @ (X * w[:, None])
            delta = _solve_information(H, g, names)
            beta, ll = _damped_update(
                beta, delta, ll,
                lambda b: negbin_loglik(X, y, b, alpha, offsets))
        return ll, beta, iteration

    def predict(self, X, offsets=None):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        eta = X @ self.coef_
        if offsets is not None:
            eta = eta + np.asarray(offsets, dtype=float)
        return np.exp(eta)


# ---------------------------------------------------------------------------
# solver plumbing


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _damped_update(theta, delta, current_ll, loglik_fn):
    scale = 1.0
    for _ in range(MAX_HALVINGS):
        candidate = theta + scale * delta
        ll = loglik_fn(candidate)
        if np.isfinite(ll) and ll >= current_ll - 1e-12:
            return candidate, ll
        scale *= 0.5
    return theta, current_ll


def _solve_information(H, g, names):
    try:
        delta = np.linalg.solve(H, g)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(
            f"observed information is singular over columns {names}") from exc
    if not np.all(np.isfinite(delta)):
        raise SingularInformationError("non-finite Newton step (collinear design?)")
    return delta


def _invert_information(H, names):
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise SingularInformationError(
            f"cannot invert observed information over columns {names}") from exc
    return cov


def _check_separation(coefs, names, bound):
    worst = int(np.argmax(np.abs(coefs)))
    if abs(coefs[worst]) > bound:
        raise SeparationError(names[worst], float(coefs[worst]))


def _golden_section_max(f, lo, hi, tol, max_iter):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    iterations = 0
    while (b - a) > tol and iterations < max_iter:
        iterations += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = c if fc >= fd else d
    return x, iterations


# ---------------------------------------------------------------------------
# FitResult assembly


def _assemble_result(model: str, names, coefs, ses, ll, ll0, n, convergence,
                     alpha=None, tested_mask=None, extra=None) -> FitResult:
    coefs = np.asarray(coefs, dtype=float).ravel()
    ses = np.asarray(ses, dtype=float).ravel()
    p_raw = _wald_pvalues(coefs, ses)
    if tested_mask is None:
        tested_mask = np.array([not nm.endswith("intercept") for nm in names])
    m = max(int(tested_mask.sum()), 1)
    p_adj = np.where(tested_mask, np.minimum(1.0, p_raw * m), p_raw)
    return FitResult(
        model=model,
        coefficients={nm: float(v) for nm, v in zip(names, coefs)},
        standard_errors={nm: float(v) for nm, v in zip(names, ses)},
        p_values_raw={nm: float(v) for nm, v in zip(names, p_raw)},
        p_values_bonferroni={nm: float(v) for nm, v in zip(names, p_adj)},
        log_likelihood=float(ll),
        null_log_likelihood=float(ll0),
        pseudo_r2=pseudo_r2(ll, ll0, n),
        n_obs=int(n),
        convergence=convergence,
        dispersion_alpha=alpha,
        extra=extra or {},
    )


def fit_logistic(dm: DesignMatrix, y, **params) -> FitResult:
    """Fit a logistic model plus its intercept-only null; full report."""
    est = LogisticGLM(**params).fit(dm.X, y, feature_names=dm.columns)
    y = np.asarray(y, dtype=float).ravel()
    null = LogisticGLM(**params).fit(
        np.ones((dm.n, 1)), y, feature_names=["intercept"])
    return _assemble_result(
        "logistic", dm.columns, est.coef_, est.se_, est.loglik_, null.loglik_,
        dm.n,
        {"iterations": est.n_iter_, "gradient_norm": est.gradient_norm_,
         "converged": est.converged_},
    )


def fit_multinomial(dm: DesignMatrix, y, baseline: str = "none",
                    required_classes: tuple[str, ...] = (), **params) -> FitResult:
    """Baseline-category multinomial fit with one coefficient block per class."""
    y = np.asarray([str(v) for v in y])
    present = set(y)
    missing = [c for c in required_classes if c not in present]
    if missing:
        raise DegenerateDataError(f"missing outcome categories: {missing}")
    est = MultinomialGLM(baseline=baseline, **params).fit(
        dm.X, y, feature_names=dm.columns)
    null = MultinomialGLM(baseline=baseline, **params).fit(
        np.ones((dm.n, 1)), y, feature_names=["intercept"])
    others = est.classes_[1:]
    names = [f"{c}:{nm}" for c in others for nm in dm.columns]
    return _assemble_result(
        "multinomial", names, est.coef_.ravel(), est.se_.ravel(),
        est.loglik_, null.loglik_, dm.n,
        {"iterations": est.n_iter_, "gradient_norm": est.gradient_norm_,
         "converged": est.converged_},
        extra={"baseline": est.classes_[0], "classes": est.classes_},
    )


def fit_negbin(dm: DesignMatrix, y, **params) -> FitResult:
    """Negative binomial fit with profiled dispersion; offsets ride on dm."""
    est = NegativeBinomialGLM(**params).fit(
        dm.X, y, offsets=dm.offsets, feature_names=dm.columns)
    null = NegativeBinomialGLM(**params).fit(
        np.ones((dm.n, 1)), np.asarray(y, dtype=float),
        offsets=dm.offsets, feature_names=["intercept"])
    return _assemble_result(
        "negbin", dm.columns, est.coef_, est.se_, est.loglik_, null.loglik_,
        dm.n,
        {"iterations": est.n_iter_, "outer_iterations": est.outer_iter_,
         "gradient_norm": est.gradient_norm_, "converged": est.converged_},
        alpha=est.alpha_,
    )
