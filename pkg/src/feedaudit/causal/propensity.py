"""Propensity scores from boosted decision stumps, trained from scratch.

The classifier is discrete AdaBoost over depth-1 stumps with an exact
greedy threshold search (presorted columns, cumulative weighted errors),
so fitting is deterministic given the data order. Scores come from a
logistic transform of the ensemble margin and live strictly inside (0, 1).
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ..errors import DegenerateDataError

EPS = 1e-10


@dataclass(frozen=True)
class DecisionStump:
    feature_idx: int
    threshold: float
    polarity: int  # +1: predict +1 above threshold; -1: predict +1 below
    weight: float

    def predict(self, X: np.ndarray) -> np.ndarray:
        above = X[:, self.feature_idx] > self.threshold
        pred = np.where(above, self.polarity, -self.polarity)
        return pred.astype(float)


class AdaBoostPropensity(ClassifierMixin, BaseEstimator):
    """AdaBoost over decision stumps with propensity-style scoring.

    Parameters
    ----------
    n_rounds : int
        Boosting rounds (stumps).
    random_state : int
        Stored for interface stability; the exact greedy stump search has
        no random component, so fits are reproducible regardless.
    """

    def __init__(self, n_rounds: int = 100, random_state: int = 0):
        self.n_rounds = n_rounds
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        y = np.asarray(y).ravel()
        classes = np.unique(y)
        if classes.size < 2:
            raise DegenerateDataError("propensity model needs both classes")
        if classes.size > 2:
            raise DegenerateDataError("propensity model is binary only")
        self.classes_ = classes
        y_signed = np.where(y == classes[1], 1.0, -1.0)
        n, p = X.shape

        orders = [np.argsort(X[:, j], kind="stable") for j in range(p)]
        sorted_vals = [X[orders[j], j] for j in range(p)]
        # a cut is only meaningful between two distinct consecutive values
        valid_cuts = [sv[:-1] < sv[1:] for sv in sorted_vals]

        w = np.full(n, 1.0 / n)
        self.stumps_: list[DecisionStump] = []
        for _ in range(self.n_rounds):
            stump, err = self._best_stump(
                X, y_signed, w, orders, sorted_vals, valid_cuts)
            if stump is None:
                break
            err = min(max(err, EPS), 1.0 - EPS)
            alpha = 0.5 * math.log((1.0 - err) / err)
            if alpha <= 0:
                break
            stump = DecisionStump(stump.feature_idx, stump.threshold,
                                  stump.polarity, alpha)
            self.stumps_.append(stump)
            pred = stump.predict(X)
            w *= np.exp(-alpha * y_signed * pred)
            w /= w.sum()
            if err <= EPS:
                break  # training data perfectly separated
        self.n_features_in_ = p
        return self

    def _best_stump(self, X, y_signed, w, orders, sorted_vals, valid_cuts):
        n, p = X.shape
        w_pos_total = float(np.sum(w[y_signed > 0]))
        best = (np.inf, -1, 0.0, 1)  # err, feature, threshold, polarity
        for j in range(p):
            order = orders[j]
            sv = sorted_vals[j]
            valid = valid_cuts[j]
            if not valid.any():
                continue
            wp = np.where(y_signed[order] > 0, w[order], 0.0)
            cum_pos = np.cumsum(wp)[:-1]
            cum_all = np.cumsum(w[order])[:-1]
            cum_neg = cum_all - cum_pos
            # polarity +1 predicts +1 strictly above the cut:
            # error = positives at/below cut + negatives above it
            err_plus = cum_pos + (1.0 - w_pos_total - cum_neg)
            k_lo = int(np.argmin(np.where(valid, err_plus, np.inf)))
            k_hi = int(np.argmax(np.where(valid, err_plus, -np.inf)))
            if valid[k_lo] and err_plus[k_lo] < best[0]:
                thr = 0.5 * (sv[k_lo] + sv[k_lo + 1])
                best = (float(err_plus[k_lo]), j, thr, 1)
            if valid[k_hi] and 1.0 - err_plus[k_hi] < best[0]:
                thr = 0.5 * (sv[k_hi] + sv[k_hi + 1])
                best = (float(1.0 - err_plus[k_hi]), j, thr, -1)
        if best[1] < 0 or best[0] >= 0.5:
            return None, best[0]
        return DecisionStump(best[1], best[2], best[3], 0.0), best[0]

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "stumps_")
        X = check_array(X, dtype=float)
        margin = np.zeros(X.shape[0])
        for stump in self.stumps_:
            margin += stump.weight * stump.predict(X)
        return margin

    def predict_proba(self, X) -> np.ndarray:
        p1 = expit(2.0 * self.decision_function(X))
        p1 = np.clip(p1, 1e-12, 1.0 - 1e-12)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X) -> np.ndarray:
        p = self.predict_proba(X)[:, 1]
        return np.where(p >= 0.5, self.classes_[1], self.classes_[0])

    def propensity(self, X) -> np.ndarray:
        """P(treated | covariates) estimate in (0, 1)."""
        return self.predict_proba(X)[:, 1]


# ---------------------------------------------------------------------------
# covariates


@dataclass
class CovariateMatrix:
    X: np.ndarray
    names: list[str]

    @property
    def n(self) -> int:
        return self.X.shape[0]


_TOKEN_RE = re.compile(r"\S+")


def title_bigrams(title: str | None) -> set[str]:
    if not title:
        return set()
    toks = [t.lower() for t in _TOKEN_RE.findall(title)]
    return {f"{a} {b}" for a, b in zip(toks, toks[1:])}


def top_bigrams(titles, n_bigrams: int) -> list[str]:
    """Most frequent title bigrams by document frequency, ties by text."""
    df = Counter()
    for title in titles:
        df.update(title_bigrams(title))
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))
    return [bg for bg, _ in ranked[:n_bigrams]]


def build_covariates(rows, n_bigrams: int = 200,
                     vocabulary: list[str] | None = None) -> CovariateMatrix:
    """Matching covariates: age, title bigram indicators, rank, time at rank,
    comment counts, undesired counts, and overall/undesired comment rates."""
    rows = list(rows)
    if vocabulary is None:
        vocabulary = top_bigrams((r.title for r in rows), n_bigrams)
    base_names = ["age_hours", "rank", "time_at_rank_minutes", "num_comments",
                  "num_undesired", "comment_rate", "undesired_comment_rate"]
    names = base_names + [f"bigram:{bg}" for bg in vocabulary]
    X = np.zeros((len(rows), len(names)))
    bigram_pos = {bg: i + len(base_names) for i, bg in enumerate(vocabulary)}
    for i, r in enumerate(rows):
        age = max(r.age_hours, 1e-9)
        X[i, 0] = r.age_hours
        X[i, 1] = r.rank
        X[i, 2] = r.time_at_rank_minutes
        X[i, 3] = r.num_comments
        X[i, 4] = r.num_undesired
        X[i, 5] = r.num_comments / age
        X[i, 6] = r.num_undesired / age
        for bg in title_bigrams(r.title):
            pos = bigram_pos.get(bg)
            if pos is not None:
                X[i, pos] = 1.0
    return CovariateMatrix(X=X, names=names)
