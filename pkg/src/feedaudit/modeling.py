"""Assemble regression-ready designs from extracted feature datasets.

Three descriptive families:

  rq1  -- tenure: for each top-N interval (50/25/10), a logistic design over
          the snapshots from a post's first entry into that interval onward;
          outcome is membership in the interval at the next snapshot.
  rq2  -- movement: a multinomial design (up/down vs none) with per-rank
          dummies so movement probabilities can be profiled by rank, plus
          the ordinal next-rank data (rank-changed snapshots only).
  rq3  -- engagement: stationary intervals duplicated per comment class
          (non-undesired / undesired) with a class indicator interacting
          with every column, per-rank intercepts, and log-duration offsets.

Rows missing the recent-votes delta (no snapshot ten minutes earlier) are
excluded from designs that scale that feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError
from .features import (
    CONTENT_DUMMIES,
    SCALED_FEATURES,
    FeatureRow,
    OutcomeLabels,
    StationaryInterval,
    UnitTable,
    scale_for_regression,
)
from .glm import DesignMatrix

UND_PREFIX = "und_x_"


def _scalable(row: FeatureRow) -> bool:
    return row.recent_votes is not None


def _scaled_block(rows: list[FeatureRow], units: UnitTable) -> tuple[np.ndarray, list[str]]:
    mats = []
    names = None
    for r in rows:
        vec, names = scale_for_regression(r, units)
        mats.append(vec)
    return np.vstack(mats), list(names)


def _drop_constant_columns(X: np.ndarray, names: list[str]) -> tuple[np.ndarray, list[str], list[str]]:
    """Remove columns that carry no information on this dataset.

    All-zero columns (e.g. a content type never observed) always go; other
    constant columns go only when an explicit intercept column is present.
    """
    has_intercept = "intercept" in names
    keep, dropped = [], []
    for j, nm in enumerate(names):
        col = X[:, j]
        constant = col.max() == col.min()
        if constant and nm != "intercept" and (col.max() == 0.0 or has_intercept):
            dropped.append(nm)
        else:
            keep.append(j)
    return X[:, keep], [names[j] for j in keep], dropped


@dataclass
class Rq1Design:
    top_n: int
    dm: DesignMatrix
    y: np.ndarray
    n_posts: int


def build_rq1(rows: list[FeatureRow], outcomes: list[OutcomeLabels],
              units: UnitTable, top_n: int) -> Rq1Design:
    """Design for one tenure model, restricted to each post's snapshots from
    its first entry into the top-N interval onward."""
    first_entry: dict[str, int] = {}
    for row in rows:
        if row.rank <= top_n:
            t = first_entry.get(row.post_id)
            if t is None or row.captured_at < t:
                first_entry[row.post_id] = row.captured_at
    keep_rows, ys = [], []
    attr = {50: "in_top_50_next", 25: "in_top_25_next", 10: "in_top_10_next"}[top_n]
    for row, out in zip(rows, outcomes):
        entry = first_entry.get(row.post_id)
        if entry is None or row.captured_at < entry:
            continue
        y = getattr(out, attr)
        if y is None or not _scalable(row):
            continue
        keep_rows.append(row)
        ys.append(bool(y))
    if not keep_rows:
        raise DegenerateDataError(f"no usable snapshots for the top-{top_n} model")
    X, names = _scaled_block(keep_rows, units)
    X = np.column_stack([np.ones(len(keep_rows)), X])
    X, columns, _ = _drop_constant_columns(X, ["intercept"] + names)
    dm = DesignMatrix(X=X, columns=columns)
    return Rq1Design(top_n=top_n, dm=dm, y=np.asarray(ys),
                     n_posts=len({r.post_id for r in keep_rows}))


@dataclass
class Rq2MoveDesign:
    dm: DesignMatrix
    y: np.ndarray
    ranks: list[int]
    scaled_means: dict[str, float]


def _rank_dummies(rank_values: np.ndarray, ranks: list[int],
                  drop_first: bool) -> tuple[np.ndarray, list[str]]:
    use = ranks[1:] if drop_first else ranks
    cols = np.zeros((rank_values.size, len(use)))
    for j, r in enumerate(use):
        cols[:, j] = rank_values == r
    return cols, [f"rank_{r}" for r in use]


def build_rq2_move(rows: list[FeatureRow], outcomes: list[OutcomeLabels],
                   units: UnitTable) -> Rq2MoveDesign:
    """Multinomial movement design: intercept, rank dummies (first observed
    rank is the reference), content dummies, scaled features."""
    keep_rows, ys = [], []
    for row, out in zip(rows, outcomes):
        if out.movement is None or not _scalable(row):
            continue
        keep_rows.append(row)
        ys.append(out.movement)
    if not keep_rows:
        raise DegenerateDataError("no snapshots with observed movement")
    X, names = _scaled_block(keep_rows, units)
    ranks = sorted({r.rank for r in keep_rows})
    rank_vals = np.asarray([r.rank for r in keep_rows])
    rk_cols, rk_names = _rank_dummies(rank_vals, ranks, drop_first=True)
    full = np.column_stack([np.ones(len(keep_rows)), rk_cols, X])
    full, columns, _ = _drop_constant_columns(
        full, ["intercept"] + rk_names + names)
    dm = DesignMatrix(X=full, columns=columns)
    means = {nm: float(v) for nm, v in zip(names, X.mean(axis=0))
             if nm in columns}
    return Rq2MoveDesign(dm=dm, y=np.asarray(ys, dtype=object), ranks=ranks,
                         scaled_means=means)


@dataclass
class Rq2OrdinalData:
    current: np.ndarray
    next_rank: np.ndarray
    X: np.ndarray
    feature_names: list[str]
    n_ranks: int


def build_rq2_ordinal(rows: list[FeatureRow], outcomes: list[OutcomeLabels],
                      units: UnitTable, n_ranks: int) -> Rq2OrdinalData:
    """Rank-changed snapshots only, with centered scaled features."""
    keep_rows, cur, nxt = [], [], []
    for row, out in zip(rows, outcomes):
        if out.next_rank is None or out.next_rank == row.rank:
            continue
        if not _scalable(row):
            continue
        keep_rows.append(row)
        cur.append(row.rank)
        nxt.append(out.next_rank)
    if not keep_rows:
        raise DegenerateDataError("no rank-changed snapshots")
    X, names = _scaled_block(keep_rows, units)
    X = X - X.mean(axis=0)  # keep rank intercepts near the cut points
    return Rq2OrdinalData(current=np.asarray(cur), next_rank=np.asarray(nxt),
                          X=X, feature_names=names, n_ranks=n_ranks)


@dataclass
class Rq3Design:
    dm: DesignMatrix
    y: np.ndarray
    ranks: list[int]
    scaled_means: dict[str, float]
    n_intervals: int


def build_rq3(intervals: list[StationaryInterval], rows: list[FeatureRow],
              units: UnitTable) -> Rq3Design:
    """Engagement design: each interval contributes a non-undesired row and
    an undesired row; the class indicator interacts with every column."""
    by_key = {(r.post_id, r.captured_at): r for r in rows}
    keep: list[tuple[StationaryInterval, FeatureRow]] = []
    for iv in intervals:
        row = by_key.get((iv.post_id, iv.t_start))
        if row is None or not _scalable(row):
            continue
        keep.append((iv, row))
    if not keep:
        raise DegenerateDataError("no stationary intervals with features")
    feat_rows = [row for _, row in keep]
    X, names = _scaled_block(feat_rows, units)
    ranks = sorted({iv.rank for iv, _ in keep})
    rank_vals = np.asarray([iv.rank for iv, _ in keep])
    rk_cols, rk_names = _rank_dummies(rank_vals, ranks, drop_first=False)
    base = np.column_stack([rk_cols, X])
    base_names = rk_names + names
    base, base_names, _ = _drop_constant_columns(base, base_names)

    # duplicate: class 0 = non-undesired counts, class 1 = undesired counts
    X_full = np.vstack([
        np.column_stack([base, np.zeros_like(base)]),
        np.column_stack([base, base]),
    ])
    columns = base_names + [UND_PREFIX + nm for nm in base_names]
    y = np.concatenate([
        np.asarray([iv.n_comments - iv.n_undesired for iv, _ in keep], dtype=float),
        np.asarray([iv.n_undesired for iv, _ in keep], dtype=float),
    ])
    offsets = np.concatenate([
        np.log([iv.delta_t_minutes for iv, _ in keep]),
        np.log([iv.delta_t_minutes for iv, _ in keep]),
    ])
    dm = DesignMatrix(X=X_full, columns=columns, offsets=offsets)
    means = {nm: float(v) for nm, v in zip(names, X.mean(axis=0))}
    return Rq3Design(dm=dm, y=y, ranks=ranks, scaled_means=means,
                     n_intervals=len(keep))
