"""Per-(post, snapshot) regression features, outcome labels, stationary
intervals, descriptive geometric statistics, and multiplicative unit scaling.

Scaling convention: each multiplicative feature x maps to log(x) / log(unit),
so multiplying x by its unit adds exactly 1 to the scaled coordinate. Zeros
are smoothed before the log: a zero count becomes 0.5, and a zero proportion
with denominator n becomes 0.5 / (n + 1). Age is clamped to one minute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .ingest import CommentIndex, FeedSnapshot

MOVE_UP = "up"
MOVE_DOWN = "down"
MOVE_NONE = "none"

SCALED_FEATURES = (
    "age_hours",
    "num_comments",
    "recent_comments",
    "prop_undesired",
    "prop_recent_undesired",
    "score",
    "recent_votes",
    "prop_upvotes",
    "num_subscribers",
)

CONTENT_DUMMIES = ("content_link", "content_text", "content_video")

COUNT_FEATURES = {"num_comments", "recent_comments", "score", "recent_votes",
                  "num_subscribers"}
PROP_FEATURES = {"prop_undesired", "prop_recent_undesired"}

MIN_AGE_HOURS = 1.0 / 60.0
PROP_UPVOTES_FLOOR = 1e-3


@dataclass(frozen=True)
class FeatureRow:
    post_id: str
    captured_at: int
    content_type: str
    rank: int
    age_hours: float
    num_comments: int
    recent_comments: int
    prop_undesired: float
    prop_recent_undesired: float
    score: int
    recent_votes: int | None
    prop_upvotes: float
    num_subscribers: int
    # covariates used by the matching stage
    time_at_rank_minutes: float = 0.0
    num_undesired: int = 0
    title: str | None = None

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "captured_at": self.captured_at,
            "content_type": self.content_type,
            "rank": self.rank,
            "age_hours": self.age_hours,
            "num_comments": self.num_comments,
            "recent_comments": self.recent_comments,
            "prop_undesired": self.prop_undesired,
            "prop_recent_undesired": self.prop_recent_undesired,
            "score": self.score,
            "recent_votes": self.recent_votes,
            "prop_upvotes": self.prop_upvotes,
            "num_subscribers": self.num_subscribers,
            "time_at_rank_minutes": self.time_at_rank_minutes,
            "num_undesired": self.num_undesired,
            "title": self.title,
        }


@dataclass(frozen=True)
class OutcomeLabels:
    in_top_50_next: bool | None
    in_top_25_next: bool | None
    in_top_10_next: bool | None
    movement: str | None
    next_rank: int | None
    new_comments_next: int | None
    new_undesired_next: int | None

    def to_dict(self) -> dict:
        return {
            "in_top_50_next": self.in_top_50_next,
            "in_top_25_next": self.in_top_25_next,
            "in_top_10_next": self.in_top_10_next,
            "movement": self.movement,
            "next_rank": self.next_rank,
            "new_comments_next": self.new_comments_next,
            "new_undesired_next": self.new_undesired_next,
        }


CENSORED_OUTCOME = OutcomeLabels(None, None, None, None, None, None, None)


@dataclass(frozen=True)
class StationaryInterval:
    """A maximal run of consecutive snapshots at one rank.

    delta_t spans [t_start, t_end) where t_end is the feed capture at which
    the run ended (rank change or exit). entry_move/exit_move are signed rank
    deltas (negative = moved up); None marks feed entry/exit or censoring.
    """

    post_id: str
    rank: int
    t_start: int
    t_end: int
    delta_t_minutes: float
    n_comments: int
    n_undesired: int
    entry_move: int | None
    exit_move: int | None

    def to_dict(self) -> dict:
        return {
            "post_id": self.post_id,
            "rank": self.rank,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "delta_t_minutes": self.delta_t_minutes,
            "n_comments": self.n_comments,
            "n_undesired": self.n_undesired,
            "entry_move": self.entry_move,
            "exit_move": self.exit_move,
        }


@dataclass
class PostTimeline:
    """One post's observations across the feed snapshots it appeared in."""

    post_id: str
    created_at: int
    subreddit_id: str
    subscriber_count: int
    content_type: str
    title: str | None
    times: np.ndarray          # captured_at, ascending
    ranks: np.ndarray
    scores: np.ndarray
    prop_upvotes: np.ndarray
    feed_positions: np.ndarray  # index of each observation in the feed stream

    @classmethod
    def collect(cls, snapshots: Sequence[FeedSnapshot],
                post_ids: set[str] | None = None) -> dict[str, "PostTimeline"]:
        rows: dict[str, list] = {}
        static: dict[str, tuple] = {}
        for pos, snap in enumerate(snapshots):
            for p in snap.posts:
                if post_ids is not None and p.post_id not in post_ids:
                    continue
                rows.setdefault(p.post_id, []).append(
                    (snap.captured_at, p.rank, p.score, p.prop_upvotes, pos))
                static[p.post_id] = (p.created_at, p.subreddit_id,
                                     p.subscriber_count, p.content_type, p.title)
        out = {}
        for pid, obs in rows.items():
            created, sub, subs, ctype, title = static[pid]
            arr = np.array([(t, r, s, pos) for t, r, s, _, pos in obs],
                           dtype=np.int64)
            out[pid] = cls(
                post_id=pid, created_at=created, subreddit_id=sub,
                subscriber_count=subs, content_type=ctype, title=title,
                times=arr[:, 0], ranks=arr[:, 1], scores=arr[:, 2],
                prop_upvotes=np.array([o[3] for o in obs], dtype=float),
                feed_positions=arr[:, 3],
            )
        return out


def extract_features(timeline: PostTimeline, index: CommentIndex, obs_idx: int,
                     window_minutes: float = 10.0,
                     snap_tolerance_ms: int = 60_000) -> FeatureRow:
    """Features for one post observation; recency window is [t - w, t)."""
    t = int(timeline.times[obs_idx])
    w_ms = int(round(window_minutes * 60_000))
    pid = timeline.post_id

    num_comments, num_undesired = index.counts_before(pid, t)
    recent = index.count(pid, t - w_ms, t)
    recent_und = index.count_undesired(pid, t - w_ms, t)

    # recent votes are only observable as score deltas between snapshots
    recent_votes: int | None = None
    target = t - w_ms
    j = int(np.searchsorted(timeline.times, target))
    for cand in (j - 1, j):
        if 0 <= cand < len(timeline.times) and cand != obs_idx:
            if abs(int(timeline.times[cand]) - target) <= snap_tolerance_ms:
                recent_votes = abs(int(timeline.scores[obs_idx])
                                   - int(timeline.scores[cand]))
                break

    run_start = obs_idx
    while (run_start > 0
           and timeline.ranks[run_start - 1] == timeline.ranks[obs_idx]
           and timeline.feed_positions[run_start - 1]
           == timeline.feed_positions[run_start] - 1):
        run_start -= 1

    return FeatureRow(
        post_id=pid,
        captured_at=t,
        content_type=timeline.content_type,
        rank=int(timeline.ranks[obs_idx]),
        age_hours=max((t - timeline.created_at) / 3_600_000.0, MIN_AGE_HOURS),
        num_comments=num_comments,
        recent_comments=recent,
        prop_undesired=(num_undesired / num_comments) if num_comments else 0.0,
        prop_recent_undesired=(recent_und / recent) if recent else 0.0,
        score=int(timeline.scores[obs_idx]),
        recent_votes=recent_votes,
        prop_upvotes=float(timeline.prop_upvotes[obs_idx]),
        num_subscribers=timeline.subscriber_count,
        time_at_rank_minutes=(t - int(timeline.times[run_start])) / 60_000.0,
        num_undesired=num_undesired,
        title=timeline.title,
    )


def label_outcomes(timeline: PostTimeline, index: CommentIndex, obs_idx: int,
                   feed_times: Sequence[int]) -> OutcomeLabels:
    """Outcomes against the immediately next feed snapshot.

    A post absent from the next feed snapshot counts as outside every top-N
    interval; its movement and next rank are censored. The final feed
    snapshot censors everything.
    """
    pos = int(timeline.feed_positions[obs_idx])
    if pos + 1 >= len(feed_times):
        return CENSORED_OUTCOME
    t = int(timeline.times[obs_idx])
    t_next = int(feed_times[pos + 1])
    new_c = index.count(timeline.post_id, t, t_next)
    new_u = index.count_undesired(timeline.post_id, t, t_next)

    present_next = (obs_idx + 1 < len(timeline.times)
                    and int(timeline.feed_positions[obs_idx + 1]) == pos + 1)
    if not present_next:
        return OutcomeLabels(False, False, False, None, None, new_c, new_u)
    next_rank = int(timeline.ranks[obs_idx + 1])
    rank = int(timeline.ranks[obs_idx])
    if next_rank < rank:
        movement = MOVE_UP
    elif next_rank > rank:
        movement = MOVE_DOWN
    else:
        movement = MOVE_NONE
    return OutcomeLabels(
        in_top_50_next=next_rank <= 50,
        in_top_25_next=next_rank <= 25,
        in_top_10_next=next_rank <= 10,
        movement=movement,
        next_rank=next_rank,
        new_comments_next=new_c,
        new_undesired_next=new_u,
    )


def merge_stationary_intervals(timeline: PostTimeline, index: CommentIndex,
                               feed_times: Sequence[int]) -> list[StationaryInterval]:
    """Collapse maximal constant-rank runs into exposure intervals.

    Runs are broken by rank changes, by the post leaving the feed, and by
    collection gaps (non-consecutive feed snapshots). A run's exposure ends
    at the next feed capture; the final run is dropped when the stream ends
    before that capture exists (censored exposure).
    """
    n = len(timeline.times)
    intervals: list[StationaryInterval] = []
    i = 0
    while i < n:
        j = i
        while (j + 1 < n
               and timeline.ranks[j + 1] == timeline.ranks[i]
               and timeline.feed_positions[j + 1] == timeline.feed_positions[j] + 1):
            j += 1
        pos_end = int(timeline.feed_positions[j])
        if pos_end + 1 < len(feed_times):
            t_start = int(timeline.times[i])
            t_end = int(feed_times[pos_end + 1])
            contiguous_prev = (
                i > 0
                and int(timeline.feed_positions[i - 1])
                == int(timeline.feed_positions[i]) - 1)
            entry = (int(timeline.ranks[i]) - int(timeline.ranks[i - 1])
                     if contiguous_prev else None)
            contiguous_next = (j + 1 < n
                               and int(timeline.feed_positions[j + 1]) == pos_end + 1)
            exit_ = (int(timeline.ranks[j + 1]) - int(timeline.ranks[j])
                     if contiguous_next else None)
            intervals.append(StationaryInterval(
                post_id=timeline.post_id,
                rank=int(timeline.ranks[i]),
                t_start=t_start,
                t_end=t_end,
                delta_t_minutes=(t_end - t_start) / 60_000.0,
                n_comments=index.count(timeline.post_id, t_start, t_end),
                n_undesired=index.count_undesired(timeline.post_id, t_start, t_end),
                entry_move=entry,
                exit_move=exit_,
            ))
        i = j + 1
    return intervals


@dataclass(frozen=True)
class GeoStats:
    geo_mean: float
    geo_sd: float
    median: float


def geometric_stats(values: Iterable[float]) -> GeoStats:
    """Geometric mean/sd (exp of mean/population-sd of logs) plus the median."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise DomainError("geometric_stats requires at least one value")
    if np.any(arr <= 0):
        raise DomainError("geometric_stats requires strictly positive values")
    logs = np.log(arr)
    return GeoStats(
        geo_mean=float(np.exp(np.mean(logs))),
        geo_sd=float(np.exp(np.std(logs))),
        median=float(np.median(arr)),
    )


DEFAULT_UNITS = {name: 2.0 for name in SCALED_FEATURES}
DEFAULT_UNITS["prop_upvotes"] = 1.05


@dataclass
class UnitTable:
    """Per-feature multiplicative unit plus descriptive geometric statistics."""

    units: dict[str, float]
    stats: dict[str, GeoStats] | None = None

    def __post_init__(self):
        missing = [f for f in SCALED_FEATURES if f not in self.units]
        if missing:
            raise ConfigError(f"unit table missing features: {missing}")
        bad = [f for f, u in self.units.items() if u <= 1.0]
        if bad:
            raise ConfigError(f"units must be > 1: {bad}")

    @classmethod
    def default(cls) -> "UnitTable":
        return cls(units=dict(DEFAULT_UNITS))

    def to_dict(self) -> dict:
        out = {"units": self.units}
        if self.stats is not None:
            out["stats"] = {
                f: {"geo_mean": s.geo_mean, "geo_sd": s.geo_sd, "median": s.median}
                for f, s in self.stats.items()
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "UnitTable":
        stats = None
        if d.get("stats"):
            stats = {f: GeoStats(**s) for f, s in d["stats"].items()}
        return cls(units=dict(d["units"]), stats=stats)


def smoothed_value(row: FeatureRow, feature: str) -> float:
    """The positive value fed to the log transform for one feature."""
    x = getattr(row, feature)
    if feature == "age_hours":
        return max(float(x), MIN_AGE_HOURS)
    if feature == "prop_upvotes":
        return max(float(x), PROP_UPVOTES_FLOOR)
    if feature in PROP_FEATURES:
        denom = (row.num_comments if feature == "prop_undesired"
                 else row.recent_comments)
        return float(x) if x > 0 else 0.5 / (denom + 1)
    # counts; score is clamped at zero before the count rule
    if feature == "score":
        x = max(int(x), 0)
    if x is None:
        raise DomainError(f"feature {feature} unavailable on this row")
    return float(x) if x > 0 else 0.5


def scale_for_regression(row: FeatureRow, units: UnitTable) -> tuple[np.ndarray, list[str]]:
    """Scaled covariate vector: content one-hot (image reference) + log-unit
    transforms of the multiplicative features. Raises DomainError when the
    row lacks recent_votes (caller should exclude such rows)."""
    values = [1.0 if row.content_type == "link" else 0.0,
              1.0 if row.content_type == "text" else 0.0,
              1.0 if row.content_type == "video" else 0.0]
    names = list(CONTENT_DUMMIES)
    for feature in SCALED_FEATURES:
        unit = units.units[feature]
        v = smoothed_value(row, feature)
        values.append(math.log(v) / math.log(unit))
        names.append(feature)
    return np.array(values, dtype=float), names


def unscale_row(vec: np.ndarray, names: Sequence[str], units: UnitTable) -> dict:
    """Invert scale_for_regression back to feature values.

    Zero counts/proportions are recovered exactly (their smoothed encodings
    sit strictly below the smallest attainable positive value).
    """
    by_name = dict(zip(names, vec))
    out: dict[str, float | str] = {}
    if by_name.get("content_link", 0) > 0.5:
        out["content_type"] = "link"
    elif by_name.get("content_text", 0) > 0.5:
        out["content_type"] = "text"
    elif by_name.get("content_video", 0) > 0.5:
        out["content_type"] = "video"
    else:
        out["content_type"] = "image"

    decoded: dict[str, float] = {}
    for feature in SCALED_FEATURES:
        if feature not in by_name:
            continue
        unit = units.units[feature]
        decoded[feature] = unit ** float(by_name[feature])

    for feature in ("num_comments", "recent_comments", "score", "recent_votes",
                    "num_subscribers"):
        if feature in decoded:
            v = decoded[feature]
            out[feature] = 0.0 if v < 0.75 else v
    for feature in PROP_FEATURES:
        if feature not in decoded:
            continue
        denom = out.get("num_comments" if feature == "prop_undesired"
                        else "recent_comments", 0.0)
        v = decoded[feature]
        if denom < 0.5:
            out[feature] = 0.0
        else:
            zero_code = 0.5 / (denom + 1.0)
            min_pos = 1.0 / denom
            out[feature] = 0.0 if v < (zero_code + min_pos) / 2.0 else v
    if "age_hours" in decoded:
        out["age_hours"] = decoded["age_hours"]
    if "prop_upvotes" in decoded:
        v = decoded["prop_upvotes"]
        out["prop_upvotes"] = 0.0 if v <= PROP_UPVOTES_FLOOR * 1.5 else v
    return out


def compute_unit_table(rows: Iterable[FeatureRow],
                       units: dict[str, float] | None = None) -> UnitTable:
    """Unit table with geometric stats over the smoothed feature values."""
    rows = list(rows)
    table = UnitTable(units=dict(units or DEFAULT_UNITS))
    stats = {}
    for feature in SCALED_FEATURES:
        vals = []
        for r in rows:
            if feature == "recent_votes" and r.recent_votes is None:
                continue
            vals.append(smoothed_value(r, feature))
        if vals:
            stats[feature] = geometric_stats(vals)
    table.stats = stats
    return table


@dataclass
class FeatureDataset:
    """Extraction output for one dataset: rows + outcomes + intervals."""

    rows: list[FeatureRow]
    outcomes: list[OutcomeLabels]
    intervals: list[StationaryInterval]

    def records(self) -> Iterable[dict]:
        for row, outcome in zip(self.rows, self.outcomes):
            yield {**row.to_dict(), **outcome.to_dict()}


def extract_dataset(snapshots: Sequence[FeedSnapshot], index: CommentIndex,
                    post_ids: set[str] | None = None,
                    window_minutes: float = 10.0) -> FeatureDataset:
    """Feature rows, outcome labels, and stationary intervals for a stream."""
    feed_times = [s.captured_at for s in snapshots]
    timelines = PostTimeline.collect(snapshots, post_ids)
    rows: list[FeatureRow] = []
    outcomes: list[OutcomeLabels] = []
    intervals: list[StationaryInterval] = []
    for pid in sorted(timelines):
        tl = timelines[pid]
        for i in range(len(tl.times)):
            rows.append(extract_features(tl, index, i, window_minutes))
            outcomes.append(label_outcomes(tl, index, i, feed_times))
        intervals.extend(merge_stationary_intervals(tl, index, feed_times))
    return FeatureDataset(rows=rows, outcomes=outcomes, intervals=intervals)


def feature_row_from_dict(d: dict) -> FeatureRow:
    return FeatureRow(
        post_id=d["post_id"],
        captured_at=d["captured_at"],
        content_type=d["content_type"],
        rank=d["rank"],
        age_hours=d["age_hours"],
        num_comments=d["num_comments"],
        recent_comments=d["recent_comments"],
        prop_undesired=d["prop_undesired"],
        prop_recent_undesired=d["prop_recent_undesired"],
        score=d["score"],
        recent_votes=d["recent_votes"],
        prop_upvotes=d["prop_upvotes"],
        num_subscribers=d["num_subscribers"],
        time_at_rank_minutes=d.get("time_at_rank_minutes", 0.0),
        num_undesired=d.get("num_undesired", 0),
        title=d.get("title"),
    )


def outcome_from_dict(d: dict) -> OutcomeLabels:
    return OutcomeLabels(
        in_top_50_next=d.get("in_top_50_next"),
        in_top_25_next=d.get("in_top_25_next"),
        in_top_10_next=d.get("in_top_10_next"),
        movement=d.get("movement"),
        next_rank=d.get("next_rank"),
        new_comments_next=d.get("new_comments_next"),
        new_undesired_next=d.get("new_undesired_next"),
    )
