"""Parse, validate, persist, and sample feed snapshot and comment streams.

File formats (one JSON object per line):

feed line:
    {"captured_at": <ms>, "posts": [{"post_id", "rank", "score",
     "num_comments", "created_at", "subreddit_id", "subscriber_count",
     "content_type", "prop_upvotes", ...}]}

comment line:
    {"comment_id", "post_id", "created_at", "slightly_toxic",
     "highly_toxic", "non_toxic", "removed"}

Unknown fields are ignored. Timestamps are UTC integer milliseconds.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    LabelingError,
    SamplingError,
    SchemaValidationError,
    SnapshotParseError,
)
from .jsonio import dumps, iter_jsonl, write_json, write_jsonl

log = logging.getLogger(__name__)

CONTENT_TYPES = ("image", "link", "text", "video")


@dataclass(frozen=True)
class PostSnapshot:
    post_id: str
    rank: int
    score: int
    num_comments: int
    created_at: int
    subreddit_id: str
    subscriber_count: int
    content_type: str
    prop_upvotes: float
    title: str | None = None


@dataclass(frozen=True)
class FeedSnapshot:
    captured_at: int
    posts: tuple[PostSnapshot, ...]

    def to_dict(self) -> dict:
        posts = []
        for p in self.posts:
            rec = {
                "post_id": p.post_id,
                "rank": p.rank,
                "score": p.score,
                "num_comments": p.num_comments,
                "created_at": p.created_at,
                "subreddit_id": p.subreddit_id,
                "subscriber_count": p.subscriber_count,
                "content_type": p.content_type,
                "prop_upvotes": p.prop_upvotes,
            }
            if p.title is not None:
                rec["title"] = p.title
            posts.append(rec)
        return {"captured_at": self.captured_at, "posts": posts}


@dataclass(frozen=True)
class CommentRecord:
    comment_id: str
    post_id: str
    created_at: int
    slightly_toxic: float | None
    highly_toxic: float | None
    non_toxic: float | None
    removed: bool
    undesired: bool

    def to_dict(self) -> dict:
        return {
            "comment_id": self.comment_id,
            "post_id": self.post_id,
            "created_at": self.created_at,
            "slightly_toxic": self.slightly_toxic,
            "highly_toxic": self.highly_toxic,
            "non_toxic": self.non_toxic,
            "removed": self.removed,
            "undesired": self.undesired,
        }


def label_undesired(slightly_toxic: float | None, highly_toxic: float | None,
                    removed: bool | None) -> bool:
    """True iff the comment was removed or either toxicity score exceeds 0.5."""
    if removed:
        return True
    if slightly_toxic is None and highly_toxic is None:
        raise LabelingError(
            "cannot label comment: no toxicity scores and no removal flag"
        )
    return (slightly_toxic or 0.0) > 0.5 or (highly_toxic or 0.0) > 0.5


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaValidationError(f"{where}: missing field {key!r}")
    return obj[key]


def _check_score(value, name: str, where: str) -> float | None:
    if value is None:
        return None
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise SchemaValidationError(f"{where}: {name}={value} outside [0, 1]")
    return value


def parse_feed_snapshot(line: str) -> FeedSnapshot:
    """Parse and validate one feed snapshot line.

    Raises SnapshotParseError (with byte offset) for malformed JSON and
    SchemaValidationError for rank gaps/duplicates and range violations.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise SnapshotParseError(f"malformed JSON: {exc.msg}",
                                 byte_offset=exc.pos) from exc
    if not isinstance(obj, dict):
        raise SchemaValidationError("feed snapshot line must be a JSON object")
    captured_at = int(_require(obj, "captured_at", "feed snapshot"))
    raw_posts = _require(obj, "posts", "feed snapshot")
    posts = []
    seen_ranks: set[int] = set()
    for i, rec in enumerate(raw_posts):
        where = f"post[{i}]"
        rank = int(_require(rec, "rank", where))
        if rank < 1:
            raise SchemaValidationError(f"{where}: rank {rank} < 1")
        if rank in seen_ranks:
            raise SchemaValidationError(f"duplicate rank {rank}")
        seen_ranks.add(rank)
        num_comments = int(_require(rec, "num_comments", where))
        if num_comments < 0:
            raise SchemaValidationError(f"{where}: num_comments < 0")
        prop_upvotes = float(_require(rec, "prop_upvotes", where))
        if not (0.0 <= prop_upvotes <= 1.0):
            raise SchemaValidationError(
                f"{where}: prop_upvotes={prop_upvotes} outside [0, 1]")
        created_at = int(_require(rec, "created_at", where))
        if created_at > captured_at:
            raise SchemaValidationError(
                f"{where}: created_at {created_at} after captured_at {captured_at}")
        content_type = str(_require(rec, "content_type", where))
        if content_type not in CONTENT_TYPES:
            raise SchemaValidationError(
                f"{where}: unknown content_type {content_type!r}")
        posts.append(PostSnapshot(
            post_id=str(_require(rec, "post_id", where)),
            rank=rank,
            score=int(_require(rec, "score", where)),
            num_comments=num_comments,
            created_at=created_at,
            subreddit_id=str(_require(rec, "subreddit_id", where)),
            subscriber_count=int(_require(rec, "subscriber_count", where)),
            content_type=content_type,
            prop_upvotes=prop_upvotes,
            title=rec.get("title"),
        ))
    for expect in range(1, len(posts) + 1):
        if expect not in seen_ranks:
            raise SchemaValidationError(f"rank gap: missing rank {expect}")
    posts.sort(key=lambda p: p.rank)
    return FeedSnapshot(captured_at=captured_at, posts=tuple(posts))


def parse_comment_record(obj: dict | str) -> CommentRecord:
    """Parse one comment object (or JSONL line) and derive its undesired label."""
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise SnapshotParseError(f"malformed JSON: {exc.msg}",
                                     byte_offset=exc.pos) from exc
    where = "comment"
    slightly = _check_score(obj.get("slightly_toxic"), "slightly_toxic", where)
    highly = _check_score(obj.get("highly_toxic"), "highly_toxic", where)
    non_toxic = _check_score(obj.get("non_toxic"), "non_toxic", where)
    removed = obj.get("removed")
    undesired = label_undesired(slightly, highly, removed)
    return CommentRecord(
        comment_id=str(_require(obj, "comment_id", where)),
        post_id=str(_require(obj, "post_id", where)),
        created_at=int(_require(obj, "created_at", where)),
        slightly_toxic=slightly,
        highly_toxic=highly,
        non_toxic=non_toxic,
        removed=bool(removed),
        undesired=undesired,
    )


def read_feed_stream(path: str | Path) -> Iterator[FeedSnapshot]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield parse_feed_snapshot(line)


def sample_posts(post_ids: Iterable[str], n: int, seed: int) -> set[str]:
    """Uniform sample of n unique post ids without replacement, seed-stable."""
    unique = sorted(set(post_ids))
    if n > len(unique):
        raise SamplingError(
            f"requested sample of {n} exceeds population of {len(unique)}")
    if n == 0:
        return set()
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(unique), size=n, replace=False)
    return {unique[int(i)] for i in chosen}


class CommentIndex:
    """Immutable per-post time index over labeled comments.

    Window counts over [t1, t2) run in O(log n) per query via binary search
    on per-post sorted timestamp arrays with undesired prefix sums.
    """

    def __init__(self, comments: Iterable[CommentRecord],
                 post_ids: set[str] | None = None):
        buckets: dict[str, list[tuple[int, bool]]] = {}
        orphans = 0
        total = 0
        for c in comments:
            total += 1
            if post_ids is not None and c.post_id not in post_ids:
                orphans += 1
                continue
            buckets.setdefault(c.post_id, []).append((c.created_at, c.undesired))
        self._times: dict[str, np.ndarray] = {}
        self._und_cum: dict[str, np.ndarray] = {}
        for pid, rows in buckets.items():
            rows.sort(key=lambda r: r[0])
            times = np.array([r[0] for r in rows], dtype=np.int64)
            und = np.array([r[1] for r in rows], dtype=np.int64)
            self._times[pid] = times
            self._und_cum[pid] = np.concatenate(([0], np.cumsum(und)))
        self.orphan_count = orphans
        self.total_comments = total
        if orphans:
            log.info("comment index: dropped %d orphan comments (of %d)",
                     orphans, total)

    def post_ids(self) -> list[str]:
        return sorted(self._times)

    def count(self, post_id: str, t1: int | float, t2: int | float) -> int:
        """Comments on post_id with created_at in [t1, t2)."""
        times = self._times.get(post_id)
        if times is None:
            return 0
        lo = int(np.searchsorted(times, t1, side="left"))
        hi = int(np.searchsorted(times, t2, side="left"))
        return hi - lo

    def count_undesired(self, post_id: str, t1: int | float, t2: int | float) -> int:
        times = self._times.get(post_id)
        if times is None:
            return 0
        lo = int(np.searchsorted(times, t1, side="left"))
        hi = int(np.searchsorted(times, t2, side="left"))
        cum = self._und_cum[post_id]
        return int(cum[hi] - cum[lo])

    def counts_before(self, post_id: str, t: int | float) -> tuple[int, int]:
        """(total, undesired) comments strictly before t."""
        times = self._times.get(post_id)
        if times is None:
            return 0, 0
        hi = int(np.searchsorted(times, t, side="left"))
        return hi, int(self._und_cum[post_id][hi])


@dataclass(frozen=True)
class PollerConfig:
    endpoint_url: str
    interval_minutes: float
    max_retries: int = 3
    backoff_base_seconds: float = 1.0
    output_path: str | Path = "captures.jsonl"

    def __post_init__(self):
        if self.interval_minutes <= 0:
            raise SchemaValidationError("poll interval must be > 0")
        if self.max_retries < 0:
            raise SchemaValidationError("max_retries must be >= 0")


def poll_endpoint(cfg: PollerConfig, n_cycles: int,
                  fetch: Callable[[str], str] | None = None,
                  sleep: Callable[[float], None] = time.sleep,
                  clock: Callable[[], float] = time.monotonic) -> int:
    """Fetch the endpoint once per interval, appending one JSON line per success.

    A failed or malformed fetch is retried with exponential backoff
    (base * 2^attempt) up to max_retries, then logged and skipped. Retries
    never spill past the next scheduled capture. Returns lines appended.
    """
    if fetch is None:
        fetch = _http_fetch
    interval_s = cfg.interval_minutes * 60.0
    start = clock()
    appended = 0
    with open(cfg.output_path, "a", encoding="utf-8") as out:
        for cycle in range(n_cycles):
            scheduled = start + cycle * interval_s
            now = clock()
            if scheduled > now:
                sleep(scheduled - now)
            deadline = start + (cycle + 1) * interval_s
            body = _fetch_with_retries(cfg, fetch, sleep, clock, deadline)
            if body is None:
                continue
            out.write(body)
            out.write("\n")
            out.flush()
            appended += 1
    return appended


def _fetch_with_retries(cfg, fetch, sleep, clock, deadline) -> str | None:
    for attempt in range(cfg.max_retries + 1):
        try:
            raw = fetch(cfg.endpoint_url)
            obj = json.loads(raw)
            if "captured_at" not in obj:
                obj = {"captured_at": int(time.time() * 1000), **obj}
            return dumps(obj)
        except Exception as exc:
            if attempt >= cfg.max_retries:
                log.error("capture failed after %d retries: %s",
                          cfg.max_retries, exc)
                return None
            delay = cfg.backoff_base_seconds * (2 ** attempt)
            if clock() + delay >= deadline:
                log.error("capture abandoned before next interval: %s", exc)
                return None
            log.warning("capture attempt %d failed (%s); retrying in %.1fs",
                        attempt + 1, exc, delay)
            sleep(delay)
    return None


def _http_fetch(url: str) -> str:
    import requests

    resp = requests.get(url, timeout=30)
    resp.raise_for_status()
    return resp.text


@dataclass
class IngestReport:
    n_feed_snapshots: int = 0
    n_unique_posts: int = 0
    n_sampled_posts: int = 0
    n_comments: int = 0
    n_orphan_comments: int = 0
    gaps: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_feed_snapshots": self.n_feed_snapshots,
            "n_unique_posts": self.n_unique_posts,
            "n_sampled_posts": self.n_sampled_posts,
            "n_comments": self.n_comments,
            "n_orphan_comments": self.n_orphan_comments,
            "gaps": self.gaps,
        }


def find_gaps(captured_ats: Sequence[int], factor: float = 1.5) -> list[dict]:
    """Collection gaps: inter-snapshot intervals exceeding factor * median."""
    if len(captured_ats) < 3:
        return []
    diffs = np.diff(np.asarray(captured_ats, dtype=np.int64))
    med = float(np.median(diffs))
    gaps = []
    for i, d in enumerate(diffs):
        if d > factor * med:
            gaps.append({"after_index": i, "from_ms": int(captured_ats[i]),
                         "to_ms": int(captured_ats[i + 1]), "gap_ms": int(d)})
    return gaps


def ingest_dataset(feed_path: str | Path, comments_path: str | Path,
                   sample_n: int, seed: int, out_dir: str | Path) -> IngestReport:
    """Validate streams, sample posts, label comments, and persist a dataset dir.

    The output directory holds snapshots.jsonl (validated, canonical),
    comments_labeled.jsonl (sampled posts only), sample.json, and report.json.
    It is the unit the feature extractor consumes.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    snapshots = list(read_feed_stream(feed_path))
    captured = [s.captured_at for s in snapshots]
    if any(b < a for a, b in zip(captured, captured[1:])):
        raise SchemaValidationError("captured_at not monotone within feed stream")

    all_ids: set[str] = set()
    for snap in snapshots:
        all_ids.update(p.post_id for p in snap.posts)
    # sample_n < 0 means "keep every observed post"
    n = len(all_ids) if sample_n < 0 else sample_n
    sampled = sample_posts(all_ids, n, seed)

    comments = []
    orphans = 0
    with open(comments_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = parse_comment_record(line)
            if rec.post_id in sampled:
                comments.append(rec)
            else:
                orphans += 1

    write_jsonl(out / "snapshots.jsonl", (s.to_dict() for s in snapshots))
    write_jsonl(out / "comments_labeled.jsonl", (c.to_dict() for c in comments))
    write_json(out / "sample.json",
               {"seed": seed, "n": len(sampled), "post_ids": sorted(sampled)})
    report = IngestReport(
        n_feed_snapshots=len(snapshots),
        n_unique_posts=len(all_ids),
        n_sampled_posts=len(sampled),
        n_comments=len(comments),
        n_orphan_comments=orphans,
        gaps=find_gaps(captured),
    )
    write_json(out / "report.json", report.to_dict())
    return report


def load_dataset(dataset_dir: str | Path) -> tuple[list[FeedSnapshot], CommentIndex, set[str]]:
    """Load a dataset directory written by ingest_dataset."""
    d = Path(dataset_dir)
    snapshots = list(read_feed_stream(d / "snapshots.jsonl"))
    sample = json.loads((d / "sample.json").read_text())
    sampled = set(sample["post_ids"])
    comments = (parse_comment_record(obj)
                for obj in iter_jsonl(d / "comments_labeled.jsonl"))
    index = CommentIndex(comments, post_ids=sampled)
    return snapshots, index, sampled
