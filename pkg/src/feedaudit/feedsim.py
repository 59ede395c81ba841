"""Deterministic discrete-time simulator of a ranked feed.

Produces the same JSONL snapshot/comment streams the ingest layer consumes,
plus a per-tick truth log of each post's latent hot score, engagement rate,
and effect-exposure flags. Injectable effects let the analysis pipeline be
validated against known ground truth.

The ranking rule is an explicit parametric hot score (recent comments, recent
votes, log score, age decay, noise). Posts pushed below the feed cutoff keep
evolving and may re-enter; posts stuck outside the feed for long enough are
retired to bound memory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, DomainError
from .jsonio import write_jsonl

CONTENT_TYPES = ("image", "link", "text", "video")

EFFECT_KINDS = (
    "comment_rate_boost_on_climb",
    "tenure_boost_from_comments",
    "undesired_rate_shift",
)

TRIGGER_KINDS = (
    "always",
    "climbed",
    "rank_at_most",
    "recent_comments_at_least",
    "post_ids",
)


@dataclass(frozen=True)
class TriggerSpec:
    """Declarative predicate over a post's state.

    kinds:
      always                    -- fires every tick
      climbed                   -- last rank change moved the post up by at
                                   least `threshold` ranks (persists while the
                                   post stays at the rank the climb reached)
      rank_at_most              -- current rank <= threshold
      recent_comments_at_least  -- comments in the hot window >= threshold
      post_ids                  -- post id is in `post_ids`
    """

    kind: str = "climbed"
    threshold: float = 1.0
    post_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in TRIGGER_KINDS:
            raise ConfigError(f"unknown trigger kind {self.kind!r}")


@dataclass(frozen=True)
class EffectSpec:
    """One injected ground-truth effect.

    magnitude_pct is a multiplicative percent (+10 means x1.10) applied while
    the trigger fires:
      comment_rate_boost_on_climb -- multiplies the comment arrival rate
      tenure_boost_from_comments  -- multiplies the hot score's comment term
      undesired_rate_shift        -- multiplies the odds that an arriving
                                     comment is undesired
    """

    kind: str
    magnitude_pct: float
    trigger: TriggerSpec = TriggerSpec()

    def __post_init__(self):
        if self.kind not in EFFECT_KINDS:
            raise ConfigError(f"unknown effect kind {self.kind!r}")
        if self.magnitude_pct <= -100.0:
            raise ConfigError("effect magnitude must exceed -100 percent")

    @property
    def multiplier(self) -> float:
        return 1.0 + self.magnitude_pct / 100.0


@dataclass(frozen=True)
class HotWeights:
    w_comment_rate: float = 1.0
    w_vote_rate: float = 0.1
    w_log_score: float = 0.5
    w_age_decay: float = 1.0


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    tick_minutes: float = 2.0
    feed_size: int = 100
    arrival_rate_new_posts: float = 2.0
    hot_weights: HotWeights = HotWeights()
    noise_sd: float = 0.5
    engagement_base: float = 2.0
    rank_decay_gamma: float = 0.0
    cliff_rank: int = 80
    cliff_factor: float = 1.0
    undesired_base_prop: float = 0.15
    injected_effects: tuple[EffectSpec, ...] = ()
    duration_ticks: int = 100
    # plumbing knobs
    vote_rate_per_comment: float = 8.0
    upvote_beta: tuple[float, float] = (9.0, 1.0)
    hot_window_ticks: int = 5
    start_time_ms: int = 0
    cull_after_ticks: int = 30
    initial_posts: int = 0
    initial_age_hours_max: float = 6.0
    n_subreddits: int = 12
    title_vocab_size: int = 40
    content_type_probs: tuple[float, float, float, float] = (
        0.4919,
        0.1619,
        0.1245,
        0.2217,
    )

    def __post_init__(self):
        if self.feed_size < 1:
            raise ConfigError("feed_size must be >= 1")
        for name in ("arrival_rate_new_posts", "engagement_base", "noise_sd",
                     "rank_decay_gamma", "vote_rate_per_comment"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not (0.0 < self.cliff_factor <= 1.0):
            raise ConfigError("cliff_factor must be in (0, 1]")
        if not (0.0 <= self.undesired_base_prop <= 1.0):
            raise ConfigError("undesired_base_prop must be in [0, 1]")
        if self.duration_ticks < 0:
            raise ConfigError("duration_ticks must be >= 0")
        if abs(sum(self.content_type_probs) - 1.0) > 1e-9:
            raise ConfigError("content_type_probs must sum to 1")

    @property
    def tick_ms(self) -> int:
        return int(round(self.tick_minutes * 60_000))


def hot_score(recent_comments: float, recent_votes: float, score: float,
              age_hours: float, weights: HotWeights, noise: float,
              comment_term_scale: float = 1.0) -> float:
    """Parametric ranking score; a pure, total function of its inputs."""
    w = weights
    return (
        w.w_comment_rate * recent_comments * comment_term_scale
        + w.w_vote_rate * recent_votes
        + w.w_log_score * math.log1p(max(score, 0.0))
        - w.w_age_decay * age_hours
        + noise
    )


def engagement_rate(rank: int, cfg: SimConfig) -> float:
    """Expected comments per tick at a feed rank.

    lambda(r) = base * exp(-gamma * r) * (cliff_factor if r > cliff_rank else 1),
    non-increasing in r.
    """
    if not (1 <= rank <= cfg.feed_size):
        raise DomainError(
            f"rank {rank} outside feed range 1..{cfg.feed_size}"
        )
    return _engagement_rate_any(rank, cfg)


def _engagement_rate_any(rank: int, cfg: SimConfig) -> float:
    # Extension beyond the feed cutoff used for censored posts that keep
    # evolving off-feed.
    lam = cfg.engagement_base * math.exp(-cfg.rank_decay_gamma * rank)
    if rank > cfg.cliff_rank:
        lam *= cfg.cliff_factor
    return lam


@dataclass
class PostState:
    post_id: str
    created_at: int
    subreddit_id: str
    subscriber_count: int
    content_type: str
    title: str
    prop_upvotes_true: float
    score: int = 1
    upvotes: int = 1
    total_votes: int = 1
    num_comments: int = 0
    rank: int | None = None
    entry_move: int | None = None  # signed delta of the move into current rank
    ticks_outside: int = 0
    activity: list[tuple[int, int, int]] = field(default_factory=list)
    # activity holds (tick, comments, votes) for the hot-score window

    def recent_counts(self, tick: int, window: int) -> tuple[int, int]:
        lo = tick - window
        c = v = 0
        for t, nc, nv in reversed(self.activity):
            if t <= lo:
                break
            c += nc
            v += nv
        return c, v

    @property
    def prop_upvotes(self) -> float:
        return self.upvotes / self.total_votes if self.total_votes else 0.5


@dataclass
class SimResult:
    snapshots: list[dict]
    comments: list[dict]
    truth: list[dict]

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "snapshots": out / "snapshots.jsonl",
            "comments": out / "comments.jsonl",
            "truth": out / "truth.jsonl",
        }
        write_jsonl(paths["snapshots"], self.snapshots)
        write_jsonl(paths["comments"], self.comments)
        write_jsonl(paths["truth"], self.truth)
        return paths


class FeedSimulator:
    """Stateful single-run simulator. Use `run(cfg)` for the one-shot form."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.tick = 0
        self.posts: dict[str, PostState] = {}
        self._post_counter = 0
        self._comment_counter = 0
        self._subreddits = self._make_subreddits()
        self._vocab = [f"w{i:03d}" for i in range(cfg.title_vocab_size)]
        for _ in range(cfg.initial_posts):
            self._spawn_post(self._initial_created_at())
        if self.posts:
            self._rerank()

    # -- setup ------------------------------------------------------------

    def _make_subreddits(self) -> list[tuple[str, int]]:
        subs = []
        for i in range(self.cfg.n_subreddits):
            subscribers = int(round(float(self.rng.lognormal(13.0, 1.2))))
            subs.append((f"s{i:03d}", max(subscribers, 100)))
        return subs

    def _initial_created_at(self) -> int:
        age_ms = float(self.rng.uniform(0.02, self.cfg.initial_age_hours_max)) * 3_600_000
        return int(self.cfg.start_time_ms - age_ms)

    def _spawn_post(self, created_at: int) -> PostState:
        sub_id, subscribers = self._subreddits[
            int(self.rng.integers(0, len(self._subreddits)))
        ]
        content = str(self.rng.choice(CONTENT_TYPES, p=self.cfg.content_type_probs))
        a, b = self.cfg.upvote_beta
        prop_up = float(self.rng.beta(a, b))
        n_words = int(self.rng.integers(2, 7))
        title = " ".join(
            self._vocab[int(w)]
            for w in self.rng.integers(0, len(self._vocab), size=n_words)
        )
        post = PostState(
            post_id=f"p{self._post_counter:07d}",
            created_at=created_at,
            subreddit_id=sub_id,
            subscriber_count=subscribers,
            content_type=content,
            title=title,
            prop_upvotes_true=min(max(prop_up, 0.01), 0.99),
        )
        self._post_counter += 1
        self.posts[post.post_id] = post
        return post

    # -- effects ----------------------------------------------------------

    def _trigger_fires(self, trig: TriggerSpec, post: PostState,
                       recent_comments: int) -> bool:
        if trig.kind == "always":
            return True
        if trig.kind == "climbed":
            return post.entry_move is not None and post.entry_move <= -trig.threshold
        if trig.kind == "rank_at_most":
            return post.rank is not None and post.rank <= trig.threshold
        if trig.kind == "recent_comments_at_least":
            return recent_comments >= trig.threshold
        if trig.kind == "post_ids":
            return post.post_id in trig.post_ids
        raise ConfigError(f"unknown trigger kind {trig.kind!r}")

    def _active_effects(self, post: PostState, recent_comments: int) -> list[bool]:
        return [
            self._trigger_fires(e.trigger, post, recent_comments)
            for e in self.cfg.injected_effects
        ]

    # -- one tick ---------------------------------------------------------

    def step(self) -> tuple[dict, list[dict], list[dict]]:
        """Advance one tick; returns (feed snapshot, comments, truth entries)."""
        cfg = self.cfg
        self.tick += 1
        t_start = cfg.start_time_ms + (self.tick - 1) * cfg.tick_ms
        t_end = cfg.start_time_ms + self.tick * cfg.tick_ms

        new_comments: list[dict] = []
        active_by_post: dict[str, list[bool]] = {}
        lambda_by_post: dict[str, float] = {}

        for post_id in sorted(self.posts):
            post = self.posts[post_id]
            rc, _ = post.recent_counts(self.tick - 1, cfg.hot_window_ticks)
            active = self._active_effects(post, rc)
            active_by_post[post_id] = active

            lam = _engagement_rate_any(post.rank, cfg) if post.rank else 0.0
            und_p = cfg.undesired_base_prop
            for eff, on in zip(cfg.injected_effects, active):
                if not on:
                    continue
                if eff.kind == "comment_rate_boost_on_climb":
                    lam *= eff.multiplier
                elif eff.kind == "undesired_rate_shift":
                    und_p = _shift_probability_odds(und_p, eff.multiplier)
            lambda_by_post[post_id] = lam

            n_c = int(self.rng.poisson(lam)) if lam > 0 else 0
            if n_c:
                offsets = np.sort(self.rng.uniform(0.0, 1.0, size=n_c))
                undesired = self.rng.uniform(0.0, 1.0, size=n_c) < und_p
                for off, und in zip(offsets, undesired):
                    new_comments.append(
                        self._make_comment(post_id, int(t_start + off * cfg.tick_ms), bool(und))
                    )
                post.num_comments += n_c

            vote_rate = cfg.vote_rate_per_comment * lam
            n_v = int(self.rng.poisson(vote_rate)) if vote_rate > 0 else 0
            if n_v:
                ups = int(self.rng.binomial(n_v, post.prop_upvotes_true))
                post.score += 2 * ups - n_v
                post.upvotes += ups
                post.total_votes += n_v
            post.activity.append((self.tick, n_c, n_v))
            if len(post.activity) > cfg.hot_window_ticks + 1:
                del post.activity[0]

        n_new = int(self.rng.poisson(cfg.arrival_rate_new_posts))
        for _ in range(n_new):
            created = int(t_start + self.rng.uniform(0.0, 1.0) * cfg.tick_ms)
            self._spawn_post(min(created, t_end - 1))

        self._rerank(at_ms=t_end)
        self._cull()

        feed = self._feed_posts()
        snapshot = {
            "captured_at": t_end,
            "posts": [self._post_record(p, t_end) for p in feed],
        }
        truth = []
        for p in feed:
            truth.append({
                "tick": self.tick,
                "post_id": p.post_id,
                "hot_score": self._last_hot[p.post_id],
                "lambda": lambda_by_post.get(p.post_id, 0.0),
                "treated_flags": [int(x) for x in active_by_post.get(
                    p.post_id, [False] * len(cfg.injected_effects))],
            })
        return snapshot, new_comments, truth

    def _make_comment(self, post_id: str, created_at: int, undesired: bool) -> dict:
        cid = f"c{self._comment_counter:09d}"
        self._comment_counter += 1
        if undesired:
            if self.rng.uniform() < 0.2:
                return {"comment_id": cid, "post_id": post_id,
                        "created_at": created_at, "slightly_toxic": None,
                        "highly_toxic": None, "non_toxic": None, "removed": True}
            s = float(self.rng.uniform(0.55, 0.95))
            h = float(self.rng.uniform(0.0, 0.6))
        else:
            s = float(self.rng.uniform(0.0, 0.45))
            h = float(self.rng.uniform(0.0, 0.3 * (s + 0.1)))
        return {
            "comment_id": cid,
            "post_id": post_id,
            "created_at": created_at,
            "slightly_toxic": round(s, 4),
            "highly_toxic": round(h, 4),
            "non_toxic": round(max(0.0, 1.0 - max(s, h)), 4),
            "removed": False,
        }

    def _rerank(self, at_ms: int | None = None) -> None:
        cfg = self.cfg
        now = cfg.start_time_ms if at_ms is None else at_ms
        scores: list[tuple[float, str]] = []
        self._last_hot: dict[str, float] = {}
        for post_id in sorted(self.posts):
            post = self.posts[post_id]
            rc, rv = post.recent_counts(self.tick, cfg.hot_window_ticks)
            scale = 1.0
            for eff, on in zip(cfg.injected_effects,
                               self._active_effects(post, rc)):
                if on and eff.kind == "tenure_boost_from_comments":
                    scale *= eff.multiplier
            age_h = max((now - post.created_at) / 3_600_000.0, 1e-9)
            noise = float(self.rng.normal(0.0, cfg.noise_sd)) if cfg.noise_sd > 0 else 0.0
            h = hot_score(rc, rv, post.score, age_h, cfg.hot_weights, noise,
                          comment_term_scale=scale)
            scores.append((-h, post_id))
            self._last_hot[post_id] = h
        scores.sort()
        for new_rank, (_, post_id) in enumerate(scores, start=1):
            post = self.posts[post_id]
            if post.rank is not None and new_rank != post.rank:
                post.entry_move = new_rank - post.rank
            post.rank = new_rank

    def _cull(self) -> None:
        cfg = self.cfg
        dead = []
        for post_id, post in self.posts.items():
            if post.rank is not None and post.rank > cfg.feed_size:
                post.ticks_outside += 1
                if post.ticks_outside > cfg.cull_after_ticks:
                    dead.append(post_id)
            else:
                post.ticks_outside = 0
        for post_id in dead:
            del self.posts[post_id]

    def _feed_posts(self) -> list[PostState]:
        feed = [p for p in self.posts.values()
                if p.rank is not None and p.rank <= self.cfg.feed_size]
        feed.sort(key=lambda p: p.rank)
        return feed

    def _post_record(self, post: PostState, captured_at: int) -> dict:
        return {
            "post_id": post.post_id,
            "rank": post.rank,
            "score": post.score,
            "num_comments": post.num_comments,
            "created_at": post.created_at,
            "subreddit_id": post.subreddit_id,
            "subscriber_count": post.subscriber_count,
            "content_type": post.content_type,
            "prop_upvotes": round(post.prop_upvotes, 6),
            "title": post.title,
        }


def _shift_probability_odds(p: float, multiplier: float) -> float:
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 1.0
    odds = p / (1.0 - p) * multiplier
    return odds / (1.0 + odds)


def run(cfg: SimConfig) -> SimResult:
    """Run a full simulation; identical config (incl. seed) gives identical output."""
    sim = FeedSimulator(cfg)
    snapshots: list[dict] = []
    comments: list[dict] = []
    truth: list[dict] = []
    for _ in range(cfg.duration_ticks):
        snap, new_comments, truth_entries = sim.step()
        snapshots.append(snap)
        comments.extend(new_comments)
        truth.extend(truth_entries)
    return SimResult(snapshots=snapshots, comments=comments, truth=truth)


def config_from_dict(d: dict) -> SimConfig:
    """Build a SimConfig from parsed JSON (nested weight/effect objects)."""
    d = dict(d)
    if "hot_weights" in d and isinstance(d["hot_weights"], dict):
        d["hot_weights"] = HotWeights(**d["hot_weights"])
    if "injected_effects" in d:
        effects = []
        for e in d["injected_effects"]:
            e = dict(e)
            if "trigger" in e and isinstance(e["trigger"], dict):
                trig = dict(e["trigger"])
                if "post_ids" in trig:
                    trig["post_ids"] = tuple(trig["post_ids"])
                e["trigger"] = TriggerSpec(**trig)
            effects.append(EffectSpec(**e))
        d["injected_effects"] = tuple(effects)
    if "upvote_beta" in d:
        d["upvote_beta"] = tuple(d["upvote_beta"])
    if "content_type_probs" in d:
        d["content_type_probs"] = tuple(d["content_type_probs"])
    return SimConfig(**d)
