import json
import math

import numpy as np
import pytest

from feedaudit.errors import ConfigError, DomainError
from feedaudit.feedsim import (
    EffectSpec,
    FeedSimulator,
    HotWeights,
    SimConfig,
    TriggerSpec,
    engagement_rate,
    hot_score,
    run,
)


class TestHotScore:
    def test_all_weights_zero_gives_zero(self):
        w = HotWeights(0, 0, 0, 0)
        assert hot_score(24, 100, 500, 3.0, w, noise=0.0) == 0.0

    def test_age_only_term(self):
        w = HotWeights(0, 0, 0, 1.0)
        assert hot_score(0, 0, 0, 2.0, w, noise=0.0) == -2.0

    def test_monotone_in_recent_comments(self):
        w = HotWeights(w_comment_rate=0.5, w_vote_rate=0.1,
                       w_log_score=0.2, w_age_decay=1.0)
        lo = hot_score(11, 50, 200, 4.0, w, noise=0.0)
        hi = hot_score(24, 50, 200, 4.0, w, noise=0.0)
        assert hi > lo

    def test_negative_score_clamped_in_log_term(self):
        w = HotWeights(0, 0, 1.0, 0)
        assert hot_score(0, 0, -100, 1.0, w, noise=0.0) == 0.0


class TestEngagementRate:
    def test_flat_when_no_decay(self):
        cfg = SimConfig(engagement_base=2.0, rank_decay_gamma=0.0,
                        cliff_factor=1.0)
        assert all(engagement_rate(r, cfg) == 2.0 for r in (1, 50, 100))

    def test_cliff_values(self):
        cfg = SimConfig(engagement_base=2.0, rank_decay_gamma=0.0,
                        cliff_factor=0.25, cliff_rank=80)
        assert engagement_rate(80, cfg) == pytest.approx(2.0)
        assert engagement_rate(81, cfg) == pytest.approx(0.5)

    def test_non_increasing_over_ranks(self, rng):
        for _ in range(10):
            cfg = SimConfig(
                engagement_base=float(rng.uniform(0.5, 4)),
                rank_decay_gamma=float(rng.uniform(0, 0.05)),
                cliff_factor=float(rng.uniform(0.1, 1.0)),
                cliff_rank=int(rng.integers(10, 95)),
            )
            lam = [engagement_rate(r, cfg) for r in range(1, 101)]
            assert all(a >= b for a, b in zip(lam, lam[1:]))
            assert lam[0] >= lam[-1]

    def test_cliff_ratio_exact(self):
        cfg = SimConfig(engagement_base=3.0, rank_decay_gamma=0.02,
                        cliff_factor=0.4, cliff_rank=60)
        ratio = engagement_rate(61, cfg) / engagement_rate(60, cfg)
        assert ratio == pytest.approx(0.4 * math.exp(-0.02), rel=1e-12)

    def test_rank_out_of_range(self):
        cfg = SimConfig(feed_size=100)
        with pytest.raises(DomainError):
            engagement_rate(0, cfg)
        with pytest.raises(DomainError):
            engagement_rate(101, cfg)


class TestConfigValidation:
    def test_bad_cliff_factor(self):
        with pytest.raises(ConfigError):
            SimConfig(cliff_factor=0.0)
        with pytest.raises(ConfigError):
            SimConfig(cliff_factor=1.5)

    def test_bad_rates(self):
        with pytest.raises(ConfigError):
            SimConfig(arrival_rate_new_posts=-1)
        with pytest.raises(ConfigError):
            SimConfig(undesired_base_prop=1.2)

    def test_effect_magnitude_bound(self):
        with pytest.raises(ConfigError):
            EffectSpec(kind="undesired_rate_shift", magnitude_pct=-100.0)

    def test_unknown_kinds(self):
        with pytest.raises(ConfigError):
            EffectSpec(kind="nope", magnitude_pct=10)
        with pytest.raises(ConfigError):
            TriggerSpec(kind="nope")


class TestStep:
    def test_age_only_ranking_orders_by_age(self):
        cfg = SimConfig(seed=5, feed_size=10, duration_ticks=8,
                        initial_posts=6, arrival_rate_new_posts=0.0,
                        engagement_base=0.0, noise_sd=0.0,
                        hot_weights=HotWeights(0, 0, 0, 1.0))
        res = run(cfg)
        for snap in res.snapshots:
            ages = [snap["captured_at"] - p["created_at"] for p in snap["posts"]]
            assert ages == sorted(ages)

    def test_single_post_always_rank_one(self):
        cfg = SimConfig(seed=2, feed_size=10, duration_ticks=12,
                        initial_posts=1, arrival_rate_new_posts=0.0,
                        engagement_base=0.5, noise_sd=0.5)
        res = run(cfg)
        for snap in res.snapshots:
            assert [p["rank"] for p in snap["posts"]] == [1]

    def test_ranks_contiguous_and_unique(self, medium_sim):
        for snap in medium_sim.snapshots:
            ranks = [p["rank"] for p in snap["posts"]]
            assert ranks == list(range(1, len(ranks) + 1))

    def test_snapshot_capped_at_feed_size(self, medium_sim):
        for snap in medium_sim.snapshots:
            assert len(snap["posts"]) <= 20

    def test_truth_log_covers_feed(self, medium_sim):
        by_tick = {}
        for rec in medium_sim.truth:
            by_tick.setdefault(rec["tick"], set()).add(rec["post_id"])
        for i, snap in enumerate(medium_sim.snapshots, start=1):
            assert {p["post_id"] for p in snap["posts"]} == by_tick[i]

    def test_rerank_is_permutation_of_live_posts(self):
        cfg = SimConfig(seed=9, feed_size=5, duration_ticks=20,
                        initial_posts=8, arrival_rate_new_posts=0.3,
                        engagement_base=1.0, noise_sd=1.0,
                        cull_after_ticks=1000)
        sim = FeedSimulator(cfg)
        for _ in range(cfg.duration_ticks):
            before = set(sim.posts)
            sim.step()
            live_ranks = sorted(p.rank for p in sim.posts.values())
            assert live_ranks == list(range(1, len(sim.posts) + 1))
            assert before <= set(sim.posts)  # no cull configured to bite


class TestRun:
    def test_zero_duration_empty_streams(self):
        cfg = SimConfig(seed=1, duration_ticks=0, initial_posts=3)
        res = run(cfg)
        assert res.snapshots == [] and res.comments == [] and res.truth == []

    def test_small_feed_contiguous(self):
        cfg = SimConfig(seed=3, feed_size=100, duration_ticks=10,
                        initial_posts=4, arrival_rate_new_posts=0.0)
        res = run(cfg)
        for snap in res.snapshots:
            ranks = [p["rank"] for p in snap["posts"]]
            assert ranks == list(range(1, len(ranks) + 1))
            assert len(ranks) <= 4 + 1

    def test_same_seed_identical_bytes(self, tmp_path):
        cfg = SimConfig(seed=77, feed_size=8, duration_ticks=25,
                        initial_posts=8, arrival_rate_new_posts=0.5)
        a, b = run(cfg), run(cfg)
        assert json.dumps(a.snapshots) == json.dumps(b.snapshots)
        assert json.dumps(a.comments) == json.dumps(b.comments)
        assert json.dumps(a.truth) == json.dumps(b.truth)
        pa = a.write(tmp_path / "a")
        pb = b.write(tmp_path / "b")
        for key in pa:
            assert pa[key].read_bytes() == pb[key].read_bytes()

    def test_timestamps_monotone_and_consistent(self, medium_sim):
        captured = [s["captured_at"] for s in medium_sim.snapshots]
        assert captured == sorted(captured)
        for snap in medium_sim.snapshots:
            for p in snap["posts"]:
                assert p["created_at"] <= snap["captured_at"]


class TestPoissonEngagement:
    def test_empirical_rates_match_poisson_mean(self):
        # fixed 5-post feed, rank-dependent rates, ~10k (rank, tick) draws
        cfg = SimConfig(seed=31, feed_size=5, duration_ticks=2000,
                        initial_posts=5, arrival_rate_new_posts=0.0,
                        engagement_base=2.0, rank_decay_gamma=0.2,
                        cliff_factor=0.5, cliff_rank=3, noise_sd=1.0,
                        undesired_base_prop=0.3,
                        hot_weights=HotWeights(0, 0, 0, 0.0),
                        cull_after_ticks=10_000)
        res = run(cfg)
        tick_ms = cfg.tick_ms
        counts: dict[tuple[int, str], int] = {}
        for c in res.comments:
            tick = c["created_at"] // tick_ms + 1
            key = (int(tick), c["post_id"])
            counts[key] = counts.get(key, 0) + 1
        total_by_lambda: dict[float, list] = {}
        for rec in res.truth:
            lam = rec["lambda"]
            obs = counts.get((rec["tick"], rec["post_id"]), 0)
            total_by_lambda.setdefault(round(lam, 9), []).append(obs)
        assert sum(len(v) for v in total_by_lambda.values()) >= 10_000
        for lam, obs in total_by_lambda.items():
            if len(obs) < 500:
                continue
            expected = lam * len(obs)
            se = math.sqrt(expected)
            assert abs(sum(obs) - expected) <= 3 * se, (lam, sum(obs), expected)

    def test_undesired_proportion_matches_base(self):
        cfg = SimConfig(seed=8, feed_size=5, duration_ticks=400,
                        initial_posts=5, arrival_rate_new_posts=0.0,
                        engagement_base=3.0, undesired_base_prop=0.25,
                        noise_sd=0.5, cull_after_ticks=10_000)
        res = run(cfg)
        flags = []
        for c in res.comments:
            if c["removed"]:
                flags.append(True)
            else:
                flags.append(c["slightly_toxic"] > 0.5 or c["highly_toxic"] > 0.5)
        n = len(flags)
        prop = sum(flags) / n
        se = math.sqrt(0.25 * 0.75 / n)
        assert abs(prop - 0.25) <= 3 * se


class TestInjectedEffects:
    def test_comment_rate_boost_improves_rank_monte_carlo(self):
        # two posts identical in age; one gets a doubled comment rate
        boosted, control = [], []
        for seed in range(100):
            effects = (EffectSpec(
                kind="comment_rate_boost_on_climb", magnitude_pct=100.0,
                trigger=TriggerSpec(kind="post_ids", post_ids=("p0000000",))),)
            cfg = SimConfig(seed=seed, feed_size=6, duration_ticks=30,
                            initial_posts=2, arrival_rate_new_posts=0.0,
                            engagement_base=1.5, noise_sd=0.3,
                            initial_age_hours_max=0.05,
                            hot_weights=HotWeights(w_comment_rate=0.8,
                                                   w_vote_rate=0.0,
                                                   w_log_score=0.0,
                                                   w_age_decay=0.2),
                            injected_effects=effects,
                            cull_after_ticks=10_000)
            res = run(cfg)
            for snap in res.snapshots:
                for p in snap["posts"]:
                    (boosted if p["post_id"] == "p0000000" else control).append(
                        p["rank"])
        assert np.mean(boosted) < np.mean(control)

    def test_undesired_rate_shift_raises_proportion(self):
        base = SimConfig(seed=5, feed_size=5, duration_ticks=300,
                         initial_posts=5, arrival_rate_new_posts=0.0,
                         engagement_base=3.0, undesired_base_prop=0.2,
                         noise_sd=0.5, cull_after_ticks=10_000)
        effects = (EffectSpec(kind="undesired_rate_shift", magnitude_pct=150.0,
                              trigger=TriggerSpec(kind="always")),)
        shifted = SimConfig(**{**base.__dict__, "injected_effects": effects})

        def prop(res):
            flagged = sum(
                1 for c in res.comments
                if c["removed"] or c["slightly_toxic"] > 0.5
                or c["highly_toxic"] > 0.5)
            return flagged / len(res.comments)

        assert prop(run(shifted)) > prop(run(base)) + 0.05

    def test_truth_log_flags_follow_trigger(self):
        effects = (EffectSpec(kind="comment_rate_boost_on_climb",
                              magnitude_pct=10.0,
                              trigger=TriggerSpec(kind="rank_at_most",
                                                  threshold=2)),)
        cfg = SimConfig(seed=4, feed_size=6, duration_ticks=20,
                        initial_posts=6, arrival_rate_new_posts=0.0,
                        noise_sd=1.0, injected_effects=effects)
        sim = FeedSimulator(cfg)
        rank_before = {pid: p.rank for pid, p in sim.posts.items()}
        snap, _, truth = sim.step()
        for rec in truth:
            expected = rank_before[rec["post_id"]] <= 2
            assert rec["treated_flags"] == [int(expected)]
