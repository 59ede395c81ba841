import numpy as np
import pytest

from feedaudit.features import extract_dataset
from feedaudit.feedsim import HotWeights, SimConfig, run
from feedaudit.ingest import CommentIndex, parse_comment_record, parse_feed_snapshot
from feedaudit.jsonio import dumps


def sim_to_memory(result):
    """Parse a SimResult back through the ingest layer without touching disk."""
    snapshots = [parse_feed_snapshot(dumps(s)) for s in result.snapshots]
    comments = [parse_comment_record(c) for c in result.comments]
    post_ids = {p.post_id for s in snapshots for p in s.posts}
    index = CommentIndex(comments, post_ids=post_ids)
    return snapshots, index, post_ids


@pytest.fixture(scope="session")
def medium_sim():
    cfg = SimConfig(
        seed=1234,
        feed_size=20,
        duration_ticks=150,
        initial_posts=20,
        arrival_rate_new_posts=1.0,
        engagement_base=1.5,
        noise_sd=1.0,
        undesired_base_prop=0.2,
        hot_weights=HotWeights(w_comment_rate=0.4, w_vote_rate=0.02,
                               w_log_score=0.3, w_age_decay=0.8),
        cull_after_ticks=10,
    )
    return run(cfg)


@pytest.fixture(scope="session")
def medium_dataset(medium_sim):
    snapshots, index, post_ids = sim_to_memory(medium_sim)
    dataset = extract_dataset(snapshots, index, post_ids, window_minutes=10.0)
    return snapshots, index, dataset


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
