"""World state construction.

Campaigns are numbered 1..n_campaigns and each pushes its own topic
("t1", "t2", ...); topic "t0" is organic chatter. Humans hold one
sentiment value per topic, so campaigns influence disjoint state and
do not interfere. All randomness flows through named substreams of the
config seed: two runs with equal configs produce byte-identical
worlds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..core_data import (ROLE_BOT, ROLE_HUMAN, STATUS_ACTIVE,
                         STATUS_DORMANT)
from ..seeds import derive_seed, substream
from .config import ReporterSpec, SimConfig

FEED_CAPACITY = 30
CHATTER_TOPIC = "t0"


def campaign_topic(campaign: int) -> str:
    return f"t{campaign}"


def topic_universe(cfg: SimConfig) -> tuple[str, ...]:
    return (CHATTER_TOPIC,) + tuple(campaign_topic(c)
                                    for c in range(1, cfg.n_campaigns + 1))


@dataclass
class AccountState:
    id: str
    role: str
    campaign: int | None
    status: str
    sentiment: dict[str, float]
    created_day: int = 0
    followers: set[str] = field(default_factory=set)
    following: set[str] = field(default_factory=set)
    followers_init: int = 0
    following_init: int = 0
    # feed: (author, topic, polarity) triples pushed by followed
    # accounts, newest last, bounded at FEED_CAPACITY
    feed: list[tuple[str, str, float]] = field(default_factory=list)
    rates: tuple[float, float, float, float] | None = None

    def push_feed(self, author: str, topic: str, polarity: float) -> None:
        self.feed.append((author, topic, polarity))
        if len(self.feed) > FEED_CAPACITY:
            del self.feed[0]


@dataclass
class WorldState:
    config: SimConfig
    accounts: dict[str, AccountState]
    humans: list[str]                   # sorted ids
    campaigns: dict[int, list[str]]     # campaign id -> bot ids
    reporters: list[ReporterSpec]
    step: int = 0

    def active_humans(self) -> list[str]:
        return [h for h in self.humans
                if self.accounts[h].status == STATUS_ACTIVE]

    def campaign_ids(self) -> list[int]:
        return sorted(self.campaigns)


def _human_rates(cfg: SimConfig, u: float):
    """Per-human action distribution: engagement scaled by a factor
    in [1-spread, 1+spread], idle absorbs the remainder."""
    base = cfg.human_rates
    scale = 1.0 + cfg.human_rate_spread * (2.0 * u - 1.0)
    post = base.post * scale
    like = base.like * scale
    follow = base.follow * scale
    return (post, like, follow, 1.0 - post - like - follow)


def init_world(cfg: SimConfig) -> WorldState:
    cfg.validate()
    accounts: dict[str, AccountState] = {}
    topics = topic_universe(cfg)

    humans = [f"h{i:03d}" for i in range(cfg.n_humans)]
    rng_world = substream(cfg.seed, "world")
    for h in humans:
        sentiment = {t: rng_world.uniform(-0.5, 0.5) for t in topics}
        accounts[h] = AccountState(
            id=h, role=ROLE_HUMAN, campaign=None, status=STATUS_ACTIVE,
            sentiment=sentiment,
            rates=_human_rates(cfg, rng_world.random()))

    campaigns: dict[int, list[str]] = {}
    for c in range(1, cfg.n_campaigns + 1):
        bots = [f"c{c}b{j:02d}" for j in range(cfg.bots_per_campaign)]
        campaigns[c] = bots
        for j, b in enumerate(bots):
            active = j < cfg.active_bots_per_campaign
            accounts[b] = AccountState(
                id=b, role=ROLE_BOT, campaign=c,
                status=STATUS_ACTIVE if active else STATUS_DORMANT,
                sentiment={campaign_topic(c): cfg.bot_post_polarity})

    # Initial follow graph: every account follows a random set of
    # others, out-degree floor(m) plus a Bernoulli(frac(m)) extra so
    # the mean out-degree equals mean_initial_degree in expectation.
    rng_graph = substream(cfg.seed, "graph")
    ids = sorted(accounts)
    base_deg = math.floor(cfg.mean_initial_degree)
    frac = cfg.mean_initial_degree - base_deg
    for a in ids:
        deg = base_deg + (1 if rng_graph.random() < frac else 0)
        others = [o for o in ids if o != a]
        for target in rng_graph.sample(others, deg):
            accounts[a].following.add(target)
            accounts[target].followers.add(a)
    for a in ids:
        accounts[a].followers_init = len(accounts[a].followers)
        accounts[a].following_init = len(accounts[a].following)

    reporters = _draw_reporters(cfg, humans)
    return WorldState(config=cfg, accounts=accounts, humans=humans,
                      campaigns=campaigns, reporters=reporters)


def _draw_reporters(cfg: SimConfig, humans: list[str]) -> list[ReporterSpec]:
    pool = cfg.reporter_pool
    if pool.n_reporters == 0:
        return []
    rng = substream(cfg.seed, "reporter-pool")
    chosen = rng.sample(humans, pool.n_reporters)
    specs = []
    for h in sorted(chosen):
        specs.append(ReporterSpec(
            reporter=h,
            report_rate=rng.uniform(*pool.report_rate),
            tpr=rng.uniform(*pool.tpr),
            fpr=rng.uniform(*pool.fpr),
            exposure_only=rng.random() < pool.exposure_only_fraction))
    return specs


def world_metadata(state: AccountState) -> dict[str, float]:
    return {"followers_init": float(state.followers_init),
            "following_init": float(state.following_init)}


def scan_model_seed(cfg: SimConfig) -> int:
    """Seed for the pretrained scan detector. Derived from the run
    seed so the same config always scans with the same model."""
    return derive_seed(cfg.seed, "scan-model")
