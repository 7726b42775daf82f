"""Per-account behavioral features.

Features are computed from the event log truncated to a day horizon, so
a day-d feature vector can never see day-d+1 activity. Rates use the
horizon length (days) as denominator; any ratio with a missing
denominator is imputed to 0, so vectors are always finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..core_data import (ACTION_FOLLOW, ACTION_LIKE, ACTION_POST, Account,
                         Dataset, InteractionEvent)

FEATURE_NAMES: tuple[str, ...] = (
    "posting_rate",              # posts per day
    "follower_growth_rate",      # incoming follows per day
    "like_out_rate",             # likes given per day
    "like_in_rate",              # likes received per day
    "follow_out_rate",           # follows made per day
    "polarity_mean",             # mean polarity of own posts
    "polarity_var",              # polarity variance of own posts
    "post_gap_mean",             # mean steps between consecutive posts
    "active_day_fraction",       # days with own activity / horizon days
    "follower_following_ratio",  # followers / following (0 if following 0)
)

# feature groups used by the mixture-of-experts detector; disjoint and
# jointly covering FEATURE_NAMES
FEATURE_GROUPS: dict[str, tuple[str, ...]] = {
    "content": ("polarity_mean", "polarity_var"),
    "metadata": ("follower_growth_rate", "like_out_rate", "like_in_rate",
                 "follow_out_rate", "follower_following_ratio"),
    "temporal": ("posting_rate", "post_gap_mean", "active_day_fraction"),
}


@dataclass(frozen=True)
class FeatureVector:
    account: str
    values: tuple[float, ...]
    schema: tuple[str, ...]
    up_to_day: int


class _Tally:
    __slots__ = ("posts", "pol_sum", "pol_sq", "first_post", "last_post",
                 "in_follows", "out_follows", "in_likes", "out_likes",
                 "active_days")

    def __init__(self):
        self.posts = 0
        self.pol_sum = 0.0
        self.pol_sq = 0.0
        self.first_post = None
        self.last_post = None
        self.in_follows = 0
        self.out_follows = 0
        self.in_likes = 0
        self.out_likes = 0
        self.active_days: set[int] = set()


def extract_features_bulk(accounts: Sequence[Account],
                          events: Sequence[InteractionEvent],
                          up_to_day: int) -> list[FeatureVector]:
    """Feature vectors for ``accounts`` over the first ``up_to_day``
    days of the log. Days are 1-indexed, so this keeps events with
    day <= up_to_day and normalizes rates by up_to_day days."""
    if up_to_day < 1:
        raise ValueError(f"up_to_day={up_to_day} must be >= 1")
    tallies: dict[str, _Tally] = {a.id: _Tally() for a in accounts}
    for e in events:
        if e.day > up_to_day:
            continue
        actor = tallies.get(e.actor)
        target = tallies.get(e.target) if e.target is not None else None
        if e.action == ACTION_POST:
            if actor is not None:
                actor.posts += 1
                actor.pol_sum += e.polarity
                actor.pol_sq += e.polarity * e.polarity
                if actor.first_post is None:
                    actor.first_post = e.timestamp
                actor.last_post = e.timestamp
                actor.active_days.add(e.day)
        elif e.action == ACTION_LIKE:
            if actor is not None:
                actor.out_likes += 1
                actor.active_days.add(e.day)
            if target is not None:
                target.in_likes += 1
        elif e.action == ACTION_FOLLOW:
            if actor is not None:
                actor.out_follows += 1
                actor.active_days.add(e.day)
            if target is not None:
                target.in_follows += 1

    out = []
    days = float(up_to_day)
    for a in accounts:
        t = tallies[a.id]
        meta: Mapping[str, float] = a.metadata
        followers = meta.get("followers_init", 0.0) + t.in_follows
        following = meta.get("following_init", 0.0) + t.out_follows
        if t.posts:
            pol_mean = t.pol_sum / t.posts
            pol_var = max(0.0, t.pol_sq / t.posts - pol_mean * pol_mean)
        else:
            pol_mean = pol_var = 0.0
        if t.posts >= 2:
            gap_mean = (t.last_post - t.first_post) / (t.posts - 1)
        else:
            gap_mean = 0.0
        values = (
            t.posts / days,
            t.in_follows / days,
            t.out_likes / days,
            t.in_likes / days,
            t.out_follows / days,
            pol_mean,
            pol_var,
            gap_mean,
            len(t.active_days) / days,
            followers / following if following > 0 else 0.0,
        )
        out.append(FeatureVector(account=a.id, values=values,
                                 schema=FEATURE_NAMES, up_to_day=up_to_day))
    return out


def extract_features(ds: Dataset, account: str,
                     up_to_day: int) -> FeatureVector:
    """Feature vector for one account of a dataset."""
    if account not in ds.by_id:
        raise KeyError(f"unknown account {account!r}")
    return extract_features_bulk([ds.by_id[account]], ds.events,
                                 up_to_day)[0]


def dataset_features(ds: Dataset, up_to_day: int | None = None,
                     accounts: Sequence[str] | None = None
                     ) -> list[FeatureVector]:
    """Feature vectors for all (or selected) accounts of a dataset."""
    if up_to_day is None:
        up_to_day = ds.n_days
    if accounts is None:
        rows = sorted(ds.accounts, key=lambda a: a.id)
    else:
        rows = [ds.by_id[a] for a in accounts]
    return extract_features_bulk(rows, ds.events, up_to_day)


def feature_matrix(features: Sequence[FeatureVector]) -> np.ndarray:
    """Stack feature vectors into an (n, d) float array, checking that
    all vectors share one schema."""
    if not features:
        raise ValueError("no feature vectors")
    schema = features[0].schema
    for fv in features:
        if fv.schema != schema:
            raise ValueError(f"mixed feature schemas: {fv.schema} vs {schema}")
    return np.asarray([fv.values for fv in features], dtype=float)
