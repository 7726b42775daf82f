"""Campaign controller policies.

A campaign observes a coarse 3-level discretization of (detection
pressure, own posting rate, conversion progress) and picks one of four
actions for each active bot. The adaptive controller is a tabular
epsilon-greedy Q-learner sharing one table per campaign; the static
controller draws from a fixed action distribution and never updates.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core_data import (ACTION_FOLLOW, ACTION_IDLE, ACTION_LIKE,
                         ACTION_POST)
from .config import BehaviorRates, PolicyParams

BOT_ACTIONS = (ACTION_POST, ACTION_LIKE, ACTION_FOLLOW, ACTION_IDLE)

N_LEVELS = 3
N_OBSERVATIONS = N_LEVELS ** 3


def _bucket(x: float, low: float, high: float) -> int:
    """0 below low, 2 at or above high, else 1."""
    if x < low:
        return 0
    if x >= high:
        return 2
    return 1


@dataclass(frozen=True)
class Observation:
    pressure: int       # recent suspensions of own bots
    posting: int        # own per-bot posting rate last day
    progress: int       # fraction of humans past conversion

    def index(self) -> int:
        return (self.pressure * N_LEVELS + self.posting) * N_LEVELS \
            + self.progress


def observe(suspended_recent: int, posts_per_bot: float,
            converted_fraction: float) -> Observation:
    return Observation(
        pressure=_bucket(float(suspended_recent), 1.0, 3.0),
        posting=_bucket(posts_per_bot, 2.0, 6.0),
        progress=_bucket(converted_fraction, 0.05, 0.25))


class QPolicy:
    """Shared tabular Q-learner for one campaign."""

    def __init__(self, params: PolicyParams, rng):
        self.params = params
        self.rng = rng
        self.q = [[0.0] * len(BOT_ACTIONS) for _ in range(N_OBSERVATIONS)]

    def act(self, obs: Observation) -> str:
        if self.rng.random() < self.params.epsilon:
            return BOT_ACTIONS[self.rng.randrange(len(BOT_ACTIONS))]
        row = self.q[obs.index()]
        best = max(row)
        # ties broken uniformly so early training does not lock onto
        # the first action
        candidates = [i for i, v in enumerate(row) if v == best]
        return BOT_ACTIONS[candidates[self.rng.randrange(len(candidates))]]

    def update(self, obs: Observation, action: str, reward: float,
               next_obs: Observation) -> None:
        i = obs.index()
        a = BOT_ACTIONS.index(action)
        target = reward + self.params.discount * max(self.q[next_obs.index()])
        self.q[i][a] += self.params.learning_rate * (target - self.q[i][a])


class StaticPolicy:
    """Fixed-rate controller; ignores observations and rewards."""

    def __init__(self, rates: BehaviorRates, rng):
        self.rng = rng
        self._cum = []
        total = 0.0
        for p in (rates.post, rates.like, rates.follow, rates.idle):
            total += p
            self._cum.append(total)

    def act(self, obs: Observation) -> str:
        u = self.rng.random()
        for action, bound in zip(BOT_ACTIONS, self._cum):
            if u < bound:
                return action
        return ACTION_IDLE

    def update(self, obs, action, reward, next_obs) -> None:
        pass
