"""Simulation engine.

Each step runs three phases: active humans act in id order, then each
campaign controller acts through its active bots, then (at scan
boundaries) a pretrained detector scores every non-suspended account,
label-blind, and suspends active accounts above threshold. Per-step,
per-campaign rewards are computed from before/after snapshots of
campaign state. Reports are drawn once per simulated day from the
reporter pool.

Event timestamps are the step index, so the full reward sequence can
be re-derived from the event log alone (see ``audit_rewards``).
"""

from __future__ import annotations

from dataclasses import dataclass

from ..core_data import (ACTION_ACTIVATE, ACTION_FOLLOW, ACTION_LIKE,
                         ACTION_POST, ACTION_SUSPEND, Account, Dataset,
                         InteractionEvent, Report, ROLE_BOT, ROLE_HUMAN,
                         STATUS_ACTIVE, STATUS_DORMANT, STATUS_SUSPENDED)
from ..detectors.features import (dataset_features, extract_features_bulk,
                                  feature_matrix)
from ..detectors.trees import TreeParams, forest_probabilities, train_forest
from ..seeds import substream
from .config import (POLICY_ADAPTIVE, RewardWeights, SCAN_DETECTOR_TREES,
                     SimConfig, benchmark_profile)
from .policy import QPolicy, StaticPolicy, observe
from .world import (AccountState, WorldState, campaign_topic, init_world,
                    scan_model_seed, topic_universe, world_metadata)

POST_NOISE = 0.1


@dataclass(frozen=True)
class CampaignSnapshot:
    """Reward-relevant campaign state at a step boundary."""
    edges: int                      # human followers across own bots
    sentiments: dict[str, float]    # human id -> target-topic sentiment
    suspended: int                  # own bots suspended so far


@dataclass(frozen=True)
class RunResult:
    dataset: Dataset
    rewards: list[list[float]]      # rewards[step][campaign index]
    reporters: list                 # realized ReporterSpec list
    config: SimConfig


def compute_reward(before: CampaignSnapshot, after: CampaignSnapshot,
                   delta: float, threshold: float,
                   weights: RewardWeights) -> float:
    """Campaign reward for one step.

    Counts new human follower edges, humans whose target-topic
    sentiment moved at least ``delta`` toward the campaign target,
    humans crossing the conversion ``threshold``, and newly suspended
    own bots.
    """
    infected = 0
    converted = 0
    for h, s_after in after.sentiments.items():
        s_before = before.sentiments[h]
        if s_after - s_before >= delta:
            infected += 1
        if s_before < threshold <= s_after:
            converted += 1
    return (weights.activation * (after.edges - before.edges)
            + weights.infection * infected
            + weights.termination * converted
            + weights.suspension_penalty * (after.suspended
                                            - before.suspended))


def _campaign_snapshot(world: WorldState, campaign: int) -> CampaignSnapshot:
    topic = campaign_topic(campaign)
    edges = 0
    suspended = 0
    for b in world.campaigns[campaign]:
        state = world.accounts[b]
        if state.status == STATUS_SUSPENDED:
            suspended += 1
        for f in state.followers:
            if world.accounts[f].role == ROLE_HUMAN:
                edges += 1
    sentiments = {h: world.accounts[h].sentiment[topic]
                  for h in world.humans}
    return CampaignSnapshot(edges=edges, sentiments=sentiments,
                            suspended=suspended)


def _apply_post(world: WorldState, author: str, topic: str, polarity: float,
                exposure: dict[str, set[str]] | None = None) -> None:
    """Sentiment EWMA and feed push for one post, in sorted follower
    order. The audit replays this exact float sequence."""
    alpha = world.config.ewma_alpha
    state = world.accounts[author]
    for f in sorted(state.followers):
        fs = world.accounts[f]
        if fs.role != ROLE_HUMAN or fs.status != STATUS_ACTIVE:
            continue
        fs.sentiment[topic] = (alpha * fs.sentiment[topic]
                               + (1.0 - alpha) * polarity)
        fs.push_feed(author, topic, polarity)
        if exposure is not None and f in exposure:
            exposure[f].add(author)


class _Engine:
    def __init__(self, cfg: SimConfig, scan_model: list[dict] | None):
        self.cfg = cfg
        self.world = init_world(cfg)
        self.topics = topic_universe(cfg)
        self.scan_model = scan_model
        self.events: list[InteractionEvent] = []
        self.reports: list[Report] = []
        self.rewards: list[list[float]] = []
        self.rng_humans = substream(cfg.seed, "humans")
        self.campaign_order = self.world.campaign_ids()
        self.policies = {}
        self.rng_campaign = {}
        for c in self.campaign_order:
            rng_policy = substream(cfg.seed, "policy", c)
            if cfg.bot_policy == POLICY_ADAPTIVE:
                self.policies[c] = QPolicy(cfg.policy, rng_policy)
            else:
                self.policies[c] = StaticPolicy(cfg.static_bot_rates,
                                                rng_policy)
            self.rng_campaign[c] = substream(cfg.seed, "campaign", c)
        # pending (obs, actions) per campaign for delayed Q updates
        self.pending = {c: None for c in self.campaign_order}
        self.last_reward = {c: 0.0 for c in self.campaign_order}
        # rolling per-campaign activity for observations
        self.post_steps = {c: [] for c in self.campaign_order}
        self.susp_steps = {c: [] for c in self.campaign_order}
        # per-day exposure sets for exposure-only reporters
        self.exposure = {spec.reporter: set()
                         for spec in self.world.reporters
                         if spec.exposure_only}
        self.step = 0

    # -- logging ----------------------------------------------------

    def _log(self, actor: str, action: str, target: str | None = None,
             polarity: float | None = None, topic: str | None = None):
        # days are 1-indexed, timestamps are 0-indexed steps
        self.events.append(InteractionEvent(
            timestamp=self.step, day=self.step // self.cfg.steps_per_day + 1,
            actor=actor, action=action, target=target, polarity=polarity,
            topic=topic))

    # -- human phase ------------------------------------------------

    def _human_act(self, h: str) -> None:
        state = self.world.accounts[h]
        rng = self.rng_humans
        u = rng.random()
        post, like, follow, _ = state.rates
        if u < post:
            topic = self.topics[rng.randrange(len(self.topics))]
            pol = state.sentiment[topic] + rng.gauss(0.0, POST_NOISE)
            pol = max(-1.0, min(1.0, pol))
            self._log(h, ACTION_POST, polarity=pol, topic=topic)
            _apply_post(self.world, h, topic, pol, self.exposure)
        elif u < post + like:
            if not state.feed:
                return
            author, _t, _p = state.feed.pop(rng.randrange(len(state.feed)))
            self._log(h, ACTION_LIKE, target=author)
            if author in self.exposure:
                self.exposure[author].add(h)
        elif u < post + like + follow:
            candidates = sorted({a for a, _t, _p in state.feed}
                                - state.following - {h})
            candidates = [c for c in candidates
                          if self.world.accounts[c].status == STATUS_ACTIVE]
            if not candidates:
                candidates = [a for a in sorted(self.world.accounts)
                              if a != h and a not in state.following
                              and self.world.accounts[a].status
                              == STATUS_ACTIVE]
            if not candidates:
                return
            target = candidates[rng.randrange(len(candidates))]
            self._follow(h, target, rng)

    def _follow(self, actor: str, target: str, rng) -> None:
        self._log(actor, ACTION_FOLLOW, target=target)
        self.world.accounts[actor].following.add(target)
        self.world.accounts[target].followers.add(actor)
        if target in self.exposure:
            self.exposure[target].add(actor)
        # humans reciprocate follows with fixed probability
        tstate = self.world.accounts[target]
        if (tstate.role == ROLE_HUMAN and tstate.status == STATUS_ACTIVE
                and actor not in tstate.following
                and rng.random() < self.cfg.follow_back_prob):
            self._log(target, ACTION_FOLLOW, target=actor)
            tstate.following.add(actor)
            self.world.accounts[actor].followers.add(target)
            if actor in self.exposure:
                self.exposure[actor].add(target)

    # -- campaign phase ---------------------------------------------

    def _observe(self, c: int) -> tuple:
        window = self.step - self.cfg.steps_per_day
        posts = self.post_steps[c] = [s for s in self.post_steps[c]
                                      if s >= window]
        susps = self.susp_steps[c] = [s for s in self.susp_steps[c]
                                      if s >= window]
        active = [b for b in self.world.campaigns[c]
                  if self.world.accounts[b].status == STATUS_ACTIVE]
        topic = campaign_topic(c)
        converted = sum(
            1 for h in self.world.humans
            if self.world.accounts[h].sentiment[topic]
            >= self.cfg.conversion_threshold)
        obs = observe(len(susps), len(posts) / max(1, len(active)),
                      converted / len(self.world.humans))
        return obs, active

    def _campaign_act(self, c: int) -> None:
        cfg = self.cfg
        rng = self.rng_campaign[c]
        policy = self.policies[c]
        bots = self.world.campaigns[c]

        # reflex: keep the active roster at target strength by waking
        # one reserve bot per step
        active = [b for b in bots
                  if self.world.accounts[b].status == STATUS_ACTIVE]
        if len(active) < cfg.active_bots_per_campaign:
            for b in bots:
                if self.world.accounts[b].status == STATUS_DORMANT:
                    self.world.accounts[b].status = STATUS_ACTIVE
                    self._log(b, ACTION_ACTIVATE, target=b)
                    break

        obs, active = self._observe(c)
        if self.pending[c] is not None:
            prev_obs, prev_actions = self.pending[c]
            for a in prev_actions:
                policy.update(prev_obs, a, self.last_reward[c], obs)

        taken = []
        topic = campaign_topic(c)
        for b in active:
            action = policy.act(obs)
            taken.append(action)
            if action == ACTION_POST:
                self._log(b, ACTION_POST, polarity=cfg.bot_post_polarity,
                          topic=topic)
                _apply_post(self.world, b, topic, cfg.bot_post_polarity,
                            self.exposure)
                self.post_steps[c].append(self.step)
            elif action == ACTION_LIKE:
                peers = [p for p in active
                         if p != b] if cfg.allow_bot_interactions else []
                if peers:
                    target = peers[rng.randrange(len(peers))]
                else:
                    humans = self.world.active_humans()
                    if not humans:
                        continue
                    target = humans[rng.randrange(len(humans))]
                self._log(b, ACTION_LIKE, target=target)
                if target in self.exposure:
                    self.exposure[target].add(b)
            elif action == ACTION_FOLLOW:
                following = self.world.accounts[b].following
                humans = [h for h in self.world.active_humans()
                          if h not in following]
                if not humans:
                    continue
                self._follow(b, humans[rng.randrange(len(humans))], rng)
        self.pending[c] = (obs, taken)

    # -- detector scan ----------------------------------------------

    def _scan(self) -> None:
        if self.scan_model is None:
            return
        day = self.step // self.cfg.steps_per_day + 1
        targets = [a for a in sorted(self.world.accounts)
                   if self.world.accounts[a].status != STATUS_SUSPENDED]
        if not targets:
            return
        rows = [_as_account(self.world.accounts[a]) for a in targets]
        feats = extract_features_bulk(rows, self.events, up_to_day=day)
        probs = forest_probabilities(self.scan_model, feature_matrix(feats))
        for a, p in zip(targets, probs):
            state = self.world.accounts[a]
            # dormant accounts have no activity to act on; only live
            # accounts can be taken down
            if p >= self.cfg.scan_threshold \
                    and state.status == STATUS_ACTIVE:
                state.status = STATUS_SUSPENDED
                self._log(a, ACTION_SUSPEND)
                if state.campaign is not None:
                    self.susp_steps[state.campaign].append(self.step)

    # -- reports ----------------------------------------------------

    def _generate_reports(self, day: int) -> None:
        if not self.world.reporters:
            return
        rng = substream(self.cfg.seed, "reports", day)
        for spec in self.world.reporters:
            if self.world.accounts[spec.reporter].status != STATUS_ACTIVE:
                continue
            if spec.exposure_only:
                pool = self.exposure[spec.reporter]
            else:
                pool = self.world.accounts.keys()
            for subject in sorted(pool):
                if subject == spec.reporter:
                    continue
                sub = self.world.accounts[subject]
                if sub.status == STATUS_SUSPENDED:
                    continue
                hit = spec.tpr if sub.role == ROLE_BOT else spec.fpr
                if rng.random() < spec.report_rate * hit:
                    self.reports.append(Report(day=day, reporter=spec.reporter,
                                               subject=subject))

    # -- main loop --------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.cfg
        for step in range(cfg.total_steps):
            self.step = step
            self.world.step = step
            before = {c: _campaign_snapshot(self.world, c)
                      for c in self.campaign_order}
            for h in self.world.active_humans():
                self._human_act(h)
            for c in self.campaign_order:
                self._campaign_act(c)
            # reports close the day before the platform reacts, so a
            # bot suspended by the day-d scan still collects its day-d
            # reports
            if (step + 1) % cfg.steps_per_day == 0:
                self._generate_reports(step // cfg.steps_per_day + 1)
                for tracked in self.exposure.values():
                    tracked.clear()
            if (step + 1) % cfg.scan_period == 0:
                self._scan()
            step_rewards = []
            for c in self.campaign_order:
                after = _campaign_snapshot(self.world, c)
                r = compute_reward(before[c], after, cfg.infection_delta,
                                   cfg.conversion_threshold, cfg.rewards)
                self.last_reward[c] = r
                step_rewards.append(r)
            self.rewards.append(step_rewards)
        return RunResult(dataset=self._dataset(), rewards=self.rewards,
                         reporters=list(self.world.reporters), config=cfg)

    def _dataset(self) -> Dataset:
        accounts = [_as_account(self.world.accounts[a])
                    for a in sorted(self.world.accounts)]
        return Dataset(accounts=tuple(accounts), events=tuple(self.events),
                       reports=tuple(self.reports), n_days=self.cfg.n_days)


def _as_account(state: AccountState) -> Account:
    return Account(id=state.id, role=state.role, campaign=state.campaign,
                   created_day=state.created_day, status=state.status,
                   sentiment=dict(state.sentiment),
                   metadata=world_metadata(state))


def train_scan_model(cfg: SimConfig) -> list[dict]:
    """Pretrain the platform's scan detector on a benchmark corpus of
    static-policy bots generated under a shifted configuration."""
    bench = run_experiment(benchmark_profile(cfg))
    ds = bench.dataset
    feats = dataset_features(ds)
    X = feature_matrix(feats)
    y = [1 if ds.labels[f.account] == ROLE_BOT else 0 for f in feats]
    params = TreeParams(n_trees=cfg.scan_trees, max_depth=cfg.scan_max_depth,
                        min_leaf=2)
    return train_forest(X, y, params, seed=scan_model_seed(cfg))


def run_experiment(cfg: SimConfig) -> RunResult:
    """Run one full simulation and package the results."""
    cfg.validate()
    scan_model = None
    if cfg.scan_detector == SCAN_DETECTOR_TREES:
        scan_model = train_scan_model(cfg)
    return _Engine(cfg, scan_model).run()


def audit_rewards(cfg: SimConfig, events) -> list[list[float]]:
    """Recompute the per-step reward sequence from an event log alone.

    Replays follower-graph changes, status changes, and the sentiment
    EWMA in event order against a fresh initial world, taking campaign
    snapshots at every step boundary. Matches ``RunResult.rewards``
    exactly (same floats) when given that run's events.
    """
    world = init_world(cfg)
    order = world.campaign_ids()
    by_step: dict[int, list] = {}
    for e in events:
        by_step.setdefault(e.timestamp, []).append(e)
    rewards = []
    for step in range(cfg.total_steps):
        before = {c: _campaign_snapshot(world, c) for c in order}
        for e in by_step.get(step, ()):
            if e.action == ACTION_POST:
                _apply_post(world, e.actor, e.topic, e.polarity)
            elif e.action == ACTION_FOLLOW:
                world.accounts[e.actor].following.add(e.target)
                world.accounts[e.target].followers.add(e.actor)
            elif e.action == ACTION_ACTIVATE:
                world.accounts[e.target].status = STATUS_ACTIVE
            elif e.action == ACTION_SUSPEND:
                world.accounts[e.actor].status = STATUS_SUSPENDED
        rewards.append([
            compute_reward(before[c], _campaign_snapshot(world, c),
                           cfg.infection_delta, cfg.conversion_threshold,
                           cfg.rewards)
            for c in order])
    return rewards
