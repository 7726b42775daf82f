"""Simulator: world construction, dynamics, scans, reports, rewards."""

import random
from bisect import bisect_left, bisect_right
from collections import Counter

import pytest

from botlab.core_data import (ACTION_ACTIVATE, ACTION_FOLLOW, ACTION_IDLE,
                              ACTION_LIKE, ACTION_POST, ACTION_SUSPEND,
                              ROLE_BOT, ROLE_HUMAN, STATUS_ACTIVE,
                              STATUS_DORMANT, STATUS_SUSPENDED,
                              validate_dataset)
from botlab.metrics import conditional_bot_probability
from botlab.seeds import derive_seed
from botlab.simulator import (BehaviorRates, CampaignSnapshot, PolicyParams,
                              ReporterPoolSpec, RewardWeights, SimConfig,
                              audit_rewards, benchmark_profile,
                              compute_reward, config_from_dict,
                              config_to_dict, init_world, run_experiment)
from botlab.simulator.engine import _apply_post, _Engine
from botlab.simulator.policy import (BOT_ACTIONS, Observation, QPolicy,
                                     StaticPolicy, observe)

# small fast profile reused below; scans off unless a test wants them
SMALL = SimConfig(n_humans=40, n_campaigns=1, n_days=2, steps_per_day=12,
                  scan_detector="none",
                  reporter_pool=ReporterPoolSpec(n_reporters=4), seed=11)


def campaign_bots(cfg, campaign):
    return {f"c{campaign}b{j:02d}" for j in range(cfg.bots_per_campaign)}


# ---------------------------------------------------------------------------
# configuration


class TestConfig:
    def test_default_population(self):
        cfg = SimConfig()
        assert cfg.n_accounts == 305
        assert cfg.n_bots == 80
        assert cfg.bots_per_campaign == 20
        assert cfg.total_steps == 240
        assert cfg.scan_period == cfg.steps_per_day

    def test_validation_failures(self):
        with pytest.raises(ValueError, match="outside \\[3, 6\\]"):
            SimConfig(mean_initial_degree=2.0).validate()
        with pytest.raises(ValueError, match="must equal 20"):
            SimConfig(active_bots_per_campaign=6).validate()
        with pytest.raises(ValueError, match="more reporters than humans"):
            SimConfig(n_humans=50, reporter_pool=ReporterPoolSpec(
                n_reporters=60)).validate()
        with pytest.raises(ValueError, match="unknown scan_detector"):
            SimConfig(scan_detector="magic").validate()
        with pytest.raises(ValueError, match="unknown bot_policy"):
            SimConfig(bot_policy="bogus").validate()

    def test_round_trip_through_dict(self):
        cfg = SimConfig(n_humans=60, n_days=3, seed=9,
                        rewards=RewardWeights(termination=7.0),
                        reporter_pool=ReporterPoolSpec(n_reporters=12))
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_unknown_key_rejected(self):
        payload = config_to_dict(SimConfig())
        payload["bogus"] = 1
        with pytest.raises(ValueError, match="unknown simulation config"):
            config_from_dict(payload)

    def test_benchmark_profile_shape(self):
        base = SimConfig(seed=3)
        bench = benchmark_profile(base)
        assert bench.n_humans == 75
        assert bench.n_campaigns == 1
        assert bench.active_bots_per_campaign == 20
        assert bench.reserve_bots_per_campaign == 0
        assert bench.n_days == 3
        assert bench.bot_policy == "static"
        assert bench.scan_detector == "none"
        assert bench.reporter_pool.n_reporters == 0
        assert bench.seed == derive_seed(3, "benchmark")


# ---------------------------------------------------------------------------
# world construction


class TestInitWorld:
    def test_population_and_statuses(self):
        world = init_world(SimConfig(seed=0))
        assert len(world.accounts) == 305
        bots = [a for a in world.accounts.values() if a.role == ROLE_BOT]
        assert len(bots) == 80
        assert world.campaign_ids() == [1, 2, 3, 4]
        for c in world.campaign_ids():
            members = world.campaigns[c]
            assert len(members) == 20
            statuses = Counter(world.accounts[b].status for b in members)
            assert statuses[STATUS_ACTIVE] == 5
            assert statuses[STATUS_DORMANT] == 15
        for h in world.humans:
            assert world.accounts[h].status == STATUS_ACTIVE
            for s in world.accounts[h].sentiment.values():
                assert -0.5 <= s <= 0.5

    def test_mean_out_degree_within_band(self):
        for seed in range(5):
            world = init_world(SimConfig(seed=seed))
            degs = [len(a.following) for a in world.accounts.values()]
            mean = sum(degs) / len(degs)
            assert 3.0 <= mean <= 6.0, f"seed {seed}: {mean}"
            assert sum(len(a.followers) for a in world.accounts.values()) \
                == sum(degs)
            assert all(a.id not in a.following
                       for a in world.accounts.values())

    def test_reporter_draws_respect_ranges(self):
        pool = ReporterPoolSpec(n_reporters=30, report_rate=(0.5, 0.9),
                                tpr=(0.1, 0.3), fpr=(0.0, 0.01),
                                exposure_only_fraction=0.0)
        world = init_world(SimConfig(seed=4, reporter_pool=pool))
        assert len(world.reporters) == 30
        for spec in world.reporters:
            assert spec.reporter.startswith("h")
            assert 0.5 <= spec.report_rate <= 0.9
            assert 0.1 <= spec.tpr <= 0.3
            assert 0.0 <= spec.fpr <= 0.01
            assert spec.exposure_only is False


# ---------------------------------------------------------------------------
# sentiment dynamics


class TestSentimentUpdate:
    def test_ewma_formula(self):
        world = init_world(SimConfig(n_humans=5, n_campaigns=1, seed=1,
                                     scan_detector="none",
                                     reporter_pool=ReporterPoolSpec(
                                         n_reporters=0)))
        author, follower = "h000", "h001"
        world.accounts[author].followers.add(follower)
        world.accounts[follower].sentiment["t1"] = 0.0
        feed_before = len(world.accounts[follower].feed)
        exposure = {follower: set()}
        _apply_post(world, author, "t1", 1.0, exposure)
        assert world.accounts[follower].sentiment["t1"] == \
            pytest.approx(0.1)  # 0.9 * 0 + 0.1 * 1
        assert len(world.accounts[follower].feed) == feed_before + 1
        assert exposure[follower] == {author}

    def test_no_followers_changes_nothing(self):
        world = init_world(SimConfig(n_humans=5, n_campaigns=1, seed=1,
                                     scan_detector="none",
                                     reporter_pool=ReporterPoolSpec(
                                         n_reporters=0)))
        world.accounts["h000"].followers.clear()
        snapshot = {h: dict(world.accounts[h].sentiment)
                    for h in world.humans}
        _apply_post(world, "h000", "t1", 1.0)
        assert {h: dict(world.accounts[h].sentiment)
                for h in world.humans} == snapshot

    def test_non_human_and_inactive_followers_skipped(self):
        world = init_world(SimConfig(n_humans=5, n_campaigns=1, seed=1,
                                     scan_detector="none",
                                     reporter_pool=ReporterPoolSpec(
                                         n_reporters=0)))
        world.accounts["h000"].followers = {"c1b00", "h001"}
        world.accounts["h001"].status = STATUS_SUSPENDED
        bot_sent = dict(world.accounts["c1b00"].sentiment)
        human_sent = dict(world.accounts["h001"].sentiment)
        _apply_post(world, "h000", "t1", 1.0)
        assert dict(world.accounts["c1b00"].sentiment) == bot_sent
        assert dict(world.accounts["h001"].sentiment) == human_sent

    def test_run_keeps_sentiments_and_polarities_bounded(self, default_run):
        ds = default_run.dataset
        for a in ds.accounts:
            for s in a.sentiment.values():
                assert -1.0 <= s <= 1.0
        for e in ds.events:
            if e.action == ACTION_POST:
                assert -1.0 <= e.polarity <= 1.0


# ---------------------------------------------------------------------------
# policies


class TestObservation:
    def test_bucket_boundaries(self):
        assert observe(0, 0.0, 0.0) == Observation(0, 0, 0)
        assert observe(1, 2.0, 0.05) == Observation(1, 1, 1)
        assert observe(3, 6.0, 0.25) == Observation(2, 2, 2)
        assert observe(2, 1.9, 0.04) == Observation(1, 0, 0)

    def test_index_is_base_three(self):
        assert Observation(0, 0, 0).index() == 0
        assert Observation(2, 1, 0).index() == 21
        assert Observation(2, 2, 2).index() == 26


class TestQPolicy:
    PARAMS = PolicyParams(epsilon=0.0, learning_rate=0.2, discount=0.9)

    def test_update_arithmetic(self):
        policy = QPolicy(self.PARAMS, random.Random(0))
        obs = Observation(0, 0, 0)
        policy.update(obs, ACTION_LIKE, 1.0, obs)
        assert policy.q[0][BOT_ACTIONS.index(ACTION_LIKE)] == \
            pytest.approx(0.2)
        policy.update(obs, ACTION_LIKE, 1.0, obs)
        # target = 1 + 0.9 * 0.2; q += 0.2 * (target - 0.2)
        assert policy.q[0][BOT_ACTIONS.index(ACTION_LIKE)] == \
            pytest.approx(0.396)

    def test_greedy_follows_forced_preference(self):
        policy = QPolicy(self.PARAMS, random.Random(0))
        obs = Observation(1, 1, 1)
        policy.q[obs.index()][BOT_ACTIONS.index(ACTION_IDLE)] = 1.0
        assert all(policy.act(obs) == ACTION_IDLE for _ in range(20))

    def test_exploration_stays_in_action_set(self):
        policy = QPolicy(PolicyParams(epsilon=1.0), random.Random(3))
        obs = Observation(0, 0, 0)
        assert {policy.act(obs) for _ in range(50)} <= set(BOT_ACTIONS)


class TestStaticPolicy:
    def test_draw_frequencies_match_rates(self):
        rates = BehaviorRates(0.45, 0.25, 0.15, 0.15)
        policy = StaticPolicy(rates, random.Random(0))
        counts = Counter(policy.act(Observation(0, 0, 0))
                         for _ in range(4000))
        for action, p in zip(BOT_ACTIONS,
                             (rates.post, rates.like, rates.follow,
                              rates.idle)):
            assert abs(counts[action] / 4000 - p) < 0.03, action

    def test_update_is_a_no_op(self):
        policy = StaticPolicy(BehaviorRates(0.25, 0.25, 0.25, 0.25),
                              random.Random(0))
        policy.update(Observation(0, 0, 0), ACTION_POST, 5.0,
                      Observation(0, 0, 0))


# ---------------------------------------------------------------------------
# rewards


class TestComputeReward:
    WEIGHTS = RewardWeights()

    def reward(self, before, after):
        return compute_reward(before, after, delta=0.1, threshold=0.8,
                              weights=self.WEIGHTS)

    def test_new_follower(self):
        before = CampaignSnapshot(2, {"h": 0.0}, 0)
        after = CampaignSnapshot(3, {"h": 0.0}, 0)
        assert self.reward(before, after) == 1.0

    def test_suspension_penalty(self):
        before = CampaignSnapshot(0, {"h": 0.0}, 0)
        after = CampaignSnapshot(0, {"h": 0.0}, 1)
        assert self.reward(before, after) == -5.0

    def test_infection_alone(self):
        before = CampaignSnapshot(0, {"h": 0.0}, 0)
        after = CampaignSnapshot(0, {"h": 0.1}, 0)
        assert self.reward(before, after) == 1.0

    def test_conversion_includes_infection(self):
        before = CampaignSnapshot(0, {"h": 0.70}, 0)
        after = CampaignSnapshot(0, {"h": 0.85}, 0)
        assert self.reward(before, after) == 6.0  # crossing + big shift

    def test_no_change(self):
        snap = CampaignSnapshot(5, {"h": 0.4}, 2)
        assert self.reward(snap, snap) == 0.0

    def test_audit_reconstructs_default_run(self, default_run):
        replayed = audit_rewards(default_run.config,
                                 default_run.dataset.events)
        assert replayed == default_run.rewards


# ---------------------------------------------------------------------------
# full-run behavior


class TestRunExperiment:
    def test_dataset_shape_and_validity(self, default_run):
        ds = default_run.dataset
        validate_dataset(ds)
        assert len(ds.accounts) == 305
        assert len(ds.bots) == 80
        assert ds.n_days == 5
        assert len(default_run.rewards) == 240
        assert all(len(r) == 4 for r in default_run.rewards)

    def test_deterministic_rerun(self):
        # bypasses the session cache on purpose
        first = run_experiment(SMALL)
        second = run_experiment(SMALL)
        assert first.dataset == second.dataset
        assert first.rewards == second.rewards
        assert first.reporters == second.reporters

    def test_minimal_single_step_run(self):
        cfg = SimConfig(steps_per_day=1, n_days=1, scan_detector="none",
                        reporter_pool=ReporterPoolSpec(n_reporters=0))
        run = run_experiment(cfg)
        validate_dataset(run.dataset)
        assert run.dataset.n_days == 1
        assert len(run.dataset.accounts) == 305

    def test_status_transitions_replay(self, default_run):
        cfg = default_run.config
        state = {}
        for a in default_run.dataset.accounts:
            if a.role == ROLE_BOT:
                j = int(a.id.split("b")[1])
                state[a.id] = (STATUS_ACTIVE
                               if j < cfg.active_bots_per_campaign
                               else STATUS_DORMANT)
            else:
                state[a.id] = STATUS_ACTIVE
        for e in default_run.dataset.events:
            if e.action == ACTION_ACTIVATE:
                assert state[e.target] == STATUS_DORMANT, e
                state[e.target] = STATUS_ACTIVE
            elif e.action == ACTION_SUSPEND:
                assert state[e.actor] == STATUS_ACTIVE, e
                state[e.actor] = STATUS_SUSPENDED
        for a in default_run.dataset.accounts:
            assert state[a.id] == a.status, a.id

    def test_suspended_accounts_stop_acting(self, default_run):
        suspended_at = {e.actor: e.timestamp
                        for e in default_run.dataset.events
                        if e.action == ACTION_SUSPEND}
        for e in default_run.dataset.events:
            cutoff = suspended_at.get(e.actor)
            if cutoff is not None:
                assert e.timestamp <= cutoff, e

    def test_activation_reflex_fires(self, default_run):
        activations = [e for e in default_run.dataset.events
                       if e.action == ACTION_ACTIVATE]
        assert activations
        for e in activations:
            assert e.actor == e.target
            assert default_run.dataset.labels[e.actor] == ROLE_BOT

    def test_reports_never_follow_a_suspension(self, default_run):
        suspended_day = {e.actor: e.day for e in default_run.dataset.events
                         if e.action == ACTION_SUSPEND}
        for r in default_run.dataset.reports:
            if r.subject in suspended_day:
                assert r.day <= suspended_day[r.subject], r


class TestScanEdgeCases:
    def test_all_zero_model_never_suspends(self):
        engine = _Engine(SMALL, scan_model=[{"vote": 0}])
        run = engine.run()
        assert not any(e.action == ACTION_SUSPEND
                       for e in run.dataset.events)

    def test_platform_sweep_leaves_a_silent_world(self):
        cfg = SimConfig(n_humans=12, n_campaigns=1,
                        active_bots_per_campaign=20,
                        reserve_bots_per_campaign=0,
                        n_days=3, steps_per_day=12,
                        scan_threshold=0.0, scan_trees=5, scan_max_depth=3,
                        reporter_pool=ReporterPoolSpec(n_reporters=2),
                        seed=7)
        run = run_experiment(cfg)
        ds = run.dataset
        # the day-1 sweep takes down every active account; with no
        # reserves left the remaining days are empty but well-formed
        assert all(a.status == STATUS_SUSPENDED for a in ds.accounts)
        assert max(e.day for e in ds.events) == 1
        assert not any(r.day > 1 for r in ds.reports)
        for step in range(cfg.steps_per_day, cfg.total_steps):
            assert run.rewards[step] == [0.0]
        assert audit_rewards(cfg, ds.events) == run.rewards


# ---------------------------------------------------------------------------
# reporters


class TestReports:
    PERFECT = SimConfig(n_humans=30, n_campaigns=1, n_days=2,
                        steps_per_day=12, scan_detector="none",
                        reporter_pool=ReporterPoolSpec(
                            n_reporters=1, report_rate=(1.0, 1.0),
                            tpr=(1.0, 1.0), fpr=(0.0, 0.0),
                            exposure_only_fraction=0.0),
                        seed=5)

    def test_perfect_reporter_names_every_bot_daily(self, sim):
        run = sim(self.PERFECT)
        reporter = run.reporters[0].reporter
        bots = campaign_bots(self.PERFECT, 1)
        expected = {(day, reporter, b) for day in (1, 2) for b in bots}
        assert {(r.day, r.reporter, r.subject)
                for r in run.dataset.reports} == expected

    def test_perfect_pool_buckets_are_pure(self, sim):
        run = sim(self.PERFECT)
        ds = run.dataset
        buckets = conditional_bot_probability(ds.reports, ds.labels,
                                              ds.universe)
        for k, bucket in buckets.items():
            if k >= 1:
                assert bucket.p_bot == 1.0, k

    def test_silent_pool_reports_nothing(self, sim):
        cfg = SimConfig(n_humans=30, n_campaigns=1, n_days=2,
                        steps_per_day=12, scan_detector="none",
                        reporter_pool=ReporterPoolSpec(
                            n_reporters=5, report_rate=(0.8, 1.0),
                            tpr=(0.0, 0.0), fpr=(0.0, 0.0),
                            exposure_only_fraction=0.0),
                        seed=6)
        assert sim(cfg).dataset.reports == ()


# ---------------------------------------------------------------------------
# adaptive pressure


def pressure_rates(run, campaign):
    """Per-bot posting rates around scans that cost the campaign >= 2
    bots, as (before, after) pairs over one-day windows."""
    cfg = run.config
    w = cfg.steps_per_day
    bots = campaign_bots(cfg, campaign)
    posts = sorted(e.timestamp for e in run.dataset.events
                   if e.action == ACTION_POST and e.actor in bots)
    activates = sorted(e.timestamp for e in run.dataset.events
                       if e.action == ACTION_ACTIVATE and e.target in bots)
    suspends = sorted(e.timestamp for e in run.dataset.events
                      if e.action == ACTION_SUSPEND and e.actor in bots)

    def active_during(step):
        # activations take effect within their step, suspensions land
        # at the end of one (scans close the day)
        return (cfg.active_bots_per_campaign
                + bisect_right(activates, step)
                - bisect_left(suspends, step))

    def rate(lo, hi):  # posts per bot-step over steps in (lo, hi]
        n_posts = bisect_right(posts, hi) - bisect_right(posts, lo)
        bot_steps = sum(active_during(s) for s in range(lo + 1, hi + 1))
        return n_posts / bot_steps if bot_steps else None

    pairs = []
    for t, n in sorted(Counter(suspends).items()):
        if n < 2 or t < w or t + w >= cfg.total_steps:
            continue
        before = rate(t - w, t)
        after = rate(t, t + w)
        if before is not None and after is not None:
            pairs.append((before, after))
    return pairs


class TestAdaptivePressure:
    def test_posting_drops_after_costly_scans(self, sim):
        before, after = [], []
        for seed in range(10):
            run = sim(SimConfig(seed=seed))
            for campaign in (1, 2, 3, 4):
                for b, a in pressure_rates(run, campaign):
                    before.append(b)
                    after.append(a)
        assert len(before) >= 10, "too few qualifying scans to compare"
        mean_before = sum(before) / len(before)
        mean_after = sum(after) / len(after)
        assert mean_before > mean_after, (mean_before, mean_after)
