"""Simulation configuration.

Defaults describe the reference scenario: 225 humans plus 4 influence
campaigns of 20 bots each (5 active, 15 held in reserve), five
simulated days of 48 steps, a daily label-blind detector scan, and a
pool of 86 heterogeneous reporters. Every campaign must field exactly
20 bots between its active and reserve slots.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

from ..seeds import derive_seed

BOTS_PER_CAMPAIGN = 20

POLICY_ADAPTIVE = "adaptive"
POLICY_STATIC = "static"

SCAN_DETECTOR_TREES = "trees"
SCAN_DETECTOR_NONE = "none"


@dataclass(frozen=True)
class BehaviorRates:
    """Per-step action distribution: exactly one of post / like /
    follow / idle is drawn each step."""
    post: float
    like: float
    follow: float
    idle: float

    def validate(self, name: str) -> None:
        vals = (self.post, self.like, self.follow, self.idle)
        if any(v < 0 for v in vals):
            raise ValueError(f"{name}: negative rate")
        if abs(math.fsum(vals) - 1.0) > 1e-9:
            raise ValueError(f"{name}: rates sum to {math.fsum(vals)}, "
                             f"expected 1")


@dataclass(frozen=True)
class RewardWeights:
    activation: float = 1.0            # per new human follower
    infection: float = 1.0             # per human nudged toward target
    termination: float = 5.0           # per human crossing conversion
    suspension_penalty: float = -5.0   # per own bot suspended


@dataclass(frozen=True)
class PolicyParams:
    epsilon: float = 0.1
    learning_rate: float = 0.2
    discount: float = 0.9

    def validate(self) -> None:
        if not (0.0 <= self.epsilon <= 1.0):
            raise ValueError(f"epsilon {self.epsilon} outside [0, 1]")
        if not (0.0 < self.learning_rate <= 1.0):
            raise ValueError("learning_rate must be in (0, 1]")
        if not (0.0 <= self.discount < 1.0):
            raise ValueError("discount must be in [0, 1)")


@dataclass(frozen=True)
class ReporterPoolSpec:
    """Ranges for per-reporter draws. Each reporter gets a daily
    report propensity, a true/false positive rate, and possibly an
    exposure-only flag (reporting only accounts encountered that day).
    Defaults are calibrated so the pool's mean reporter F1 over a
    default run lands near 0.533."""
    n_reporters: int = 86
    report_rate: tuple[float, float] = (0.6, 1.0)
    tpr: tuple[float, float] = (0.0625, 0.225)
    fpr: tuple[float, float] = (0.0001, 0.0008)
    exposure_only_fraction: float = 0.0

    def validate(self) -> None:
        if self.n_reporters < 0:
            raise ValueError("n_reporters must be >= 0")
        for name, (lo, hi) in (("report_rate", self.report_rate),
                               ("tpr", self.tpr), ("fpr", self.fpr)):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError(f"{name} range [{lo}, {hi}] invalid")
        if not (0.0 <= self.exposure_only_fraction <= 1.0):
            raise ValueError("exposure_only_fraction outside [0, 1]")


@dataclass(frozen=True)
class ReporterSpec:
    """One realized reporter."""
    reporter: str
    report_rate: float
    tpr: float
    fpr: float
    exposure_only: bool


@dataclass(frozen=True)
class SimConfig:
    n_humans: int = 225
    n_campaigns: int = 4
    active_bots_per_campaign: int = 5
    reserve_bots_per_campaign: int = 15
    n_days: int = 5
    steps_per_day: int = 48
    mean_initial_degree: float = 4.5
    ewma_alpha: float = 0.9
    infection_delta: float = 0.1
    conversion_threshold: float = 0.8
    rewards: RewardWeights = field(default_factory=RewardWeights)
    human_rates: BehaviorRates = field(default_factory=lambda: BehaviorRates(
        post=0.10, like=0.22, follow=0.03, idle=0.65))
    human_rate_spread: float = 0.5
    follow_back_prob: float = 0.3
    bot_policy: str = POLICY_ADAPTIVE
    static_bot_rates: BehaviorRates = field(
        default_factory=lambda: BehaviorRates(post=0.45, like=0.25,
                                              follow=0.15, idle=0.15))
    policy: PolicyParams = field(default_factory=PolicyParams)
    bot_post_polarity: float = 0.9
    allow_bot_interactions: bool = True
    scan_period_steps: int | None = None  # None = one scan per day
    scan_threshold: float = 0.5
    scan_detector: str = SCAN_DETECTOR_TREES
    scan_trees: int = 25
    scan_max_depth: int = 6
    reporter_pool: ReporterPoolSpec = field(default_factory=ReporterPoolSpec)
    seed: int = 0

    @property
    def bots_per_campaign(self) -> int:
        return self.active_bots_per_campaign + self.reserve_bots_per_campaign

    @property
    def n_bots(self) -> int:
        return self.n_campaigns * self.bots_per_campaign

    @property
    def n_accounts(self) -> int:
        return self.n_humans + self.n_bots

    @property
    def total_steps(self) -> int:
        return self.n_days * self.steps_per_day

    @property
    def scan_period(self) -> int:
        return (self.steps_per_day if self.scan_period_steps is None
                else self.scan_period_steps)

    def validate(self) -> None:
        if self.n_humans < 1:
            raise ValueError("n_humans must be >= 1")
        if self.n_campaigns < 1:
            raise ValueError("n_campaigns must be >= 1")
        if self.bots_per_campaign != BOTS_PER_CAMPAIGN:
            raise ValueError(
                f"active + reserve bots per campaign must equal "
                f"{BOTS_PER_CAMPAIGN}, got {self.bots_per_campaign}")
        if self.active_bots_per_campaign < 1:
            raise ValueError("each campaign needs at least 1 active bot")
        if self.n_days < 1 or self.steps_per_day < 1:
            raise ValueError("n_days and steps_per_day must be >= 1")
        if not (3.0 <= self.mean_initial_degree <= 6.0):
            raise ValueError(
                f"mean_initial_degree {self.mean_initial_degree} "
                f"outside [3, 6]")
        if self.mean_initial_degree > self.n_accounts - 1:
            raise ValueError("mean_initial_degree exceeds account count")
        if not (0.0 <= self.ewma_alpha <= 1.0):
            raise ValueError("ewma_alpha outside [0, 1]")
        if self.infection_delta <= 0:
            raise ValueError("infection_delta must be positive")
        if not (-1.0 <= self.conversion_threshold <= 1.0):
            raise ValueError("conversion_threshold outside [-1, 1]")
        self.human_rates.validate("human_rates")
        self.static_bot_rates.validate("static_bot_rates")
        if not (0.0 <= self.human_rate_spread < 1.0):
            raise ValueError("human_rate_spread outside [0, 1)")
        engaged = 1.0 - self.human_rates.idle
        if (1.0 + self.human_rate_spread) * engaged > 1.0 + 1e-9:
            raise ValueError(
                "human_rate_spread pushes engagement rates above 1")
        if not (0.0 <= self.follow_back_prob <= 1.0):
            raise ValueError("follow_back_prob outside [0, 1]")
        if self.bot_policy not in (POLICY_ADAPTIVE, POLICY_STATIC):
            raise ValueError(f"unknown bot_policy {self.bot_policy!r}")
        self.policy.validate()
        if not (-1.0 <= self.bot_post_polarity <= 1.0):
            raise ValueError("bot_post_polarity outside [-1, 1]")
        if self.scan_period < 1:
            raise ValueError("scan period must be >= 1 step")
        if not (0.0 <= self.scan_threshold <= 1.0):
            raise ValueError("scan_threshold outside [0, 1]")
        if self.scan_detector not in (SCAN_DETECTOR_TREES,
                                      SCAN_DETECTOR_NONE):
            raise ValueError(f"unknown scan_detector {self.scan_detector!r}")
        if self.scan_trees < 1 or self.scan_max_depth < 1:
            raise ValueError("scan detector hyperparameters must be >= 1")
        self.reporter_pool.validate()
        if self.reporter_pool.n_reporters > self.n_humans:
            raise ValueError("more reporters than humans")


def benchmark_profile(base: SimConfig | None = None,
                      seed: int | None = None) -> SimConfig:
    """A distribution-shifted pretraining corpus profile: one campaign
    of 20 permanently active, non-adaptive bots posting on a fixed
    schedule, shifted human behavior, no scanning, no reporters."""
    if base is None:
        base = SimConfig()
    if seed is None:
        seed = derive_seed(base.seed, "benchmark")
    return replace(
        base,
        n_humans=75,
        n_campaigns=1,
        active_bots_per_campaign=BOTS_PER_CAMPAIGN,
        reserve_bots_per_campaign=0,
        n_days=3,
        human_rates=BehaviorRates(post=0.14, like=0.18, follow=0.04,
                                  idle=0.64),
        bot_policy=POLICY_STATIC,
        scan_detector=SCAN_DETECTOR_NONE,
        reporter_pool=replace(base.reporter_pool, n_reporters=0),
        seed=seed,
    )


def config_to_dict(cfg: SimConfig) -> dict:
    """Plain-dict form of a config, for manifests and TOML round trips."""
    return asdict(cfg)


def config_from_dict(doc: dict) -> SimConfig:
    """Build a config from a (possibly partial) plain dict."""
    doc = dict(doc)

    def sub(cls, key, **extra):
        if key in doc:
            val = doc.pop(key)
            if isinstance(val, dict):
                val = dict(val, **extra)
                if cls in (ReporterPoolSpec,):
                    for rk in ("report_rate", "tpr", "fpr"):
                        if rk in val and isinstance(val[rk], (list, tuple)):
                            val[rk] = tuple(val[rk])
                return cls(**val)
            return val
        return None

    kwargs = {}
    for key, cls in (("rewards", RewardWeights),
                     ("human_rates", BehaviorRates),
                     ("static_bot_rates", BehaviorRates),
                     ("policy", PolicyParams),
                     ("reporter_pool", ReporterPoolSpec)):
        val = sub(cls, key)
        if val is not None:
            kwargs[key] = val
    valid = set(SimConfig.__dataclass_fields__)
    unknown = set(doc) - valid
    if unknown:
        raise ValueError(f"unknown simulation config keys: {sorted(unknown)}")
    kwargs.update(doc)
    return SimConfig(**kwargs)
