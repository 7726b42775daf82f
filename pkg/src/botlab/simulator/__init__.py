"""Agent-based platform simulator with adaptive influence campaigns."""

from .config import (BehaviorRates, PolicyParams, ReporterPoolSpec,
                     ReporterSpec, RewardWeights, SimConfig,
                     benchmark_profile, config_from_dict, config_to_dict)
from .engine import (CampaignSnapshot, RunResult, audit_rewards,
                     compute_reward, run_experiment, train_scan_model)
from .world import WorldState, init_world

__all__ = [
    "BehaviorRates", "CampaignSnapshot", "PolicyParams", "ReporterPoolSpec",
    "ReporterSpec", "RewardWeights", "RunResult", "SimConfig", "WorldState",
    "audit_rewards", "benchmark_profile", "compute_reward",
    "config_from_dict", "config_to_dict", "init_world", "run_experiment",
    "train_scan_model",
]
