"""Incremental detector retraining under three supervision regimes.

A detector trained on a base corpus is deployed against a stream of
platform days. Each day it may be retrained on the base corpus plus
accounts selected from the stream so far, where the selection rule is
the supervision regime:

* ground truth: accounts the deployed model flags that a (perfect)
  review process confirms as bots;
* self supervision: accounts the deployed model itself scores above a
  confidence bar, taken on faith;
* human supervision: accounts flagged by quality-weighted aggregation
  of user reports, with no model in the loop.

Days are numbered 1..n_days here. Selection on day d may only use
information through day d-1, so day 1 has nothing to select from and
the day-1 "retrained" model is the baseline object itself. All
selected accounts enter the training pool labeled as bots; wrong
selections (self supervision, noisy reports) poison the pool, which
is the phenomenon under study.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .aggregation import HumanEnsembleConfig, quality_weighted
from .core_data import Dataset, ROLE_BOT
from .detectors import (DetectorModel, KIND_MIXTURE, KIND_TREES, predict_many,
                        train_bagged_trees, train_mixture_of_experts)
from .detectors.features import FeatureVector, dataset_features
from .detectors.mixture import MixtureParams
from .detectors.trees import TreeParams
from .seeds import derive_seed

FLAG_THRESHOLD = 0.5


@dataclass(frozen=True)
class GroundTruth:
    """Deployed-model flags vetted by a perfect oracle."""
    name = "ground_truth"


@dataclass(frozen=True)
class SelfSupervised:
    """Deployed-model scores above ``confidence`` become bot labels."""
    confidence: float = 0.7
    name = "self_supervised"

    def __post_init__(self):
        if not (0.5 < self.confidence <= 1.0):
            raise ValueError(
                f"confidence {self.confidence} outside (0.5, 1]")


@dataclass(frozen=True)
class HumanSupervised:
    """Quality-weighted report aggregation supplies bot labels."""
    config: HumanEnsembleConfig
    name = "human_supervised"


Strategy = GroundTruth | SelfSupervised | HumanSupervised


@dataclass(frozen=True)
class TrainingSet:
    """Base corpus: feature vectors plus 0/1 labels."""
    features: tuple[FeatureVector, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels differ in length")
        if set(self.labels) - {0, 1}:
            raise ValueError("labels must be 0 or 1")
        if len(set(self.labels)) < 2:
            raise ValueError("base corpus needs both classes")


def training_set_from_dataset(ds: Dataset,
                              up_to_day: int | None = None) -> TrainingSet:
    feats = dataset_features(ds, up_to_day=up_to_day)
    labels = tuple(1 if ds.labels[f.account] == ROLE_BOT else 0
                   for f in feats)
    return TrainingSet(features=tuple(feats), labels=labels)


@dataclass(frozen=True)
class RetrainPlan:
    base: TrainingSet
    strategy: Strategy
    kind: str = KIND_TREES
    tree_params: TreeParams = field(default_factory=TreeParams)
    mixture_params: MixtureParams = field(default_factory=MixtureParams)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (KIND_TREES, KIND_MIXTURE):
            raise ValueError(f"unknown detector kind {self.kind!r}")


def _train(plan: RetrainPlan, features, labels, seed: int) -> DetectorModel:
    if plan.kind == KIND_TREES:
        return train_bagged_trees(features, labels, plan.tree_params,
                                  seed=seed)
    return train_mixture_of_experts(features, labels, plan.mixture_params)


def _flags(model: DetectorModel, feats, threshold: float) -> list[str]:
    scores = predict_many(model, feats)
    return [fv.account for fv, s in zip(feats, scores) if s >= threshold]


def select_ground_truth(ds: Dataset, deployed: DetectorModel,
                        day: int) -> list[str]:
    """Accounts flagged by the deployed model on day-1 information and
    confirmed bots. ``day`` is 1-based; requires day >= 2."""
    feats = dataset_features(ds, up_to_day=day - 1)
    return [a for a in _flags(deployed, feats, FLAG_THRESHOLD)
            if ds.labels[a] == ROLE_BOT]


def select_self_supervised(ds: Dataset, deployed: DetectorModel, day: int,
                           confidence: float) -> list[str]:
    """Accounts the deployed model scores >= confidence on day-1
    information, unvetted."""
    feats = dataset_features(ds, up_to_day=day - 1)
    return _flags(deployed, feats, confidence)


def select_human_supervised(ds: Dataset, config: HumanEnsembleConfig,
                            day: int) -> list[str]:
    """Accounts whose accumulated report weight through day-1 clears
    the aggregation threshold."""
    reports = [r for r in ds.reports if r.day <= day - 1]
    return sorted(quality_weighted(reports, config))


def _select(plan: RetrainPlan, ds: Dataset, deployed: DetectorModel,
            day: int) -> list[str]:
    s = plan.strategy
    if isinstance(s, GroundTruth):
        return select_ground_truth(ds, deployed, day)
    if isinstance(s, SelfSupervised):
        return select_self_supervised(ds, deployed, day, s.confidence)
    return select_human_supervised(ds, s.config, day)


@dataclass(frozen=True)
class DayOutcome:
    day: int                      # 1-based
    n_new: int                    # accounts first selected this day
    n_pool: int                   # cumulative selected pool size
    n_eval: int                   # accounts active on this day
    baseline_f1: float
    retrained_f1: float
    relative_improvement: float | str   # percent; "undefined" if base 0


@dataclass(frozen=True)
class RetrainReport:
    strategy: str
    days: tuple[DayOutcome, ...]
    # day -> [(account, feature snapshot day)] for the selection pool,
    # recorded for leakage inspection
    selections: dict[int, tuple[tuple[str, int], ...]]

    def mean_improvement(self, from_day: int = 2) -> float:
        vals = [d.relative_improvement for d in self.days
                if d.day >= from_day
                and not isinstance(d.relative_improvement, str)]
        if not vals:
            raise ValueError("no defined improvements in range")
        return sum(vals) / len(vals)


def _f1(flags: set[str], universe: list[str], labels) -> float:
    tp = fp = fn = 0
    for a in universe:
        truth = labels[a] == ROLE_BOT
        if a in flags:
            if truth:
                tp += 1
            else:
                fp += 1
        elif truth:
            fn += 1
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def relative_improvement(baseline_f1: float,
                         retrained_f1: float) -> float | str:
    if baseline_f1 == 0.0:
        return 0.0 if retrained_f1 == 0.0 else "undefined"
    return 100.0 * (retrained_f1 - baseline_f1) / baseline_f1


def run_incremental(ds: Dataset, plan: RetrainPlan) -> RetrainReport:
    """Deploy, select, retrain, and evaluate across every day of a
    dataset. Returns per-day outcomes against the fixed baseline."""
    baseline = _train(plan, plan.base.features, plan.base.labels, plan.seed)
    deployed = baseline
    pool: dict[str, FeatureVector] = {}
    outcomes = []
    selections: dict[int, tuple[tuple[str, int], ...]] = {}

    for day in range(1, ds.n_days + 1):
        if day == 1:
            new_ids: list[str] = []
            retrained = baseline
        else:
            picked = _select(plan, ds, deployed, day)
            new_ids = [a for a in picked if a not in pool]
            if new_ids:
                snap = dataset_features(ds, up_to_day=day - 1,
                                        accounts=new_ids)
                for fv in snap:
                    pool[fv.account] = fv
            if pool:
                extra = [pool[a] for a in sorted(pool)]
                feats = list(plan.base.features) + extra
                labels = list(plan.base.labels) + [1] * len(extra)
                retrained = _train(plan, feats, labels,
                                   derive_seed(plan.seed, "retrain", day))
            else:
                retrained = baseline
        selections[day] = tuple(sorted((a, pool[a].up_to_day)
                                       for a in pool))

        universe = ds.accounts_active_on_day(day)
        eval_feats = dataset_features(ds, up_to_day=day, accounts=universe)
        base_flags = set(_flags(baseline, eval_feats, FLAG_THRESHOLD))
        new_flags = set(_flags(retrained, eval_feats, FLAG_THRESHOLD))
        f1_b = _f1(base_flags, universe, ds.labels)
        f1_r = _f1(new_flags, universe, ds.labels)
        outcomes.append(DayOutcome(
            day=day, n_new=len(new_ids), n_pool=len(pool),
            n_eval=len(universe), baseline_f1=f1_b, retrained_f1=f1_r,
            relative_improvement=relative_improvement(f1_b, f1_r)))
        deployed = retrained

    return RetrainReport(strategy=plan.strategy.name, days=tuple(outcomes),
                         selections=selections)
