"""Report-aggregation and detector-fusion strategies.

Human reports and machine detectors both reduce to the same currency: a
PredictionSet mapping covered accounts to bot scores in [0, 1]. Pure
report strategies (count threshold, quality-weighted evidence), pure
model ensembles (hard/soft voting, weighted late fusion), and hybrid
combinations (human-first, model-first, subgroup meta-voting, fused
human channel) all emit flag sets over the covered accounts.

Partial-coverage semantics: a source with no score for an account
abstains in hard and meta voting but contributes score 0 in soft voting
and fusion, which makes "never reported" count as evidence of humanity
in the averaging strategies. Machine sources are expected to cover the
full universe; only the human channel is naturally partial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core_data import Dataset, Report, split_folds
from .detectors import (MixtureParams, TreeParams, dataset_features,
                        score_map, train_bagged_trees,
                        train_mixture_of_experts)
from .metrics import ClassMetrics, evaluate_flags, reporter_f1_table
from .seeds import derive_seed, numpy_rng

# one average-quality reporter's worth of evidence; the default bar for
# the quality-weighted strategy
DEFAULT_TAU = 0.533

# candidate decision thresholds for soft voting and fusion
DEFAULT_THRESHOLD_GRID: tuple[float, ...] = tuple(
    round(0.50 + 0.01 * i, 2) for i in range(46))

DEFAULT_WEIGHT_SAMPLES = 1000

META_VOTE_MAX_SOURCES = 16

HUMAN_SOURCE = "human_ensemble"


@dataclass(frozen=True)
class PredictionSet:
    """One source's bot scores over the accounts it covers."""
    source: str
    scores: Mapping[str, float]

    def __post_init__(self):
        for acct, p in self.scores.items():
            if not (0.0 <= p <= 1.0) or not math.isfinite(p):
                raise ValueError(
                    f"source {self.source!r}: score for {acct!r} "
                    f"outside [0, 1]: {p}")

    @property
    def coverage(self) -> frozenset[str]:
        return frozenset(self.scores)

    def restrict(self, accounts: Iterable[str]) -> "PredictionSet":
        keep = set(accounts)
        return PredictionSet(self.source, {a: s for a, s in
                                           self.scores.items() if a in keep})


@dataclass(frozen=True)
class HumanEnsembleConfig:
    """Per-reporter evidence weights and the flagging bar tau."""
    weights: Mapping[str, float]
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not math.isfinite(self.tau):
            raise ValueError("tau must be finite")
        for rep, w in self.weights.items():
            if w < 0 or not math.isfinite(w):
                raise ValueError(f"weight for reporter {rep!r} invalid: {w}")


@dataclass(frozen=True)
class FusionConfig:
    """Per-source convex weights plus a decision threshold."""
    weights: Mapping[str, float]
    threshold: float

    def __post_init__(self):
        total = math.fsum(self.weights.values())
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("fusion weights must be non-negative")
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"fusion weights sum to {total}, expected 1")
        if not (0.0 <= self.threshold <= 1.0):
            raise ValueError(f"threshold {self.threshold} outside [0, 1]")


# ---------------------------------------------------------------------------
# report-only strategies

def _distinct_reporters(reports: Sequence[Report]) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for r in reports:
        out.setdefault(r.subject, set()).add(r.reporter)
    return out


def count_based(reports: Sequence[Report], k: int) -> set[str]:
    """Flag accounts reported by at least ``k`` distinct reporters."""
    if k < 1:
        raise ValueError(f"k={k} must be >= 1")
    return {subj for subj, who in _distinct_reporters(reports).items()
            if len(who) >= k}


def report_scores(reports: Sequence[Report],
                  config: HumanEnsembleConfig) -> dict[str, float]:
    """Summed reporter weights per reported account (distinct reporters)."""
    out: dict[str, float] = {}
    for subj, who in _distinct_reporters(reports).items():
        try:
            out[subj] = math.fsum(config.weights[rep] for rep in sorted(who))
        except KeyError as exc:
            raise KeyError(f"no weight for reporter {exc.args[0]!r}") from exc
    return out


def quality_weighted(reports: Sequence[Report],
                     config: HumanEnsembleConfig) -> set[str]:
    """Flag accounts whose summed reporter weight reaches tau
    (inclusive)."""
    return {subj for subj, s in report_scores(reports, config).items()
            if s >= config.tau}


def human_flag_channel(reports: Sequence[Report],
                       config: HumanEnsembleConfig,
                       source: str = HUMAN_SOURCE) -> PredictionSet:
    """The human ensemble as a binary voter covering reported accounts."""
    flags = quality_weighted(reports, config)
    scores = {subj: (1.0 if subj in flags else 0.0)
              for subj in _distinct_reporters(reports)}
    return PredictionSet(source=source, scores=scores)


def human_fusion_channel(reports: Sequence[Report],
                         config: HumanEnsembleConfig,
                         source: str = HUMAN_SOURCE) -> PredictionSet:
    """The human ensemble as a graded channel: min(1, s(a) / tau)."""
    if config.tau <= 0:
        raise ValueError("tau must be positive for the fusion channel")
    scores = {subj: min(1.0, s / config.tau)
              for subj, s in report_scores(reports, config).items()}
    return PredictionSet(source=source, scores=scores)


# ---------------------------------------------------------------------------
# model ensembles

def _union_coverage(sets: Sequence[PredictionSet]) -> list[str]:
    if not sets:
        raise ValueError("no prediction sets given")
    names = [s.source for s in sets]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate source names: {names}")
    out: set[str] = set()
    for s in sets:
        out |= s.coverage
    return sorted(out)


def hard_vote(sets: Sequence[PredictionSet]) -> set[str]:
    """Strict majority of cast votes (score >= 0.5 votes bot); sources
    without coverage abstain; ties resolve to human."""
    flags = set()
    for acct in _union_coverage(sets):
        cast = 0
        votes = 0
        for s in sets:
            p = s.scores.get(acct)
            if p is None:
                continue
            cast += 1
            votes += p >= 0.5
        if 2 * votes > cast:
            flags.add(acct)
    return flags


def soft_vote(sets: Sequence[PredictionSet], threshold: float) -> set[str]:
    """Flag when the mean score over all sources reaches the threshold;
    a source without coverage contributes 0."""
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    n = len(sets)
    flags = set()
    for acct in _union_coverage(sets):
        mean = math.fsum(s.scores.get(acct, 0.0) for s in sets) / n
        if mean >= threshold:
            flags.add(acct)
    return flags


def late_fusion(sets: Sequence[PredictionSet],
                config: FusionConfig) -> set[str]:
    """Flag when the weighted score average reaches the threshold."""
    sources = {s.source for s in sets}
    if set(config.weights) != sources:
        raise ValueError(
            f"fusion weights cover {sorted(config.weights)} but sources "
            f"are {sorted(sources)}")
    flags = set()
    for acct in _union_coverage(sets):
        fused = math.fsum(config.weights[s.source] * s.scores.get(acct, 0.0)
                          for s in sets)
        if fused >= config.threshold:
            flags.add(acct)
    return flags


def _f1_curve(score_matrix: np.ndarray, weights: np.ndarray,
              is_bot: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """F1 at every grid threshold for fused scores ``score_matrix @
    weights``."""
    fused = score_matrix @ weights
    pred = fused[:, None] >= grid[None, :]
    tp = (pred & is_bot[:, None]).sum(axis=0)
    fp = (pred & ~is_bot[:, None]).sum(axis=0)
    fn = int(is_bot.sum()) - tp
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore"):
        f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    return f1


def _score_matrix(sets: Sequence[PredictionSet],
                  accounts: Sequence[str]) -> np.ndarray:
    mat = np.zeros((len(accounts), len(sets)))
    for j, s in enumerate(sets):
        for i, acct in enumerate(accounts):
            mat[i, j] = s.scores.get(acct, 0.0)
    return mat


def optimize_soft_threshold(
        sets: Sequence[PredictionSet], labels: Mapping[str, str],
        universe: Iterable[str],
        grid: Sequence[float] = DEFAULT_THRESHOLD_GRID
) -> tuple[float, float]:
    """Grid-search the soft-vote threshold by F1 over ``universe``;
    ties prefer the smallest threshold. Returns (threshold, f1)."""
    universe = sorted(set(universe))
    if not universe:
        raise ValueError("empty validation universe")
    if not grid:
        raise ValueError("empty threshold grid")
    grid_arr = np.asarray(sorted(grid), dtype=float)
    mat = _score_matrix(sets, universe)
    uniform = np.full(len(sets), 1.0 / len(sets))
    is_bot = np.asarray([labels[a] == "bot" for a in universe])
    f1s = _f1_curve(mat, uniform, is_bot, grid_arr)
    best = int(np.argmax(f1s))  # first maximum = smallest threshold
    threshold = float(grid_arr[best])
    # report the F1 the apply path actually yields for the winner
    restricted = [s.restrict(universe) for s in sets]
    f1 = evaluate_flags(soft_vote(restricted, threshold), labels,
                        universe).f1
    return threshold, f1


def optimize_fusion_weights(
        sets: Sequence[PredictionSet], labels: Mapping[str, str],
        universe: Iterable[str],
        n_samples: int = DEFAULT_WEIGHT_SAMPLES, seed: int = 0,
        grid: Sequence[float] = DEFAULT_THRESHOLD_GRID
) -> tuple[FusionConfig, float]:
    """Search random convex weightings (uniform on the simplex via
    normalized unit-exponential draws) jointly with the threshold grid,
    by F1 over ``universe``. Deterministic for a fixed seed; the first
    configuration attaining the best F1 wins. Returns (config, f1)."""
    if n_samples < 1:
        raise ValueError(f"n_samples={n_samples} must be >= 1")
    universe = sorted(set(universe))
    if not universe:
        raise ValueError("empty validation universe")
    grid_arr = np.asarray(sorted(grid), dtype=float)
    mat = _score_matrix(sets, universe)
    is_bot = np.asarray([labels[a] == "bot" for a in universe])
    rng = numpy_rng(seed, "fusion-weights")
    draws = rng.standard_exponential(size=(n_samples, len(sets)))
    draws /= draws.sum(axis=1, keepdims=True)
    best_f1 = -1.0
    best_weights = None
    best_threshold = None
    for i in range(n_samples):
        f1s = _f1_curve(mat, draws[i], is_bot, grid_arr)
        j = int(np.argmax(f1s))
        if f1s[j] > best_f1:
            best_f1 = float(f1s[j])
            best_weights = draws[i]
            best_threshold = float(grid_arr[j])
    weights = {s.source: float(w) for s, w in zip(sets, best_weights)}
    # exact simplex normalization after float rounding
    total = math.fsum(weights.values())
    weights = {k: v / total for k, v in weights.items()}
    config = FusionConfig(weights=weights, threshold=best_threshold)
    # report the F1 the apply path actually yields for the winner
    restricted = [s.restrict(universe) for s in sets]
    f1 = evaluate_flags(late_fusion(restricted, config), labels, universe).f1
    return config, f1


# ---------------------------------------------------------------------------
# hybrid strategies

def human_first(ai_sets: Sequence[PredictionSet],
                reports: Sequence[Report], threshold: float) -> set[str]:
    """Soft-vote the machine sources into an interim decision, then
    hard-vote that decision against one bot-vote per distinct reporter.
    Unreported accounts keep the interim decision; ties go human."""
    interim = soft_vote(ai_sets, threshold)
    reporters = _distinct_reporters(reports)
    flags = set()
    for acct in sorted(set(_union_coverage(ai_sets)) | set(reporters)):
        bot_votes = len(reporters.get(acct, ())) + (acct in interim)
        total = len(reporters.get(acct, ())) + 1
        if 2 * bot_votes > total:
            flags.add(acct)
    return flags


def model_first(ai_sets: Sequence[PredictionSet],
                reports: Sequence[Report], config: HumanEnsembleConfig,
                threshold: float) -> set[str]:
    """Resolve the human reports into a binary channel first
    (quality-weighted), then soft-vote it with the machine sources,
    unweighted."""
    human = human_flag_channel(reports, config)
    return soft_vote(list(ai_sets) + [human], threshold)


def meta_vote(sets: Sequence[PredictionSet], threshold: float,
              max_sources: int = META_VOTE_MAX_SOURCES) -> set[str]:
    """Majority over the hard- and soft-vote outcomes of every
    non-empty source subgroup (2 * (2^n - 1) outcomes per account);
    ties resolve to human."""
    n = len(sets)
    if n < 1:
        raise ValueError("no prediction sets given")
    if n > max_sources:
        raise ValueError(
            f"{n} sources exceed the meta-vote enumeration bound "
            f"{max_sources}")
    if not (0.0 <= threshold <= 1.0):
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    accounts = _union_coverage(sets)
    total_outcomes = 2 * ((1 << n) - 1)
    flags = set()
    for acct in accounts:
        score = [s.scores.get(acct) for s in sets]
        # subset DP keyed by bitmask: score sum, cast votes, bot votes
        sums = [0.0] * (1 << n)
        cast = [0] * (1 << n)
        votes = [0] * (1 << n)
        sizes = [0] * (1 << n)
        bot_outcomes = 0
        for mask in range(1, 1 << n):
            low = mask & -mask
            rest = mask ^ low
            j = low.bit_length() - 1
            covered = score[j] is not None
            sums[mask] = sums[rest] + (score[j] if covered else 0.0)
            cast[mask] = cast[rest] + covered
            votes[mask] = votes[rest] + (covered and score[j] >= 0.5)
            sizes[mask] = sizes[rest] + 1
            bot_outcomes += 2 * votes[mask] > cast[mask]          # hard
            bot_outcomes += sums[mask] / sizes[mask] >= threshold  # soft
        if 2 * bot_outcomes > total_outcomes:
            flags.add(acct)
    return flags


def hybrid_late_fusion(ai_sets: Sequence[PredictionSet],
                       reports: Sequence[Report],
                       human_config: HumanEnsembleConfig,
                       fusion_config: FusionConfig) -> set[str]:
    """Late fusion over the machine sources plus a graded human channel
    whose score is min(1, s(a) / tau)."""
    channel = human_fusion_channel(reports, human_config)
    return late_fusion(list(ai_sets) + [channel], fusion_config)


# ---------------------------------------------------------------------------
# cross-validated comparison

STRATEGY_HARD = "hard_vote"
STRATEGY_SOFT = "soft_vote"
STRATEGY_LATE = "late_fusion"
STRATEGY_HUMAN = HUMAN_SOURCE
STRATEGY_HUMAN_FIRST = "human_first"
STRATEGY_MODEL_FIRST = "model_first"
STRATEGY_META = "meta_vote"
STRATEGY_HYBRID_LATE = "hybrid_late_fusion"

ENSEMBLE_STRATEGIES = (STRATEGY_HARD, STRATEGY_SOFT, STRATEGY_LATE,
                       STRATEGY_HUMAN, STRATEGY_HUMAN_FIRST,
                       STRATEGY_MODEL_FIRST, STRATEGY_META,
                       STRATEGY_HYBRID_LATE)


@dataclass(frozen=True)
class CvResult:
    metrics: Mapping[str, ClassMetrics]
    fold_details: tuple[dict, ...]
    settings: Mapping[str, object]
    flags: Mapping[str, frozenset[str]] = field(default_factory=dict)


def cross_validated_compare(
        ds: Dataset,
        strategies: Sequence[str] | None = None,
        k: int = 5,
        seed: int = 0,
        detectors: Sequence[str] = ("trees", "mixture"),
        external_sources: Sequence[str] = (),
        tree_params: TreeParams | None = None,
        mixture_params: MixtureParams | None = None,
        threshold_grid: Sequence[float] = DEFAULT_THRESHOLD_GRID,
        n_weight_samples: int = DEFAULT_WEIGHT_SAMPLES) -> CvResult:
    """K-fold comparison of detectors and aggregation strategies.

    Per fold, detectors train on the train split and every threshold,
    fusion weight, reporter weight, and tau is chosen on the train split
    only; flags are then produced for the held-out accounts. Reported
    metrics pool the out-of-fold flags over the full universe.
    """
    tree_params = tree_params or TreeParams()
    mixture_params = mixture_params or MixtureParams()
    detector_names = list(detectors) + list(external_sources)
    if strategies is None:
        strategies = tuple(detector_names) + ENSEMBLE_STRATEGIES
    unknown = (set(strategies) - set(detector_names)
               - set(ENSEMBLE_STRATEGIES))
    if unknown:
        raise ValueError(f"unknown strategies: {sorted(unknown)}")

    for source in external_sources:
        if source not in ds.external_predictions:
            raise ValueError(f"dataset has no external source {source!r}")
        missing = set(ds.universe) - set(ds.external_predictions[source])
        if missing:
            raise ValueError(
                f"external source {source!r} must cover the full universe; "
                f"missing {sorted(missing)[:5]}")

    folds = split_folds(ds, k, seed)
    features = {fv.account: fv for fv in dataset_features(ds)}
    labels01 = {a: int(ds.labels[a] == "bot") for a in ds.universe}

    pooled: dict[str, set[str]] = {s: set() for s in strategies}
    fold_details: list[dict] = []

    for f in range(k):
        train_ids = folds.train_ids(f)
        test_ids = folds.test_ids(f)
        for name, ids in (("train", train_ids), ("test", test_ids)):
            classes = {ds.labels[a] for a in ids}
            if len(classes) < 2:
                raise ValueError(
                    f"fold {f} {name} split contains a single class")

        train_fv = [features[a] for a in train_ids]
        train_y = [labels01[a] for a in train_ids]

        ai_sets_full: list[PredictionSet] = []
        for name in detectors:
            if name == "trees":
                model = train_bagged_trees(train_fv, train_y, tree_params,
                                           seed=derive_seed(seed, "cv", f,
                                                            "trees"))
            elif name == "mixture":
                model = train_mixture_of_experts(train_fv, train_y,
                                                 mixture_params)
            else:
                raise ValueError(f"unknown detector {name!r}")
            scores = score_map(model, [features[a] for a in ds.universe])
            ai_sets_full.append(PredictionSet(source=name, scores=scores))
        for source in external_sources:
            ai_sets_full.append(PredictionSet(
                source=source, scores=dict(ds.external_predictions[source])))

        ai_train = [s.restrict(train_ids) for s in ai_sets_full]
        ai_test = [s.restrict(test_ids) for s in ai_sets_full]

        # human channel: weights and tau from the train split only
        train_set = set(train_ids)
        test_set = set(test_ids)
        reports_train = [r for r in ds.reports if r.subject in train_set]
        weights = reporter_f1_table(reports_train, ds.labels, train_ids)
        tau = (sum(weights.values()) / len(weights)
               if weights else DEFAULT_TAU)
        human_config = HumanEnsembleConfig(weights=weights, tau=tau)
        reports_test = [r for r in ds.reports
                        if r.subject in test_set and r.reporter in weights]

        soft_t, soft_f1 = optimize_soft_threshold(
            ai_train, ds.labels, train_ids, grid=threshold_grid)
        fusion, fusion_f1 = optimize_fusion_weights(
            ai_train, ds.labels, train_ids, n_samples=n_weight_samples,
            seed=derive_seed(seed, "cv", f, "fusion"), grid=threshold_grid)
        hybrid_train_sets = ai_train + [
            human_fusion_channel(reports_train, human_config).restrict(
                train_ids)]
        hybrid, hybrid_f1 = optimize_fusion_weights(
            hybrid_train_sets, ds.labels, train_ids,
            n_samples=n_weight_samples,
            seed=derive_seed(seed, "cv", f, "hybrid"), grid=threshold_grid)

        for strategy in strategies:
            if strategy in detector_names:
                pset = next(s for s in ai_test if s.source == strategy)
                flags = {a for a, p in pset.scores.items() if p >= 0.5}
            elif strategy == STRATEGY_HUMAN:
                flags = quality_weighted(reports_test, human_config)
            elif strategy == STRATEGY_HARD:
                flags = hard_vote(ai_test)
            elif strategy == STRATEGY_SOFT:
                flags = soft_vote(ai_test, soft_t)
            elif strategy == STRATEGY_LATE:
                flags = late_fusion(ai_test, fusion)
            elif strategy == STRATEGY_HUMAN_FIRST:
                flags = human_first(ai_test, reports_test, soft_t)
            elif strategy == STRATEGY_MODEL_FIRST:
                flags = model_first(ai_test, reports_test, human_config,
                                    soft_t)
            elif strategy == STRATEGY_META:
                voters = ai_test + [human_flag_channel(reports_test,
                                                       human_config)]
                flags = meta_vote(voters, soft_t)
            elif strategy == STRATEGY_HYBRID_LATE:
                flags = hybrid_late_fusion(ai_test, reports_test,
                                           human_config, hybrid)
            else:  # pragma: no cover
                raise AssertionError(strategy)
            pooled[strategy] |= flags

        fold_details.append({
            "fold": f,
            "n_train": len(train_ids),
            "n_test": len(test_ids),
            "tau": tau,
            "soft_threshold": soft_t,
            "soft_train_f1": soft_f1,
            "fusion_weights": dict(fusion.weights),
            "fusion_threshold": fusion.threshold,
            "fusion_train_f1": fusion_f1,
            "hybrid_weights": dict(hybrid.weights),
            "hybrid_threshold": hybrid.threshold,
            "hybrid_train_f1": hybrid_f1,
        })

    metrics = {s: evaluate_flags(pooled[s], ds.labels, ds.universe)
               for s in strategies}
    settings = {
        "k": k,
        "seed": seed,
        "detectors": list(detectors),
        "external_sources": list(external_sources),
        "threshold_grid": {"start": min(threshold_grid),
                           "stop": max(threshold_grid),
                           "step": 0.01,
                           "size": len(threshold_grid)},
        "n_weight_samples": n_weight_samples,
        "tree_params": {"n_trees": tree_params.n_trees,
                        "max_depth": tree_params.max_depth,
                        "min_leaf": tree_params.min_leaf},
        "mixture_params": {"epochs": mixture_params.epochs,
                           "learning_rate": mixture_params.learning_rate},
    }
    return CvResult(metrics=metrics, fold_details=tuple(fold_details),
                    settings=settings,
                    flags={s: frozenset(v) for s, v in pooled.items()})
