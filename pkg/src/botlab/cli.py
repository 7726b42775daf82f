"""Command-line interface.

Subcommands cover the full pipeline: ``simulate`` a platform,
``detect`` (train and score a detector), ``aggregate`` user reports,
``evaluate`` stored predictions, ``cv`` (cross-validated strategy
comparison), ``retrain`` (incremental retraining study), and
``hypothesis`` (regression / permutation / contingency battery with
FDR control).

Options resolve as: command-line flag > TOML config file section named
after the subcommand > built-in default. Every command writes CSV
tables plus a manifest.json recording the effective configuration into
--out, so runs are reproducible from their artifacts alone.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:            # python < 3.11
    import tomli as tomllib

from . import __version__
from .aggregation import (DEFAULT_TAU, DEFAULT_WEIGHT_SAMPLES,
                          ENSEMBLE_STRATEGIES, HumanEnsembleConfig,
                          count_based, cross_validated_compare,
                          quality_weighted)
from .core_data import (ROLE_BOT, Table, load_dataset, write_dataset,
                        write_predictions, write_run_artifact)
from .detectors import (KIND_MIXTURE, KIND_TREES, save_model, score_map,
                        train_bagged_trees, train_mixture_of_experts)
from .detectors.features import dataset_features
from .detectors.mixture import MixtureParams
from .detectors.trees import TreeParams
from .metrics import (TEMPORAL_CUMULATIVE, TEMPORAL_DAY_SPECIFIC,
                      activity_ratios, conditional_bot_probability,
                      confusion, evaluate_flags, reporter_f1_table,
                      temporal_evaluation)
from .retraining import (GroundTruth, HumanSupervised, RetrainPlan,
                         SelfSupervised, run_incremental,
                         training_set_from_dataset)
from .simulator.config import SimConfig, benchmark_profile, config_from_dict, \
    config_to_dict
from .simulator.engine import run_experiment
from .stats import bh_fdr, chi_square_independence, mcnemar, ols_regression, \
    permutation_test

STRATEGY_NAMES = ("ground_truth", "self_supervised", "human_supervised")


def _read_config(path: str | None, section: str) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    sub = doc.get(section, {})
    if not isinstance(sub, dict):
        raise SystemExit(f"config section [{section}] must be a table")
    return sub


def _resolve(args: argparse.Namespace, file_cfg: dict, key: str, default):
    """flag > config file > default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    if key in file_cfg:
        return file_cfg[key]
    return default


def _load_dir(data_dir: str, predictions=()):
    d = Path(data_dir)
    events = d / "events.jsonl"
    reports = d / "reports.csv"
    return load_dataset(
        d / "accounts.jsonl",
        events if events.exists() else None,
        reports if reports.exists() else None,
        predictions_paths=predictions)


def _metrics_row(name: str, flags, labels, universe) -> tuple:
    cm = confusion(flags, labels, universe)
    m = evaluate_flags(flags, labels, universe)
    return (name, cm.tp, cm.fp, cm.fn, cm.tn,
            m.precision, m.recall, m.f1, m.accuracy)

_METRIC_COLUMNS = ("strategy", "tp", "fp", "fn", "tn",
                   "precision", "recall", "f1", "accuracy")


# -- simulate ---------------------------------------------------------------

def _cmd_simulate(args) -> int:
    doc = _read_config(args.config, "simulate")
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.days is not None:
        doc["n_days"] = args.days
    if args.humans is not None:
        doc["n_humans"] = args.humans
    if args.campaigns is not None:
        doc["n_campaigns"] = args.campaigns
    if args.static_bots:
        doc["bot_policy"] = "static"
    if args.no_scan:
        doc["scan_detector"] = "none"
    cfg = config_from_dict(doc)
    result = run_experiment(cfg)
    ds = result.dataset

    out = Path(args.out)
    write_dataset(ds, out)
    order = sorted({a.campaign for a in ds.accounts if a.campaign})
    reward_rows = [(step, name, r)
                   for step, per in enumerate(result.rewards)
                   for name, r in zip(order, per)]
    reporter_rows = [(s.reporter, s.report_rate, s.tpr, s.fpr,
                      int(s.exposure_only)) for s in result.reporters]
    write_run_artifact(
        {"rewards": Table(("step", "campaign", "reward"),
                          tuple(reward_rows)),
         "reporters": Table(("reporter", "report_rate", "tpr", "fpr",
                             "exposure_only"), tuple(reporter_rows))},
        out, config=config_to_dict(cfg), seed=cfg.seed, command="simulate")

    n_susp = sum(1 for a in ds.accounts if a.status == "suspended")
    print(f"simulated {len(ds.accounts)} accounts over {ds.n_days} days: "
          f"{len(ds.events)} events, {len(ds.reports)} reports, "
          f"{n_susp} suspensions -> {out}")
    return 0


# -- detect -----------------------------------------------------------------

def _cmd_detect(args) -> int:
    file_cfg = _read_config(args.config, "detect")
    kind = _resolve(args, file_cfg, "kind", KIND_TREES)
    seed = _resolve(args, file_cfg, "seed", 0)
    train_ds = _load_dir(args.train)
    apply_ds = _load_dir(args.apply) if args.apply else train_ds

    feats = dataset_features(train_ds)
    labels = [1 if train_ds.labels[f.account] == ROLE_BOT else 0
              for f in feats]
    if kind == KIND_TREES:
        params = TreeParams(
            n_trees=_resolve(args, file_cfg, "trees", 100),
            max_depth=_resolve(args, file_cfg, "depth", 8),
            min_leaf=_resolve(args, file_cfg, "min_leaf", 2))
        model = train_bagged_trees(feats, labels, params, seed=seed)
        hyper = {"n_trees": params.n_trees, "max_depth": params.max_depth,
                 "min_leaf": params.min_leaf}
    elif kind == KIND_MIXTURE:
        params = MixtureParams(
            epochs=_resolve(args, file_cfg, "epochs", 400),
            learning_rate=_resolve(args, file_cfg, "lr", 0.5))
        model = train_mixture_of_experts(feats, labels, params)
        hyper = {"epochs": params.epochs,
                 "learning_rate": params.learning_rate}
    else:
        raise SystemExit(f"unknown detector kind {kind!r}")

    source = _resolve(args, file_cfg, "source", kind)
    scores = score_map(model, dataset_features(apply_ds))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_predictions({source: scores}, out / "predictions.csv")
    save_model(model, out / "model.json")

    threshold = _resolve(args, file_cfg, "threshold", 0.5)
    flags = {a for a, s in scores.items() if s >= threshold}
    table = Table(_METRIC_COLUMNS,
                  (_metrics_row(source, flags, apply_ds.labels,
                                apply_ds.universe),))
    write_run_artifact(
        {"detect_metrics": table}, out,
        config={"kind": kind, "source": source, "threshold": threshold,
                "train": args.train, "apply": args.apply or args.train,
                **hyper},
        seed=seed, command="detect")
    print(f"trained {kind} on {len(feats)} accounts; scored "
          f"{len(scores)} -> {out}")
    return 0


# -- aggregate ----------------------------------------------------------------

def _cmd_aggregate(args) -> int:
    file_cfg = _read_config(args.config, "aggregate")
    k = _resolve(args, file_cfg, "k", 3)
    tau = _resolve(args, file_cfg, "tau", DEFAULT_TAU)
    ds = _load_dir(args.data)
    labels, universe = ds.labels, ds.universe

    weights = reporter_f1_table(ds.reports, labels, universe)
    cfg = HumanEnsembleConfig(weights=weights, tau=tau)
    flags_cb = count_based(ds.reports, k)
    flags_qw = quality_weighted(ds.reports, cfg)

    metrics = Table(_METRIC_COLUMNS, (
        _metrics_row(f"count_based_k{k}", flags_cb, labels, universe),
        _metrics_row("quality_weighted", flags_qw, labels, universe)))
    flag_rows = sorted([("count_based", a) for a in flags_cb]
                       + [("quality_weighted", a) for a in flags_qw])
    out = Path(args.out)
    write_run_artifact(
        {"aggregation_metrics": metrics,
         "aggregation_flags": Table(("strategy", "account"),
                                    tuple(flag_rows))},
        out, config={"k": k, "tau": tau, "weights": "reporter_f1"},
        seed=None, command="aggregate")
    print(f"count_based(k={k}) flagged {len(flags_cb)}, quality_weighted "
          f"(tau={tau}) flagged {len(flags_qw)} of {len(universe)} "
          f"accounts -> {out}")
    return 0


# -- evaluate -----------------------------------------------------------------

def _cmd_evaluate(args) -> int:
    file_cfg = _read_config(args.config, "evaluate")
    threshold = _resolve(args, file_cfg, "threshold", 0.5)
    ds = _load_dir(args.data, predictions=args.predictions or ())
    labels, universe = ds.labels, ds.universe

    rows = []
    for source in sorted(ds.external_predictions):
        scores = ds.external_predictions[source]
        flags = {a for a, s in scores.items() if s >= threshold}
        rows.append(_metrics_row(source, flags, labels,
                                 sorted(scores)))
    tables = {}
    if rows:
        tables["prediction_metrics"] = Table(_METRIC_COLUMNS, tuple(rows))

    buckets = conditional_bot_probability(ds.reports, labels, universe)
    tables["report_buckets"] = Table(
        ("k", "n_accounts", "n_bots", "p_bot"),
        tuple((b.k, b.n_accounts, b.n_bots, b.p_bot)
              for _, b in sorted(buckets.items())))

    f1s = reporter_f1_table(ds.reports, labels, universe)
    tables["reporter_f1"] = Table(
        ("reporter", "f1"), tuple(sorted(f1s.items())))

    def pooled(reports):
        return {r.subject for r in reports}

    temporal_rows = []
    for mode in (TEMPORAL_DAY_SPECIFIC, TEMPORAL_CUMULATIVE):
        per_day = temporal_evaluation(ds.reports, labels, universe,
                                      pooled, mode, ds.n_days)
        for day, m in sorted(per_day.items()):
            temporal_rows.append((mode, day, m.precision, m.recall,
                                  m.f1, m.accuracy))
    tables["temporal_metrics"] = Table(
        ("mode", "day", "precision", "recall", "f1", "accuracy"),
        tuple(temporal_rows))

    out = Path(args.out)
    write_run_artifact(tables, out, config={"threshold": threshold},
                       seed=None, command="evaluate")
    print(f"evaluated {len(rows)} prediction sources, "
          f"{len(f1s)} reporters -> {out}")
    return 0


# -- cv -----------------------------------------------------------------------

def _cmd_cv(args) -> int:
    file_cfg = _read_config(args.config, "cv")
    k = _resolve(args, file_cfg, "k", 5)
    seed = _resolve(args, file_cfg, "seed", 0)
    n_weight_samples = _resolve(args, file_cfg, "weight_samples",
                                DEFAULT_WEIGHT_SAMPLES)
    tree_params = TreeParams(
        n_trees=_resolve(args, file_cfg, "trees", 100),
        max_depth=_resolve(args, file_cfg, "depth", 8),
        min_leaf=_resolve(args, file_cfg, "min_leaf", 2))
    strategies = None
    if args.strategies:
        strategies = [s.strip() for s in args.strategies.split(",")
                      if s.strip()]
    ds = _load_dir(args.data, predictions=args.predictions or ())
    external = tuple(args.external or ())

    res = cross_validated_compare(
        ds, strategies=strategies, k=k, seed=seed,
        external_sources=external, tree_params=tree_params,
        n_weight_samples=n_weight_samples)

    metric_rows = [(name, m.precision, m.recall, m.f1, m.accuracy)
                   for name, m in sorted(res.metrics.items())]
    fold_rows = [(d["fold"], d["n_train"], d["n_test"], d["tau"],
                  d["soft_threshold"], d["soft_train_f1"],
                  d["fusion_threshold"], d["fusion_train_f1"],
                  d["hybrid_threshold"], d["hybrid_train_f1"])
                 for d in res.fold_details]
    out = Path(args.out)
    write_run_artifact(
        {"cv_metrics": Table(("strategy", "precision", "recall", "f1",
                              "accuracy"), tuple(metric_rows)),
         "cv_folds": Table(("fold", "n_train", "n_test", "tau",
                            "soft_threshold", "soft_train_f1",
                            "fusion_threshold", "fusion_train_f1",
                            "hybrid_threshold", "hybrid_train_f1"),
                           tuple(fold_rows))},
        out, config=dict(res.settings), seed=seed, command="cv")
    best = max(res.metrics.items(), key=lambda kv: kv[1].f1)
    print(f"cross-validated {len(res.metrics)} strategies over {k} folds; "
          f"best f1 {best[1].f1:.3f} ({best[0]}) -> {out}")
    return 0


# -- retrain ------------------------------------------------------------------

def _cmd_retrain(args) -> int:
    file_cfg = _read_config(args.config, "retrain")
    seed = _resolve(args, file_cfg, "seed", 0)
    kind = _resolve(args, file_cfg, "kind", KIND_TREES)
    confidence = _resolve(args, file_cfg, "confidence", 0.7)
    tau = _resolve(args, file_cfg, "tau", None)
    ds = _load_dir(args.data)

    if args.base:
        base = training_set_from_dataset(_load_dir(args.base))
        base_src = args.base
    else:
        bench = run_experiment(benchmark_profile(SimConfig(seed=seed)))
        base = training_set_from_dataset(bench.dataset)
        base_src = "benchmark"

    name = args.strategy
    if name == "ground_truth":
        strategy = GroundTruth()
    elif name == "self_supervised":
        strategy = SelfSupervised(confidence=confidence)
    elif name == "human_supervised":
        weights = reporter_f1_table(ds.reports, ds.labels, ds.universe)
        if not weights:
            raise SystemExit("human_supervised needs reports in the dataset")
        t = tau if tau is not None else sum(weights.values()) / len(weights)
        strategy = HumanSupervised(HumanEnsembleConfig(weights=weights,
                                                       tau=t))
    else:
        raise SystemExit(f"unknown strategy {name!r}; choose from "
                         f"{', '.join(STRATEGY_NAMES)}")

    plan = RetrainPlan(base=base, strategy=strategy, kind=kind,
                       tree_params=TreeParams(
                           n_trees=_resolve(args, file_cfg, "trees", 100),
                           max_depth=_resolve(args, file_cfg, "depth", 8),
                           min_leaf=_resolve(args, file_cfg, "min_leaf", 2)),
                       seed=seed)
    report = run_incremental(ds, plan)
    rows = [(d.day, d.n_new, d.n_pool, d.n_eval, d.baseline_f1,
             d.retrained_f1, d.relative_improvement) for d in report.days]
    out = Path(args.out)
    config = {"strategy": name, "kind": kind, "seed": seed,
              "base": base_src, "n_base": len(base.labels)}
    if name == "self_supervised":
        config["confidence"] = confidence
    if name == "human_supervised":
        config["tau"] = strategy.config.tau
    write_run_artifact(
        {"retrain_days": Table(
            ("day", "n_new", "n_pool", "n_eval", "baseline_f1",
             "retrained_f1", "relative_improvement"), tuple(rows))},
        out, config=config, seed=seed, command="retrain")
    print(f"retrained ({name}) over {ds.n_days} days; final pool "
          f"{report.days[-1].n_pool} accounts -> {out}")
    return 0


# -- hypothesis ---------------------------------------------------------------

def _cmd_hypothesis(args) -> int:
    file_cfg = _read_config(args.config, "hypothesis")
    seed = _resolve(args, file_cfg, "seed", 0)
    n_resamples = _resolve(args, file_cfg, "resamples", 10000)
    tau = _resolve(args, file_cfg, "tau", DEFAULT_TAU)
    k = _resolve(args, file_cfg, "k", 3)
    ds = _load_dir(args.data)
    labels, universe = ds.labels, ds.universe
    if not ds.reports:
        raise SystemExit("hypothesis battery needs reports in the dataset")

    f1s = reporter_f1_table(ds.reports, labels, universe)
    reporters = sorted(f1s)
    results: list[tuple[str, float, float, str]] = []

    # reporter skill vs exposure to bot activity
    ratio_fields = ("ber_like", "ber_follow", "bxr_like", "bxr_follow")
    ratios = {rep: activity_ratios(ds.events, labels, rep)
              for rep in reporters}
    for fieldname in ratio_fields:
        xs, ys = [], []
        for rep in reporters:
            v = getattr(ratios[rep], fieldname)
            if v is not None:
                xs.append(v)
                ys.append(f1s[rep])
        try:
            fit = ols_regression(xs, ys)
        except ValueError:
            continue
        results.append((f"reporter_f1_vs_{fieldname}", fit.slope,
                        fit.p_value, "ols"))

    # does pooled report quality drift over days?
    per_day = temporal_evaluation(ds.reports, labels, universe,
                                  lambda rs: {r.subject for r in rs},
                                  TEMPORAL_DAY_SPECIFIC, ds.n_days)
    days = sorted(per_day)
    try:
        fit = ols_regression([float(d) for d in days],
                             [per_day[d].f1 for d in days])
        results.append(("pooled_f1_vs_day", fit.slope, fit.p_value, "ols"))
    except ValueError:
        pass

    # high-volume vs low-volume reporters
    volume = {rep: 0 for rep in reporters}
    for r in ds.reports:
        volume[r.reporter] += 1
    ordered = sorted(volume.values())
    median = ordered[len(ordered) // 2]
    high = [f1s[rep] for rep in reporters if volume[rep] > median]
    low = [f1s[rep] for rep in reporters if volume[rep] <= median]
    if high and low:
        res = permutation_test(high, low, n_resamples=n_resamples, seed=seed)
        results.append(("reporter_f1_high_vs_low_volume", res.statistic,
                        res.p_value, res.method))

    # aggregated flags vs ground truth, and strategy disagreement
    weights = reporter_f1_table(ds.reports, labels, universe)
    flags_qw = quality_weighted(ds.reports,
                                HumanEnsembleConfig(weights=weights, tau=tau))
    flags_cb = count_based(ds.reports, k)
    bots = set(ds.bots)
    table = [[0, 0], [0, 0]]
    for a in universe:
        table[0 if a in flags_qw else 1][0 if a in bots else 1] += 1
    try:
        res = chi_square_independence(table)
        results.append(("quality_weighted_vs_truth", res.statistic,
                        res.p_value, res.method))
    except ValueError:
        pass
    b = c = 0
    for a in universe:
        cb_right = (a in flags_cb) == (a in bots)
        qw_right = (a in flags_qw) == (a in bots)
        if cb_right and not qw_right:
            b += 1
        elif qw_right and not cb_right:
            c += 1
    if b + c > 0:
        res = mcnemar(b, c)
        results.append(("count_based_vs_quality_weighted", res.statistic,
                        res.p_value, res.method))

    adjusted = bh_fdr([r[2] for r in results])
    rows = [(name, stat, p_raw, p_fdr, method)
            for (name, stat, p_raw, method), p_fdr
            in zip(results, adjusted)]
    out = Path(args.out)
    write_run_artifact(
        {"hypothesis_tests": Table(
            ("test", "statistic", "p_raw", "p_fdr", "method"),
            tuple(rows))},
        out, config={"seed": seed, "n_resamples": n_resamples, "tau": tau,
                     "k": k}, seed=seed, command="hypothesis")
    n_sig = sum(1 for r in rows if r[3] < 0.05)
    print(f"ran {len(rows)} hypothesis tests; {n_sig} significant at "
          f"FDR 0.05 -> {out}")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="botlab",
        description="bot-detection lab: simulation, detection, report "
                    "aggregation, and evaluation")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        if data:
            sp.add_argument("--data", required=True,
                            help="dataset directory (accounts.jsonl, "
                                 "events.jsonl, reports.csv)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--config", help="TOML config file")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("simulate", help="run the platform simulation")
    common(sp, data=False)
    sp.add_argument("--days", type=int)
    sp.add_argument("--humans", type=int)
    sp.add_argument("--campaigns", type=int)
    sp.add_argument("--static-bots", action="store_true")
    sp.add_argument("--no-scan", action="store_true")
    sp.set_defaults(func=_cmd_simulate)

    sp = sub.add_parser("detect", help="train a detector and score accounts")
    sp.add_argument("--train", required=True, help="training dataset dir")
    sp.add_argument("--apply", help="dataset dir to score (default: train)")
    common(sp, data=False)
    sp.add_argument("--kind", choices=(KIND_TREES, KIND_MIXTURE))
    sp.add_argument("--trees", type=int)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--min-leaf", type=int, dest="min_leaf")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--source", help="name for the prediction source")
    sp.set_defaults(func=_cmd_detect)

    sp = sub.add_parser("aggregate", help="aggregate user reports into flags")
    common(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--tau", type=float)
    sp.set_defaults(func=_cmd_aggregate)

    sp = sub.add_parser("evaluate", help="evaluate predictions and reports")
    common(sp)
    sp.add_argument("--predictions", action="append",
                    help="predictions CSV (repeatable)")
    sp.add_argument("--threshold", type=float)
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("cv", help="cross-validated strategy comparison")
    common(sp)
    sp.add_argument("--k", type=int)
    sp.add_argument("--strategies", help="comma-separated strategy names")
    sp.add_argument("--predictions", action="append")
    sp.add_argument("--external", action="append",
                    help="external prediction source to include (repeatable)")
    sp.add_argument("--trees", type=int)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--min-leaf", type=int, dest="min_leaf")
    sp.add_argument("--weight-samples", type=int, dest="weight_samples")
    sp.set_defaults(func=_cmd_cv)

    sp = sub.add_parser("retrain", help="incremental retraining study")
    common(sp)
    sp.add_argument("--strategy", required=True, choices=STRATEGY_NAMES)
    sp.add_argument("--base", help="base corpus dataset dir "
                                   "(default: generated benchmark)")
    sp.add_argument("--kind", choices=(KIND_TREES, KIND_MIXTURE))
    sp.add_argument("--confidence", type=float)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--trees", type=int)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--min-leaf", type=int, dest="min_leaf")
    sp.set_defaults(func=_cmd_retrain)

    sp = sub.add_parser("hypothesis", help="statistical test battery")
    common(sp)
    sp.add_argument("--resamples", type=int)
    sp.add_argument("--tau", type=float)
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=_cmd_hypothesis)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
