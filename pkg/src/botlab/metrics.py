"""Evaluation metrics for bot-flagging decisions.

Conventions used throughout: the bot class is the positive class, the
confusion matrix is always computed over an explicit account universe,
and any metric with a zero denominator is reported as 0 rather than
NaN, so downstream tables never carry non-finite values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .core_data import ROLE_BOT, ROLE_HUMAN, Report

TEMPORAL_DAY_SPECIFIC = "day_specific"
TEMPORAL_CUMULATIVE = "cumulative"


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float


def _check_flags(flags: Iterable[str], universe: frozenset[str] | set[str],
                 name: str) -> set[str]:
    flags = set(flags)
    stray = flags - set(universe)
    if stray:
        raise ValueError(
            f"{name} contains accounts outside the universe: "
            f"{sorted(stray)[:5]}")
    return flags


def confusion(flags: Iterable[str], labels: Mapping[str, str],
              universe: Iterable[str]) -> ConfusionCounts:
    """Confusion counts of ``flags`` (predicted bots) over ``universe``."""
    universe = set(universe)
    missing = universe - set(labels)
    if missing:
        raise ValueError(
            f"labels missing for accounts: {sorted(missing)[:5]}")
    flags = _check_flags(flags, universe, "flags")
    tp = fp = fn = tn = 0
    for acct in universe:
        is_bot = labels[acct] == ROLE_BOT
        if acct in flags:
            if is_bot:
                tp += 1
            else:
                fp += 1
        else:
            if is_bot:
                fn += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def class_metrics(c: ConfusionCounts) -> ClassMetrics:
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if (precision + recall) else 0.0)
    accuracy = (c.tp + c.tn) / c.total if c.total else 0.0
    return ClassMetrics(precision=precision, recall=recall, f1=f1,
                        accuracy=accuracy)


def evaluate_flags(flags: Iterable[str], labels: Mapping[str, str],
                   universe: Iterable[str]) -> ClassMetrics:
    return class_metrics(confusion(flags, labels, universe))


def agreement_rate(flags_a: Iterable[str], flags_b: Iterable[str],
                   universe: Iterable[str]) -> float:
    """Fraction of the universe on which two flag sets assign the same
    label (both flag, or both don't)."""
    universe = set(universe)
    if not universe:
        raise ValueError("universe is empty")
    a = _check_flags(flags_a, universe, "flags_a")
    b = _check_flags(flags_b, universe, "flags_b")
    disagreements = len(a ^ b)
    return (len(universe) - disagreements) / len(universe)


def cohen_kappa(flags_a: Iterable[str], flags_b: Iterable[str],
                universe: Iterable[str]) -> float:
    """Chance-corrected agreement between two binary flag sets.

    When expected agreement is exactly 1 (both raters degenerate on the
    same class) kappa is defined as 1.
    """
    universe = set(universe)
    if not universe:
        raise ValueError("universe is empty")
    a = _check_flags(flags_a, universe, "flags_a")
    b = _check_flags(flags_b, universe, "flags_b")
    n = len(universe)
    p_o = (n - len(a ^ b)) / n
    pa = len(a) / n
    pb = len(b) / n
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if p_e == 1.0:
        return 1.0
    return (p_o - p_e) / (1 - p_e)


@dataclass(frozen=True)
class ReportBucket:
    """Accounts that collected exactly ``k`` reports."""
    k: int
    n_accounts: int
    n_bots: int
    p_bot: float


def conditional_bot_probability(
        reports: Sequence[Report], labels: Mapping[str, str],
        universe: Iterable[str],
        count_events: bool = False) -> dict[int, ReportBucket]:
    """P(bot | reported exactly k times), for every k present.

    ``k`` counts distinct reporters per subject by default; with
    ``count_events`` it counts raw report rows. The k=0 bucket covers
    unreported accounts, so with no reports at all the result is a
    single bucket whose p_bot is the global bot fraction.
    """
    universe = sorted(set(universe))
    if not universe:
        raise ValueError("universe is empty")
    missing = set(universe) - set(labels)
    if missing:
        raise ValueError(f"labels missing for accounts: {sorted(missing)[:5]}")
    if count_events:
        counts: dict[str, int] = {}
        for r in reports:
            counts[r.subject] = counts.get(r.subject, 0) + 1
    else:
        reporters: dict[str, set[str]] = {}
        for r in reports:
            reporters.setdefault(r.subject, set()).add(r.reporter)
        counts = {subj: len(who) for subj, who in reporters.items()}

    buckets: dict[int, list[int]] = {}
    for acct in universe:
        k = counts.get(acct, 0)
        n, b = buckets.get(k, (0, 0))
        buckets[k] = [n + 1, b + (labels[acct] == ROLE_BOT)]
    return {
        k: ReportBucket(k=k, n_accounts=n, n_bots=b, p_bot=b / n)
        for k, (n, b) in sorted(buckets.items())
    }


@dataclass(frozen=True)
class ActivityRatios:
    """Bot-exchange shares of one human account's interactions, in
    percent. A field is None when the account had no interactions of
    that kind (zero denominator)."""
    ber_like: float | None    # share of own likes aimed at bots
    ber_follow: float | None  # share of own follows aimed at bots
    bxr_like: float | None    # share of likes received that came from bots
    bxr_follow: float | None  # share of follows received from bots


def activity_ratios(events: Sequence, labels: Mapping[str, str],
                    user: str) -> ActivityRatios:
    if user not in labels:
        raise KeyError(f"unknown account {user!r}")
    if labels[user] != ROLE_HUMAN:
        raise ValueError(f"activity ratios are defined for human accounts; "
                         f"{user!r} is {labels[user]}")

    def ratio(total: int, from_bots: int) -> float | None:
        if total == 0:
            return None
        return 100.0 * from_bots / total

    out_like = out_like_bot = out_follow = out_follow_bot = 0
    in_like = in_like_bot = in_follow = in_follow_bot = 0
    for e in events:
        if e.action == "like":
            if e.actor == user:
                out_like += 1
                out_like_bot += labels.get(e.target) == ROLE_BOT
            if e.target == user:
                in_like += 1
                in_like_bot += labels.get(e.actor) == ROLE_BOT
        elif e.action == "follow":
            if e.actor == user:
                out_follow += 1
                out_follow_bot += labels.get(e.target) == ROLE_BOT
            if e.target == user:
                in_follow += 1
                in_follow_bot += labels.get(e.actor) == ROLE_BOT
    return ActivityRatios(
        ber_like=ratio(out_like, out_like_bot),
        ber_follow=ratio(out_follow, out_follow_bot),
        bxr_like=ratio(in_like, in_like_bot),
        bxr_follow=ratio(in_follow, in_follow_bot),
    )


def temporal_evaluation(
        reports: Sequence[Report], labels: Mapping[str, str],
        universe: Iterable[str],
        flagger: Callable[[Sequence[Report]], set[str]],
        mode: str, n_days: int) -> dict[int, ClassMetrics]:
    """Per-day metrics of a report-driven flagging rule.

    ``flagger`` maps a report subset to a flag set. Day d (1-indexed,
    1..n_days) is evaluated on reports with day == d (day-specific
    mode) or day <= d (cumulative mode), always against the full
    universe.
    """
    if mode not in (TEMPORAL_DAY_SPECIFIC, TEMPORAL_CUMULATIVE):
        raise ValueError(f"unknown temporal mode {mode!r}")
    universe = sorted(set(universe))
    out: dict[int, ClassMetrics] = {}
    for day in range(1, n_days + 1):
        if mode == TEMPORAL_DAY_SPECIFIC:
            subset = [r for r in reports if r.day == day]
        else:
            subset = [r for r in reports if r.day <= day]
        flags = flagger(subset)
        out[day] = evaluate_flags(flags, labels, universe)
    return out


def reporter_f1_table(reports: Sequence[Report], labels: Mapping[str, str],
                      universe: Iterable[str]) -> dict[str, float]:
    """F1, per reporter, of the rule "flag exactly the accounts this
    reporter ever reported" against ground truth over the universe."""
    universe = sorted(set(universe))
    flagged: dict[str, set[str]] = {}
    for r in reports:
        flagged.setdefault(r.reporter, set()).add(r.subject)
    return {
        reporter: evaluate_flags(subjects, labels, universe).f1
        for reporter, subjects in sorted(flagged.items())
    }


def group_f1(reports: Sequence[Report], labels: Mapping[str, str],
             universe: Iterable[str], members: Iterable[str],
             mode: str = "per_reporter") -> tuple[float, float]:
    """Mean and population std of F1 for a group of reporters.

    ``per_reporter`` averages each member's individual F1;
    ``pooled`` unions the group's reports into one flag set first
    (std is then 0). Members with no reports contribute F1 = 0 in
    per-reporter mode.
    """
    import math
    members = sorted(set(members))
    if not members:
        raise ValueError("empty reporter group")
    if mode == "per_reporter":
        table = reporter_f1_table(reports, labels, universe)
        f1s = [table.get(m, 0.0) for m in members]
        mean = sum(f1s) / len(f1s)
        var = sum((x - mean) ** 2 for x in f1s) / len(f1s)
        return mean, math.sqrt(var)
    if mode == "pooled":
        flags = {r.subject for r in reports if r.reporter in set(members)}
        return evaluate_flags(flags, labels, universe).f1, 0.0
    raise ValueError(f"unknown group F1 mode {mode!r}")
