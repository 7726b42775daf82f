"""Core data model: accounts, events, reports, datasets, folds, run artifacts.

A dataset is the unit every other module consumes: a roster of accounts
(ground-truth role carried on the account itself), an append-ordered
interaction event log, and a table of human reports. Datasets are
immutable after construction; all loaders validate referential
integrity and value ranges, naming the offending file, line, and id.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .seeds import substream

ROLE_HUMAN = "human"
ROLE_BOT = "bot"
ROLES = (ROLE_HUMAN, ROLE_BOT)

STATUS_ACTIVE = "active"
STATUS_DORMANT = "dormant"
STATUS_SUSPENDED = "suspended"
STATUSES = (STATUS_ACTIVE, STATUS_DORMANT, STATUS_SUSPENDED)

ACTION_POST = "post"
ACTION_LIKE = "like"
ACTION_FOLLOW = "follow"
ACTION_IDLE = "idle"
ACTION_ACTIVATE = "activate"
ACTION_SUSPEND = "suspend"
ACTIONS = (ACTION_POST, ACTION_LIKE, ACTION_FOLLOW, ACTION_IDLE,
           ACTION_ACTIVATE, ACTION_SUSPEND)

# actions whose target must name an existing account
_TARGETED_ACTIONS = (ACTION_LIKE, ACTION_FOLLOW, ACTION_ACTIVATE)


class DatasetError(ValueError):
    """Malformed or inconsistent dataset content."""


@dataclass(frozen=True)
class Account:
    id: str
    role: str
    campaign: int | None = None
    created_day: int = 0
    status: str = STATUS_ACTIVE
    sentiment: Mapping[str, float] = field(default_factory=dict)
    metadata: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class InteractionEvent:
    """One platform action. ``target`` is the counterparty account id
    (for likes, the liked post's author). ``polarity``/``topic`` are set
    only on posts."""
    timestamp: int
    day: int
    actor: str
    action: str
    target: str | None = None
    polarity: float | None = None
    topic: str | None = None


@dataclass(frozen=True)
class Report:
    day: int
    reporter: str
    subject: str


@dataclass(frozen=True)
class Dataset:
    accounts: tuple[Account, ...]
    events: tuple[InteractionEvent, ...]
    reports: tuple[Report, ...]
    n_days: int
    # external detector scores: source name -> account id -> probability
    external_predictions: Mapping[str, Mapping[str, float]] = field(
        default_factory=dict)

    @cached_property
    def by_id(self) -> dict[str, Account]:
        return {a.id: a for a in self.accounts}

    @cached_property
    def universe(self) -> tuple[str, ...]:
        return tuple(sorted(a.id for a in self.accounts))

    @cached_property
    def labels(self) -> dict[str, str]:
        return {a.id: a.role for a in self.accounts}

    @cached_property
    def bots(self) -> frozenset[str]:
        return frozenset(a.id for a in self.accounts if a.role == ROLE_BOT)

    @cached_property
    def humans(self) -> frozenset[str]:
        return frozenset(a.id for a in self.accounts if a.role == ROLE_HUMAN)

    def events_through_day(self, day: int) -> tuple[InteractionEvent, ...]:
        return tuple(e for e in self.events if e.day <= day)

    def accounts_active_on_day(self, day: int) -> tuple[str, ...]:
        """Ids involved in at least one event on ``day`` (as actor or
        target), sorted."""
        seen: set[str] = set()
        for e in self.events:
            if e.day != day:
                continue
            seen.add(e.actor)
            if e.target is not None:
                seen.add(e.target)
        return tuple(sorted(seen))


def validate_dataset(ds: Dataset) -> None:
    """Raise ``DatasetError`` on the first integrity violation."""
    seen_ids: set[str] = set()
    for a in ds.accounts:
        if a.id in seen_ids:
            raise DatasetError(f"account {a.id!r}: duplicate id")
        seen_ids.add(a.id)
        if a.role not in ROLES:
            raise DatasetError(f"account {a.id!r}: unknown role {a.role!r}")
        if (a.campaign is not None) != (a.role == ROLE_BOT):
            raise DatasetError(
                f"account {a.id!r}: campaign must be set iff role is bot")
        if a.status not in STATUSES:
            raise DatasetError(
                f"account {a.id!r}: unknown status {a.status!r}")
        if a.created_day < 0:
            raise DatasetError(f"account {a.id!r}: created_day < 0")
        for topic, s in a.sentiment.items():
            if not (-1.0 <= s <= 1.0) or not math.isfinite(s):
                raise DatasetError(
                    f"account {a.id!r}: sentiment[{topic!r}]={s} "
                    f"outside [-1, 1]")
        for key, v in a.metadata.items():
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise DatasetError(
                    f"account {a.id!r}: metadata[{key!r}] not finite")

    if ds.n_days < 1:
        raise DatasetError(f"n_days={ds.n_days} must be >= 1")

    prev_ts = None
    for i, e in enumerate(ds.events):
        where = f"event #{i} (timestamp {e.timestamp})"
        if e.action not in ACTIONS:
            raise DatasetError(f"{where}: unknown action {e.action!r}")
        if e.actor not in seen_ids:
            raise DatasetError(f"{where}: unknown actor {e.actor!r}")
        if e.action in _TARGETED_ACTIONS:
            if e.target is None:
                raise DatasetError(f"{where}: {e.action} requires a target")
        if e.target is not None and e.target not in seen_ids:
            raise DatasetError(f"{where}: unknown target {e.target!r}")
        if (e.polarity is not None) != (e.action == ACTION_POST):
            raise DatasetError(
                f"{where}: polarity must be present iff action is post")
        if e.polarity is not None and not (-1.0 <= e.polarity <= 1.0):
            raise DatasetError(
                f"{where}: polarity {e.polarity} outside [-1, 1]")
        if not (1 <= e.day <= ds.n_days):
            raise DatasetError(
                f"{where}: day {e.day} outside [1, {ds.n_days}]")
        if prev_ts is not None and e.timestamp < prev_ts:
            raise DatasetError(f"{where}: timestamps must be non-decreasing")
        prev_ts = e.timestamp

    seen_reports: set[tuple[int, str, str]] = set()
    for i, r in enumerate(ds.reports):
        where = f"report #{i}"
        if r.reporter not in seen_ids:
            raise DatasetError(f"{where}: unknown reporter {r.reporter!r}")
        if r.subject not in seen_ids:
            raise DatasetError(f"{where}: unknown subject {r.subject!r}")
        if ds.by_id[r.reporter].role != ROLE_HUMAN:
            raise DatasetError(
                f"{where}: reporter {r.reporter!r} is not a human account")
        if r.reporter == r.subject:
            raise DatasetError(f"{where}: self-report by {r.reporter!r}")
        if not (1 <= r.day <= ds.n_days):
            raise DatasetError(
                f"{where}: day {r.day} outside [1, {ds.n_days}]")
        key = (r.day, r.reporter, r.subject)
        if key in seen_reports:
            raise DatasetError(f"{where}: duplicate report {key}")
        seen_reports.add(key)

    for source, scores in ds.external_predictions.items():
        for acct, p in scores.items():
            if acct not in seen_ids:
                raise DatasetError(
                    f"predictions[{source!r}]: unknown account {acct!r}")
            if not (0.0 <= p <= 1.0):
                raise DatasetError(
                    f"predictions[{source!r}]: account {acct!r} "
                    f"probability {p} outside [0, 1]")


# ---------------------------------------------------------------------------
# file loading

def _jsonl_records(path: Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: bad JSON: {exc}") from exc
            if not isinstance(rec, dict):
                raise DatasetError(f"{path}:{lineno}: record is not an object")
            yield lineno, rec


def load_accounts(path: str | Path) -> tuple[Account, ...]:
    path = Path(path)
    out = []
    for lineno, rec in _jsonl_records(path):
        try:
            out.append(Account(
                id=str(rec["id"]),
                role=str(rec["role"]),
                campaign=(None if rec.get("campaign") is None
                          else int(rec["campaign"])),
                created_day=int(rec.get("created_day", 0)),
                status=str(rec.get("status", STATUS_ACTIVE)),
                sentiment={str(k): float(v)
                           for k, v in (rec.get("sentiment") or {}).items()},
                metadata={str(k): float(v)
                          for k, v in (rec.get("metadata") or {}).items()},
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad account record: {exc}") \
                from exc
    return tuple(out)


def load_events(path: str | Path) -> tuple[InteractionEvent, ...]:
    path = Path(path)
    out = []
    for lineno, rec in _jsonl_records(path):
        try:
            out.append(InteractionEvent(
                timestamp=int(rec["timestamp"]),
                day=int(rec["day"]),
                actor=str(rec["actor"]),
                action=str(rec["action"]),
                target=(None if rec.get("target") is None
                        else str(rec["target"])),
                polarity=(None if rec.get("polarity") is None
                          else float(rec["polarity"])),
                topic=(None if rec.get("topic") is None
                       else str(rec["topic"])),
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetError(f"{path}:{lineno}: bad event record: {exc}") \
                from exc
    return tuple(out)


def load_reports(path: str | Path) -> tuple[Report, ...]:
    path = Path(path)
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"day", "reporter", "subject"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DatasetError(
                f"{path}: header must contain day,reporter,subject")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(Report(day=int(row["day"]),
                                  reporter=row["reporter"],
                                  subject=row["subject"]))
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad report row: {exc}") \
                    from exc
    return tuple(out)


def load_predictions(path: str | Path) -> dict[str, dict[str, float]]:
    """Read a detector score file (``source,account,probability``).

    Returns ``{source: {account: probability}}``. Probabilities outside
    [0, 1] are rejected with the offending line number.
    """
    path = Path(path)
    out: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"source", "account", "probability"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise DatasetError(
                f"{path}: header must contain source,account,probability")
        for lineno, row in enumerate(reader, start=2):
            try:
                p = float(row["probability"])
            except (TypeError, ValueError) as exc:
                raise DatasetError(
                    f"{path}:{lineno}: bad probability "
                    f"{row.get('probability')!r}") from exc
            if not (0.0 <= p <= 1.0):
                raise DatasetError(
                    f"{path}:{lineno}: probability {p} outside [0, 1] "
                    f"for account {row['account']!r}")
            out.setdefault(row["source"], {})[row["account"]] = p
    return out


def load_dataset(accounts_path: str | Path,
                 events_path: str | Path | None = None,
                 reports_path: str | Path | None = None,
                 predictions_paths: Sequence[str | Path] = (),
                 n_days: int | None = None,
                 validate: bool = True) -> Dataset:
    """Assemble a dataset from files and (by default) validate it.

    ``n_days`` defaults to the largest (1-indexed) day seen in events
    or reports (at least 1).
    """
    accounts = load_accounts(accounts_path)
    events = load_events(events_path) if events_path else ()
    reports = load_reports(reports_path) if reports_path else ()
    predictions: dict[str, dict[str, float]] = {}
    for p in predictions_paths:
        for source, scores in load_predictions(p).items():
            predictions.setdefault(source, {}).update(scores)
    if n_days is None:
        n_days = max([e.day for e in events] + [r.day for r in reports],
                     default=1)
    ds = Dataset(accounts=accounts, events=events, reports=reports,
                 n_days=n_days, external_predictions=predictions)
    if validate:
        validate_dataset(ds)
    return ds


# ---------------------------------------------------------------------------
# stratified folds

@dataclass(frozen=True)
class FoldAssignment:
    k: int
    seed: int
    folds: tuple[tuple[str, ...], ...]

    def test_ids(self, fold: int) -> tuple[str, ...]:
        return self.folds[fold]

    def train_ids(self, fold: int) -> tuple[str, ...]:
        out: list[str] = []
        for f, members in enumerate(self.folds):
            if f != fold:
                out.extend(members)
        return tuple(sorted(out))


def split_folds(ds: Dataset, k: int, seed: int) -> FoldAssignment:
    """Partition accounts into ``k`` role-stratified folds.

    Fold sizes differ by at most one and each fold's bot count differs
    from an even share by at most one account. Deterministic in ``seed``.
    """
    if k < 2:
        raise ValueError(f"k={k} must be >= 2")
    if k > len(ds.accounts):
        raise ValueError(f"k={k} exceeds account count {len(ds.accounts)}")
    rng = substream(seed, "folds")
    bots = sorted(ds.bots)
    humans = sorted(ds.humans)
    rng.shuffle(bots)
    rng.shuffle(humans)
    folds: list[list[str]] = [[] for _ in range(k)]
    # deal bots round-robin, then continue the cycle with humans so
    # total sizes stay within one of each other
    for i, acct in enumerate(bots):
        folds[i % k].append(acct)
    offset = len(bots)
    for j, acct in enumerate(humans):
        folds[(offset + j) % k].append(acct)
    return FoldAssignment(k=k, seed=seed,
                          folds=tuple(tuple(sorted(f)) for f in folds))


# ---------------------------------------------------------------------------
# run artifacts

@dataclass(frozen=True)
class Table:
    """A small result table; cells are str, int, or float."""
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"row width {len(row)} != {len(self.columns)} columns")


def _format_cell(value) -> str:
    if isinstance(value, bool):
        raise TypeError("bool cells are ambiguous; use str or int")
    if isinstance(value, float):
        return repr(value)  # shortest exact round-trip
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return value
    raise TypeError(f"unsupported cell type {type(value).__name__}")


def _parse_cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def atomic_write_text(path: str | Path, content: str) -> None:
    """Write ``content`` to ``path`` with no partially written file ever
    visible: data lands in a same-directory temp file first, then is
    renamed over the target."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_table(table: Table, path: str | Path) -> None:
    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([_format_cell(c) for c in row])
    atomic_write_text(path, buf.getvalue())


def read_table(path: str | Path) -> Table:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            columns = tuple(next(reader))
        except StopIteration:
            raise DatasetError(f"{path}: empty table") from None
        rows = tuple(tuple(_parse_cell(c) for c in row) for row in reader)
    return Table(columns=columns, rows=rows)


def write_run_artifact(tables: Mapping[str, Table],
                       out_dir: str | Path,
                       config: Mapping | None = None,
                       seed: int | None = None,
                       command: str | None = None) -> dict:
    """Write result tables as CSV plus a ``manifest.json`` into
    ``out_dir`` and return the manifest.

    The manifest records the effective configuration verbatim, the seed,
    and the artifact version; it contains nothing volatile, so two runs
    with identical inputs produce byte-identical files.
    """
    from . import __version__
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "artifact_version": __version__,
        "command": command,
        "seed": seed,
        "config": dict(config) if config is not None else None,
        "tables": {},
    }
    for name, table in tables.items():
        filename = f"{name}.csv"
        write_table(table, out_dir / filename)
        manifest["tables"][name] = {"path": filename, "rows": len(table.rows)}
    atomic_write_text(out_dir / "manifest.json",
                      json.dumps(manifest, indent=2, sort_keys=False) + "\n")
    return manifest


def read_manifest(out_dir: str | Path) -> dict:
    with open(Path(out_dir) / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# dataset serialization

def write_dataset(ds: Dataset, out_dir: str | Path) -> dict[str, Path]:
    """Write accounts.jsonl, events.jsonl, and reports.csv into
    ``out_dir``. Output is deterministic: accounts sorted by id, events
    and reports in log order, atomic per file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    lines = []
    for a in sorted(ds.accounts, key=lambda a: a.id):
        lines.append(json.dumps({
            "id": a.id, "role": a.role, "campaign": a.campaign,
            "created_day": a.created_day, "status": a.status,
            "sentiment": {k: a.sentiment[k] for k in sorted(a.sentiment)},
            "metadata": {k: a.metadata[k] for k in sorted(a.metadata)},
        }))
    accounts_path = out_dir / "accounts.jsonl"
    atomic_write_text(accounts_path, "\n".join(lines) + "\n" if lines else "")

    lines = []
    for e in ds.events:
        lines.append(json.dumps({
            "timestamp": e.timestamp, "day": e.day, "actor": e.actor,
            "action": e.action, "target": e.target,
            "polarity": e.polarity, "topic": e.topic,
        }))
    events_path = out_dir / "events.jsonl"
    atomic_write_text(events_path, "\n".join(lines) + "\n" if lines else "")

    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["day", "reporter", "subject"])
    for r in ds.reports:
        writer.writerow([r.day, r.reporter, r.subject])
    reports_path = out_dir / "reports.csv"
    atomic_write_text(reports_path, buf.getvalue())

    return {"accounts": accounts_path, "events": events_path,
            "reports": reports_path}


def write_predictions(scores_by_source: Mapping[str, Mapping[str, float]],
                      path: str | Path) -> None:
    """Write a ``source,account,probability`` CSV (sorted, atomic)."""
    import io
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "account", "probability"])
    for source in sorted(scores_by_source):
        scores = scores_by_source[source]
        for acct in sorted(scores):
            writer.writerow([source, acct, repr(float(scores[acct]))])
    atomic_write_text(path, buf.getvalue())
