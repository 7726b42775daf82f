"""Small hand-built dataset fixtures used across test modules."""

from botlab.core_data import (Account, Dataset, InteractionEvent, Report,
                              ROLE_BOT, ROLE_HUMAN)


def acct(aid, role=ROLE_HUMAN, **kw):
    return Account(id=aid, role=role, **kw)


def ev(ts, actor, action, target=None, polarity=None, topic=None,
       steps_per_day=10):
    return InteractionEvent(timestamp=ts, day=ts // steps_per_day + 1,
                            actor=actor, action=action, target=target,
                            polarity=polarity, topic=topic)


def rep(day, reporter, subject):
    return Report(day=day, reporter=reporter, subject=subject)


def dataset(accounts, events=(), reports=(), n_days=1, **kw):
    return Dataset(accounts=tuple(accounts), events=tuple(events),
                   reports=tuple(reports), n_days=n_days, **kw)


def two_class_accounts(n_humans=4, n_bots=3):
    """h000..h.., b000..b.. with human/bot roles."""
    humans = [acct(f"h{i:03d}", ROLE_HUMAN) for i in range(n_humans)]
    bots = [acct(f"b{i:03d}", ROLE_BOT) for i in range(n_bots)]
    return humans + bots
