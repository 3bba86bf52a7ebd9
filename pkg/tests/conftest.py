from __future__ import annotations

import datetime as dt

import pytest

from lstm_ppm.eventlog import Event, EventLog, Trace, parse_csv

BASE = dt.datetime(2021, 3, 1, 9, 0, 0, tzinfo=dt.timezone.utc)  # a Monday


def ts(days=0, hours=0, minutes=0, seconds=0) -> float:
    return (BASE + dt.timedelta(days=days, hours=hours, minutes=minutes, seconds=seconds)).timestamp()


def make_trace(case_id, activities, times) -> Trace:
    return Trace(case_id, tuple(Event(case_id, a, t) for a, t in zip(activities, times)))


def make_log(traces, alphabet=None) -> EventLog:
    traces = tuple(traces)
    if alphabet is None:
        seen = {}
        for t in traces:
            for a in t.activities:
                seen.setdefault(a, None)
        alphabet = tuple(seen)
    return EventLog(traces, tuple(alphabet))


def deterministic_csv(copies=50, activities="abcd", gap_hours=1) -> str:
    """``copies`` cases of the same activity sequence, one per day, fixed gaps."""
    rows = ["case_id,activity,timestamp"]
    for c in range(copies):
        for j, a in enumerate(activities):
            t = BASE + dt.timedelta(days=c, hours=j * gap_hours)
            rows.append(f"case{c},{a},{t.strftime('%Y-%m-%d %H:%M:%S')}")
    return "\n".join(rows) + "\n"


@pytest.fixture
def deterministic_log() -> EventLog:
    return parse_csv(deterministic_csv())


SYNTHETIC_HYPER = dict(max_epochs=200, patience=200, seed=0)


@pytest.fixture(scope="session")
def synthetic_model():
    """A small network trained to convergence on the deterministic log."""
    from lstm_ppm.training import TrainHyper, train

    log = parse_csv(deterministic_csv())
    model, report = train(log, layers=2, shared=1, neurons=20, hyper=TrainHyper(**SYNTHETIC_HYPER))
    return model, report, log


# acceptance summary lines, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
