"""Event logs: parsing, chronological splitting, prefixes and duplicate removal.

A log is read from a three-column CSV (``case_id,activity,timestamp``).
Timestamps are stored as POSIX seconds (UTC) so that every downstream module
can do plain float arithmetic on them.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from typing import Iterator, Mapping, Sequence

HEADER = ("case_id", "activity", "timestamp")

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[Tt ](\d{2}):(\d{2}):(\d{2})(\.\d+)?"
    r"(?:([Zz])|([+-])(\d{2}):(\d{2}))?$"
)


class LogFormatError(ValueError):
    """Raised when an event log file cannot be parsed."""


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: str
    timestamp: float  # POSIX seconds, UTC

    def __post_init__(self):
        if not self.activity:
            raise ValueError("event activity must be non-empty")
        if not math.isfinite(self.timestamp):
            raise ValueError(f"invalid timestamp {self.timestamp!r}")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple[Event, ...]

    def __post_init__(self):
        if not self.events:
            raise ValueError(f"trace {self.case_id!r} is empty")
        for prev, cur in zip(self.events, self.events[1:]):
            if cur.timestamp < prev.timestamp:
                raise ValueError(f"trace {self.case_id!r} has decreasing timestamps")
            if cur.case_id != self.case_id:
                raise ValueError(f"event of case {cur.case_id!r} in trace {self.case_id!r}")

    def __len__(self) -> int:
        return len(self.events)

    def __getitem__(self, i):
        return self.events[i]

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    @property
    def activities(self) -> tuple[str, ...]:
        return tuple(e.activity for e in self.events)

    @property
    def timestamps(self) -> tuple[float, ...]:
        return tuple(e.timestamp for e in self.events)

    @property
    def start(self) -> float:
        return self.events[0].timestamp

    @property
    def end(self) -> float:
        return self.events[-1].timestamp

    def head(self, k: int) -> Trace:
        """First ``k`` events (``0 < k <= len``)."""
        if not 0 < k <= len(self.events):
            raise ValueError(f"prefix length {k} out of range for trace of length {len(self)}")
        return Trace(self.case_id, self.events[:k])

    def tail(self, k: int) -> tuple[Event, ...]:
        """Events after the first ``k``; may be empty."""
        return self.events[k:]

    def append(self, activity: str, timestamp: float) -> Trace:
        return Trace(self.case_id, self.events + (Event(self.case_id, activity, timestamp),))


@dataclass(frozen=True)
class EventLog:
    traces: tuple[Trace, ...]
    alphabet: tuple[str, ...]
    activity_index: Mapping[str, int] = field(default=None, compare=False)  # type: ignore[assignment]

    def __post_init__(self):
        if self.activity_index is None:
            object.__setattr__(
                self, "activity_index", {a: i for i, a in enumerate(self.alphabet, start=1)}
            )
        if len(set(self.alphabet)) != len(self.alphabet):
            raise ValueError("alphabet has duplicate activities")

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[Trace]:
        return iter(self.traces)

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    def with_traces(self, traces: Sequence[Trace]) -> EventLog:
        """Same alphabet and index, different traces."""
        return EventLog(tuple(traces), self.alphabet, self.activity_index)


def parse_timestamp(text: str) -> float:
    """Parse RFC 3339 or ``YYYY-MM-DD HH:MM:SS`` into POSIX seconds.

    Timestamps without an offset are taken to be UTC; offsets are applied.
    """
    m = _TS_RE.match(text.strip())
    if m is None:
        raise ValueError(f"malformed timestamp {text!r}")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    frac = float(m.group(7)) if m.group(7) else 0.0
    dt = datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)
    if m.group(9):
        offset = timedelta(hours=int(m.group(10)), minutes=int(m.group(11)))
        dt = dt - offset if m.group(9) == "+" else dt + offset
    return dt.timestamp() + frac


def format_timestamp(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")


def parse_csv(text: str | io.TextIOBase, columns: Sequence[str] = HEADER) -> EventLog:
    """Read an event log from CSV text or a text stream.

    ``columns`` names the header fields holding case id, activity and
    timestamp, in that order; the default is the canonical header. Rows are
    grouped by case in order of first appearance and sorted stably by time
    within each case.
    """
    if isinstance(text, str):
        text = io.StringIO(text)
    reader = csv.reader(text, quoting=csv.QUOTE_NONE)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise LogFormatError("empty event log") from None
    header[0] = header[0].lstrip("\ufeff")
    try:
        cols = [header.index(c) for c in columns]
    except ValueError:
        raise LogFormatError(f"line 1: header {header} lacks columns {list(columns)}") from None

    cases: dict[str, list[Event]] = {}
    alphabet: dict[str, None] = {}
    for row in reader:
        lineno = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(header):
            raise LogFormatError(
                f"line {lineno}: expected {len(header)} fields, got {len(row)} "
                "(commas inside fields are not supported)"
            )
        if any('"' in f for f in row):
            raise LogFormatError(f"line {lineno}: quoted fields are not supported")
        case_id, activity, ts_text = (row[i].strip() for i in cols)
        if not activity:
            raise LogFormatError(f"line {lineno}: empty activity")
        try:
            ts = parse_timestamp(ts_text)
        except ValueError as exc:
            raise LogFormatError(f"line {lineno}: {exc}") from None
        cases.setdefault(case_id, []).append(Event(case_id, activity, ts))
        alphabet.setdefault(activity, None)

    if not cases:
        raise LogFormatError("event log has no events")
    traces = tuple(
        Trace(cid, tuple(sorted(evs, key=lambda e: e.timestamp))) for cid, evs in cases.items()
    )
    return EventLog(traces, tuple(alphabet))


def read_csv(path, columns: Sequence[str] = HEADER) -> EventLog:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh, columns)


def write_csv(log: EventLog, fh) -> None:
    fh.write(",".join(HEADER) + "\n")
    for trace in log:
        for e in trace:
            fh.write(f"{e.case_id},{e.activity},{format_timestamp(e.timestamp)}\n")


def _as_fraction(fraction) -> Fraction:
    if isinstance(fraction, str):
        return Fraction(fraction.strip())
    if isinstance(fraction, float):
        return Fraction(repr(fraction))
    return Fraction(fraction)


def split_chronological(log: EventLog, fraction=Fraction(2, 3)) -> tuple[EventLog, EventLog]:
    """Order traces by start time and cut after the first ``ceil(fraction * n)``.

    ``fraction`` may be a float, a :class:`~fractions.Fraction` or a string
    such as ``"2/3"``; the ceiling is taken exactly. Ties keep file order.
    """
    frac = _as_fraction(fraction)
    if not 0 < frac < 1:
        raise ValueError(f"split fraction must be in (0, 1), got {fraction}")
    n = len(log.traces)
    if n < 2:
        raise ValueError("need at least 2 traces to split")
    ordered = sorted(log.traces, key=lambda t: t.start)
    n_train = math.ceil(frac * n)
    if n_train >= n:
        raise ValueError(f"split fraction {fraction} leaves no test traces out of {n}")
    return log.with_traces(ordered[:n_train]), log.with_traces(ordered[n_train:])


def prefixes(trace: Trace) -> Iterator[tuple[Trace, int]]:
    """Yield ``(hd^k(trace), k)`` for ``2 <= k < len(trace)``."""
    for k in range(2, len(trace)):
        yield trace.head(k), k


def dedup_consecutive(log: EventLog, keep_last_event: bool = False) -> EventLog:
    """Collapse runs of identical consecutive activities to their first event.

    With ``keep_last_event`` the final event of every trace survives even when
    it belongs to a collapsed run, so the case end time is unchanged.
    """
    out = []
    for trace in log:
        kept = [trace.events[0]]
        for e in trace.events[1:]:
            if e.activity != kept[-1].activity:
                kept.append(e)
        if keep_last_event and kept[-1] is not trace.events[-1]:
            kept.append(trace.events[-1])
        out.append(Trace(trace.case_id, tuple(kept)))
    return log.with_traces(out)
