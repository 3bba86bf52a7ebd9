"""Evaluation metrics and per-prefix-length result tables."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

DAY_SECONDS = 86_400.0


@dataclass(frozen=True)
class EvalRecord:
    """Outcome for one evaluated prefix. Unused fields stay ``None``.

    Activities use ``None`` for end of case.
    """

    prefix_length: int
    predicted_activity: str | None = None
    actual_activity: str | None = None
    predicted_time: float | None = None  # seconds
    actual_time: float | None = None
    predicted_suffix: tuple[str, ...] | None = None
    actual_suffix: tuple[str, ...] | None = None
    truncated: bool = False

    def __post_init__(self):
        if self.prefix_length < 2:
            raise ValueError("prefix_length must be >= 2")


def _require(records):
    records = list(records)
    if not records:
        raise ValueError("no records")
    return records


def accuracy(records: Iterable[EvalRecord]) -> float:
    records = _require(records)
    return sum(r.predicted_activity == r.actual_activity for r in records) / len(records)


def mae_days(records: Iterable[EvalRecord]) -> float:
    records = _require(records)
    return math.fsum(abs(r.predicted_time - r.actual_time) for r in records) / len(records) / DAY_SECONDS


def dl_distance(s1: Sequence[Hashable], s2: Sequence[Hashable]) -> int:
    """Optimal-string-alignment Damerau-Levenshtein distance.

    Counts insertions, deletions, substitutions and transpositions of
    adjacent elements, with no element edited more than once.
    """
    n, m = len(s1), len(s2)
    if n == 0 or m == 0:
        return n + m
    prev2 = None
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        a = s1[i - 1]
        for j in range(1, m + 1):
            b = s2[j - 1]
            cost = 0 if a == b else 1
            best = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and a == s2[j - 2] and s1[i - 2] == b:
                best = min(best, prev2[j - 2] + 1)
            cur[j] = best
        prev2, prev = prev, cur
    return prev[m]


def dls(s1: Sequence[Hashable], s2: Sequence[Hashable]) -> float:
    """``1 - dl_distance / max(len)``; two empty sequences score 1."""
    longest = max(len(s1), len(s2))
    if longest == 0:
        return 1.0
    return 1.0 - dl_distance(s1, s2) / longest


@dataclass(frozen=True)
class MetricRow:
    prefix: int | str
    count: int
    accuracy: float | None
    mae_days: float | None
    dls: float | None


@dataclass(frozen=True)
class MetricTable:
    rows: tuple[MetricRow, ...]

    def row(self, prefix) -> MetricRow:
        for r in self.rows:
            if r.prefix == prefix:
                return r
        raise KeyError(prefix)

    @property
    def all(self) -> MetricRow:
        return self.row("All")

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prefix", "accuracy", "mae_days", "dls"])
        for r in self.rows:
            w.writerow([r.prefix] + ["" if v is None else repr(v) for v in (r.accuracy, r.mae_days, r.dls)])


def _summarise(prefix, records) -> MetricRow:
    has_act = any(r.actual_activity is not None or r.predicted_activity is not None for r in records)
    has_time = all(r.predicted_time is not None and r.actual_time is not None for r in records)
    has_suffix = all(r.predicted_suffix is not None and r.actual_suffix is not None for r in records)
    return MetricRow(
        prefix,
        len(records),
        accuracy(records) if has_act else None,
        mae_days(records) if has_time else None,
        math.fsum(dls(r.predicted_suffix, r.actual_suffix) for r in records) / len(records)
        if has_suffix
        else None,
    )


def aggregate(records: Iterable[EvalRecord], displayed_prefixes: Sequence[int] | None = None) -> MetricTable:
    """Rows for each requested prefix length present, then an ``All`` row over every record.

    With ``displayed_prefixes`` of None every prefix length gets a row.
    """
    records = _require(records)
    groups: dict[int, list[EvalRecord]] = defaultdict(list)
    for r in records:
        groups[r.prefix_length].append(r)
    shown = sorted(groups) if displayed_prefixes is None else [k for k in displayed_prefixes if k in groups]
    rows = [_summarise(k, groups[k]) for k in shown]
    rows.append(_summarise("All", records))
    return MetricTable(tuple(rows))
