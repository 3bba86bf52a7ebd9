"""Evaluation loops shared by the command line and the acceptance tests.

Every routine evaluates the prefixes ``hd^k(trace)`` with ``2 <= k < |trace|``
of the given test traces and returns one :class:`EvalRecord` per prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

from .baselines import TransitionSystem, ts_predict
from .encoding import UnknownActivityError
from .eventlog import EventLog, dedup_consecutive, prefixes, split_chronological
from .metrics import EvalRecord, dls
from .network import Model
from .prediction import predict_next_batch, predict_suffix_batch, remaining_from_suffix

DEDUP_MODES = ("off", "first", "first-keep-last")


def apply_dedup(log: EventLog, mode: str) -> EventLog:
    if mode == "off":
        return log
    if mode == "first":
        return dedup_consecutive(log, keep_last_event=False)
    if mode == "first-keep-last":
        return dedup_consecutive(log, keep_last_event=True)
    raise ValueError(f"unknown dedup mode {mode!r}")


def prepare(log: EventLog, split="2/3", dedup: str = "off") -> tuple[EventLog, EventLog]:
    """Duplicate removal (if any) followed by the chronological split."""
    return split_chronological(apply_dedup(log, dedup), split)


def check_alphabet(model: Model, log: EventLog) -> None:
    """Raise :class:`UnknownActivityError` for the first activity the model has never seen."""
    index = model.activity_index
    for trace in log:
        for a in trace.activities:
            if a not in index:
                raise UnknownActivityError(a)


def _test_prefixes(test: EventLog):
    out = []
    for trace in test:
        for prefix, k in prefixes(trace):
            out.append((trace, prefix, k))
    return out


def evaluate_next(model: Model, test: EventLog) -> list[EvalRecord]:
    check_alphabet(model, test)
    items = _test_prefixes(test)
    preds = predict_next_batch(model, [p for _, p, _ in items])
    records = []
    for (trace, _, k), pred in zip(items, preds):
        predicted = None if pred.is_end else model.alphabet[pred.activity_class]
        records.append(
            EvalRecord(
                k,
                predicted_activity=predicted,
                actual_activity=trace[k].activity,
                predicted_time=pred.predicted_delta,
                actual_time=trace[k].timestamp - trace[k - 1].timestamp,
            )
        )
    return records


@dataclass
class SuffixEvaluation:
    records: list[EvalRecord]

    @property
    def mean_dls(self) -> float:
        return sum(dls(r.predicted_suffix, r.actual_suffix) for r in self.records) / len(self.records)

    @property
    def truncated_fraction(self) -> float:
        return sum(r.truncated for r in self.records) / len(self.records)


def evaluate_suffix(model: Model, test: EventLog, cap: int | None = None) -> SuffixEvaluation:
    """Predicted activity suffixes and remaining times for every test prefix.

    The records carry both the suffix pair and the remaining-time pair, so one
    rollout serves suffix and remaining-time evaluation.
    """
    check_alphabet(model, test)
    items = _test_prefixes(test)
    suffixes = predict_suffix_batch(model, [p for _, p, _ in items], cap)
    records = []
    for (trace, prefix, k), suf in zip(items, suffixes):
        records.append(
            EvalRecord(
                k,
                predicted_time=remaining_from_suffix(prefix, suf),
                actual_time=trace.end - trace[k - 1].timestamp,
                predicted_suffix=tuple(suf.activities),
                actual_suffix=trace.activities[k:],
                truncated=suf.truncated,
            )
        )
    return SuffixEvaluation(records)


def evaluate_baseline(ts: TransitionSystem, test: EventLog, target: str) -> list[EvalRecord]:
    """Transition-system time predictions; ``target`` is ``next_delta`` or ``remaining``."""
    records = []
    for trace, prefix, k in _test_prefixes(test):
        if target == "next_delta":
            actual = trace[k].timestamp - trace[k - 1].timestamp
        else:
            actual = trace.end - trace[k - 1].timestamp
        records.append(EvalRecord(k, predicted_time=ts_predict(ts, prefix, target), actual_time=actual))
    return records
