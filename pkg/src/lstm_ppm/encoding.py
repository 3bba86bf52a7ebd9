"""Feature vectors and training targets for event prefixes.

Each event becomes ``|A| + 3`` numbers: a one-hot activity block followed by
the inter-event delta, the time of day and the time of week. Targets are a
one-hot over ``|A| + 1`` classes (the extra class marks end of case) and the
delta to the next event.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .eventlog import EventLog, Trace

DAY_SECONDS = 86_400.0
WEEK_SECONDS = 604_800.0
# 1970-01-01 was a Thursday; shifting by four days puts Sunday at 0.
_EPOCH_WEEKDAY_FROM_SUNDAY = 4


class UnknownActivityError(KeyError):
    def __str__(self) -> str:
        return f"activity {self.args[0]!r} is not in the model alphabet"


@dataclass(frozen=True)
class NormConstants:
    mean_delta: float
    day_seconds: float = DAY_SECONDS
    week_seconds: float = WEEK_SECONDS

    def __post_init__(self):
        if not self.mean_delta > 0:
            raise ValueError(f"mean_delta must be positive, got {self.mean_delta}")


@dataclass(frozen=True)
class TargetPair:
    next_activity: np.ndarray  # one-hot, length |A| + 1
    next_delta: float

    @property
    def label(self) -> int:
        """0-based class index; ``|A|`` is end of case."""
        return int(np.argmax(self.next_activity))


def fit_normalizer(train: EventLog) -> NormConstants:
    """Mean inter-event gap (seconds) over all consecutive pairs in ``train``."""
    gaps = [b.timestamp - a.timestamp for t in train for a, b in zip(t.events, t.events[1:])]
    if not gaps:
        raise ValueError("training log has no trace with two or more events")
    mean = float(np.mean(gaps))
    if mean <= 0:
        raise ValueError("training log has no positive inter-event gap")
    return NormConstants(mean)


def seconds_since_midnight(ts):
    return np.mod(ts, DAY_SECONDS)


def seconds_since_sunday(ts):
    days = np.floor_divide(ts, DAY_SECONDS)
    return np.mod(days + _EPOCH_WEEKDAY_FROM_SUNDAY, 7) * DAY_SECONDS + np.mod(ts, DAY_SECONDS)


def encode_event(
    activity: str,
    timestamp: float,
    prev_timestamp: float | None,
    index: Mapping[str, int],
    norm: NormConstants,
) -> np.ndarray:
    """Feature vector of one event; ``prev_timestamp`` is None for the first."""
    try:
        pos = index[activity]
    except KeyError:
        raise UnknownActivityError(activity) from None
    n = len(index)
    x = np.zeros(n + 3)
    x[pos - 1] = 1.0
    x[n] = 0.0 if prev_timestamp is None else (timestamp - prev_timestamp) / norm.mean_delta
    x[n + 1] = seconds_since_midnight(timestamp) / norm.day_seconds
    x[n + 2] = seconds_since_sunday(timestamp) / norm.week_seconds
    return x


def encode_prefix(prefix: Trace, index: Mapping[str, int], norm: NormConstants) -> np.ndarray:
    """Encode every event of ``prefix``; returns shape ``(len(prefix), |A| + 3)``."""
    rows = []
    prev = None
    for e in prefix:
        rows.append(encode_event(e.activity, e.timestamp, prev, index, norm))
        prev = e.timestamp
    return np.stack(rows)


def encode_target(trace: Trace, k: int, index: Mapping[str, int], norm: NormConstants) -> TargetPair:
    """Target after observing ``hd^k(trace)``."""
    n = len(trace)
    if not 2 <= k <= n:
        raise ValueError(f"k={k} out of range [2, {n}]")
    onehot = np.zeros(len(index) + 1)
    if k == n:
        onehot[-1] = 1.0
        return TargetPair(onehot, 0.0)
    nxt = trace[k]
    try:
        onehot[index[nxt.activity] - 1] = 1.0
    except KeyError:
        raise UnknownActivityError(nxt.activity) from None
    return TargetPair(onehot, (nxt.timestamp - trace[k - 1].timestamp) / norm.mean_delta)


def decode_activity(features: np.ndarray, alphabet: Sequence[str]) -> str:
    return alphabet[int(np.argmax(features[: len(alphabet)]))]
