"""Annotated transition systems for time prediction.

Each training prefix is mapped to a state by a set, bag or sequence
abstraction of its activities. States are annotated with the mean time until
the next event and the mean remaining time of the training prefixes that reach
them. Unseen states fall back to the global training mean.
"""

from __future__ import annotations

import json
import statistics
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Hashable

from .eventlog import EventLog, Trace


class Abstraction(str, Enum):
    SET = "set"
    BAG = "bag"
    SEQUENCE = "sequence"


def abstract(prefix, kind: Abstraction | str) -> Hashable:
    """State key of a prefix (a :class:`Trace` or a sequence of activity labels)."""
    acts = prefix.activities if isinstance(prefix, Trace) else tuple(prefix)
    kind = Abstraction(kind)
    if kind is Abstraction.SET:
        return frozenset(acts)
    if kind is Abstraction.BAG:
        return frozenset(Counter(acts).items())
    return tuple(acts)


@dataclass(frozen=True)
class StateAnnotation:
    mean_time_to_next: float
    mean_remaining: float
    support: int


@dataclass(frozen=True)
class TransitionSystem:
    states: dict
    abstraction: Abstraction
    global_mean_next: float
    global_mean_remaining: float
    statistic: str = "mean"

    def to_json(self) -> str:
        def key(k):
            if self.abstraction is Abstraction.SEQUENCE:
                return list(k)
            if self.abstraction is Abstraction.SET:
                return sorted(k)
            return sorted([a, n] for a, n in k)

        return json.dumps(
            {
                "format": "lstm_ppm.transition_system",
                "version": 1,
                "abstraction": self.abstraction.value,
                "statistic": self.statistic,
                "global_mean_next": self.global_mean_next,
                "global_mean_remaining": self.global_mean_remaining,
                "states": [
                    [key(k), a.mean_time_to_next, a.mean_remaining, a.support]
                    for k, a in self.states.items()
                ],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> TransitionSystem:
        raw = json.loads(text)
        if raw.get("format") != "lstm_ppm.transition_system":
            raise ValueError("not a transition system file")
        kind = Abstraction(raw["abstraction"])

        def key(k):
            if kind is Abstraction.SEQUENCE:
                return tuple(k)
            if kind is Abstraction.SET:
                return frozenset(k)
            return frozenset((a, n) for a, n in k)

        states = {key(k): StateAnnotation(nxt, rem, sup) for k, nxt, rem, sup in raw["states"]}
        return cls(
            states, kind, raw["global_mean_next"], raw["global_mean_remaining"], raw["statistic"]
        )


def build_ts(train: EventLog, kind: Abstraction | str, statistic: str = "mean") -> TransitionSystem:
    """Annotate the states reached by ``hd^k`` for ``1 <= k < |trace|``."""
    kind = Abstraction(kind)
    if statistic not in ("mean", "median"):
        raise ValueError(f"unknown statistic {statistic!r}")
    agg = statistics.fmean if statistic == "mean" else statistics.median
    nexts: dict = defaultdict(list)
    rems: dict = defaultdict(list)
    all_next, all_rem = [], []
    for trace in train:
        ts = trace.timestamps
        acts = trace.activities
        for k in range(1, len(trace)):
            key = abstract(acts[:k], kind)
            nxt = ts[k] - ts[k - 1]
            rem = ts[-1] - ts[k - 1]
            nexts[key].append(nxt)
            rems[key].append(rem)
            all_next.append(nxt)
            all_rem.append(rem)
    states = {k: StateAnnotation(agg(nexts[k]), agg(rems[k]), len(nexts[k])) for k in nexts}
    return TransitionSystem(
        states,
        kind,
        agg(all_next) if all_next else 0.0,
        agg(all_rem) if all_rem else 0.0,
        statistic,
    )


def ts_predict(ts: TransitionSystem, prefix, target: str = "next_delta") -> float:
    """Annotated duration (seconds) for ``prefix``; ``target`` is ``next_delta`` or ``remaining``."""
    if target not in ("next_delta", "remaining"):
        raise ValueError(f"unknown target {target!r}")
    ann = ts.states.get(abstract(prefix, ts.abstraction))
    if target == "next_delta":
        return ann.mean_time_to_next if ann else ts.global_mean_next
    return ann.mean_remaining if ann else ts.global_mean_remaining
