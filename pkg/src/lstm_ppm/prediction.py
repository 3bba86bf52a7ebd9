"""Next-event, suffix and remaining-time prediction from a trained model.

Suffixes are rolled out greedily: the most likely activity is appended as a
synthetic event at the predicted timestamp and the network is stepped on it,
until end of case is predicted or the length cap is reached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encoding import encode_event, encode_prefix
from .eventlog import Trace
from .network import Model, forward, softmax


@dataclass(frozen=True)
class NextPrediction:
    activity_distribution: np.ndarray
    predicted_delta: float  # seconds
    predicted_timestamp: float
    end_class: int

    @property
    def activity_class(self) -> int:
        return int(np.argmax(self.activity_distribution))

    @property
    def is_end(self) -> bool:
        return self.activity_class == self.end_class


@dataclass
class SuffixPrediction:
    activities: list[str] = field(default_factory=list)
    timestamps: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    truncated: bool = False


def _check_prefix(prefix: Trace):
    if len(prefix) < 1:
        raise ValueError("prefix must contain at least one event")


def _next_from_outputs(model: Model, logits_last, time_last, last_ts) -> NextPrediction:
    dist = softmax(np.asarray(logits_last, dtype=np.float64))
    delta = max(0.0, float(time_last)) * model.norm.mean_delta
    return NextPrediction(dist, delta, last_ts + delta, model.end_class)


def predict_next(model: Model, prefix: Trace) -> NextPrediction:
    """Distribution over the next activity (last class = end of case) and next timestamp."""
    _check_prefix(prefix)
    X = encode_prefix(prefix, model.activity_index, model.norm)
    logits, time_pred, _ = forward(X, model.params, model.config)
    return _next_from_outputs(model, logits[-1], time_pred[-1], prefix.end)


def predict_next_batch(model: Model, prefixes: Sequence[Trace]) -> list[NextPrediction]:
    """:func:`predict_next` for many prefixes, batching those of equal length."""
    out: list[NextPrediction | None] = [None] * len(prefixes)
    index = model.activity_index
    by_len: dict[int, list[int]] = {}
    for i, p in enumerate(prefixes):
        _check_prefix(p)
        by_len.setdefault(len(p), []).append(i)
    for ids in by_len.values():
        X = np.stack([encode_prefix(prefixes[i], index, model.norm) for i in ids])
        logits, time_pred, _ = forward(X, model.params, model.config)
        for row, i in enumerate(ids):
            out[i] = _next_from_outputs(model, logits[row, -1], time_pred[row, -1], prefixes[i].end)
    return out  # type: ignore[return-value]


def predict_suffix(model: Model, prefix: Trace, cap: int | None = None) -> SuffixPrediction:
    """Roll out the continuation of ``prefix`` until end of case or ``cap`` events."""
    return predict_suffix_batch(model, [prefix], cap)[0]


def predict_suffix_batch(
    model: Model, prefixes: Sequence[Trace], cap: int | None = None
) -> list[SuffixPrediction]:
    """Roll out many prefixes at once; equal-length prefixes share a batch.

    The recurrent state is carried between steps, so each appended event costs
    a single network step. The appended event's features come from
    :func:`encode_event`, the same encoder used for observed events.
    """
    cap = model.suffix_cap if cap is None else cap
    if cap < 1:
        raise ValueError("cap must be >= 1")
    index, norm, alphabet = model.activity_index, model.norm, model.alphabet
    end = model.end_class
    results = [SuffixPrediction() for _ in prefixes]
    by_len: dict[int, list[int]] = {}
    for i, p in enumerate(prefixes):
        _check_prefix(p)
        by_len.setdefault(len(p), []).append(i)

    for ids in by_len.values():
        X = np.stack([encode_prefix(prefixes[i], index, norm) for i in ids])
        logits, time_pred, tape = forward(X, model.params, model.config)
        last_ts = np.array([prefixes[i].end for i in ids])
        active = np.ones(len(ids), dtype=bool)
        while True:
            cls = logits[:, -1].argmax(axis=1)
            deltas = np.maximum(0.0, time_pred[:, -1]) * norm.mean_delta
            steps = []
            for row, i in enumerate(ids):
                step = np.zeros(X.shape[-1])
                res = results[i]
                if not active[row]:
                    pass
                elif cls[row] == end:
                    active[row] = False
                elif len(res.activities) >= cap:
                    res.truncated = True
                    active[row] = False
                else:
                    activity = alphabet[cls[row]]
                    ts = last_ts[row] + deltas[row]
                    res.activities.append(activity)
                    res.timestamps.append(float(ts))
                    res.deltas.append(float(deltas[row]))
                    step = encode_event(activity, ts, last_ts[row], index, norm)
                    last_ts[row] = ts
                steps.append(step)
            if not active.any():
                break
            logits, time_pred, tape = forward(
                np.stack(steps)[:, None], model.params, model.config, tape.final_state
            )
    return results


def predict_remaining_time(model: Model, prefix: Trace, cap: int | None = None) -> float:
    """Seconds from the last observed event to the last predicted one."""
    suffix = predict_suffix(model, prefix, cap)
    return remaining_from_suffix(prefix, suffix)


def remaining_from_suffix(prefix: Trace, suffix: SuffixPrediction) -> float:
    """Predicted end time minus ``prefix.end``, summed from the deltas.

    Summing the deltas avoids the rounding of subtracting two large absolute
    timestamps; the values agree to floating-point precision.
    """
    return math.fsum(suffix.deltas)
