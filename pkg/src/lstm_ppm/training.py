"""Adam optimisation of the network over all training prefixes."""

from __future__ import annotations

import csv
import logging
import math
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .encoding import NormConstants, encode_prefix, encode_target, fit_normalizer
from .eventlog import EventLog
from .network import Model, NetworkConfig, NetworkParams, Targets, backward, forward, init_params
from .network import loss as joint_loss

logger = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    """A gradient with NaN or infinite entries reached the optimiser."""


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    alpha: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: NetworkParams, **hyper) -> AdamState:
        return cls(
            [np.zeros_like(a) for a in params.arrays()],
            [np.zeros_like(a) for a in params.arrays()],
            **hyper,
        )


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place to ``params`` and ``state``."""
    g_arrays = grads.arrays()
    for g in g_arrays:
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient entry; training diverged")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for theta, g, m, v in zip(params.arrays(), g_arrays, state.m, state.v):
        if theta.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {theta.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        theta -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)


@dataclass
class TrainHyper:
    learning_rate: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 32
    max_epochs: int = 150
    patience: int = 10
    validation_fraction: float = 0.2
    loss_weight: float = 1.0
    seed: int = 0


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    stopping_epoch: int = 0
    wall_clock: float = 0.0
    mean_delta: float = 0.0

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_accuracy"])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss), repr(e.val_accuracy)])


@dataclass
class PrefixBatch:
    """Prefixes of one common length, supervised at their last step."""

    X: np.ndarray
    labels: np.ndarray
    deltas: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]

    def targets(self) -> Targets:
        B, T = self.X.shape[:2]
        labels = np.zeros((B, T), dtype=np.int64)
        deltas = np.zeros((B, T))
        mask = np.zeros((B, T), dtype=bool)
        labels[:, -1] = self.labels
        deltas[:, -1] = self.deltas
        mask[:, -1] = True
        return Targets(labels, deltas, mask)


def build_samples(log: EventLog, norm: NormConstants) -> dict[int, PrefixBatch]:
    """All ``(hd^k, target)`` pairs with ``2 <= k <= |trace|``, grouped by ``k``."""
    index = log.activity_index
    by_len: dict[int, tuple[list, list, list]] = defaultdict(lambda: ([], [], []))
    for trace in log:
        if len(trace) < 2:
            continue
        full = encode_prefix(trace, index, norm)
        for k in range(2, len(trace) + 1):
            tgt = encode_target(trace, k, index, norm)
            xs, ls, ds = by_len[k]
            xs.append(full[:k])
            ls.append(tgt.label)
            ds.append(tgt.next_delta)
    return {
        k: PrefixBatch(np.stack(xs), np.array(ls, dtype=np.int64), np.array(ds))
        for k, (xs, ls, ds) in sorted(by_len.items())
    }


def _minibatches(samples: dict[int, PrefixBatch], size: int, rng: np.random.Generator):
    batches = []
    for k, group in samples.items():
        order = rng.permutation(len(group))
        for start in range(0, len(order), size):
            idx = order[start : start + size]
            batches.append(PrefixBatch(group.X[idx], group.labels[idx], group.deltas[idx]))
    return [batches[i] for i in rng.permutation(len(batches))]


def evaluate(params, config, samples: dict[int, PrefixBatch], weight: float, chunk: int = 512):
    """Mean loss and next-activity accuracy over every sample."""
    total, correct, n = 0.0, 0, 0
    for group in samples.values():
        for start in range(0, len(group), chunk):
            part = PrefixBatch(
                group.X[start : start + chunk],
                group.labels[start : start + chunk],
                group.deltas[start : start + chunk],
            )
            logits, time_pred, _ = forward(part.X, params, config)
            total += joint_loss(logits, time_pred, part.targets(), weight) * len(part)
            correct += int((logits[:, -1].argmax(axis=1) == part.labels).sum())
            n += len(part)
    if n == 0:
        raise ValueError("no samples to evaluate")
    return total / n, correct / n


def _validation_split(train: EventLog, fraction: float) -> tuple[EventLog, EventLog]:
    ordered = sorted(train.traces, key=lambda t: t.start)
    n_val = int(round(fraction * len(ordered)))
    if len(ordered) < 2 or n_val == 0:
        logger.warning("training log too small for a validation slice; validating on training data")
        return train, train
    n_val = min(n_val, len(ordered) - 1)
    return train.with_traces(ordered[:-n_val]), train.with_traces(ordered[-n_val:])


def train(
    train_log: EventLog,
    layers: int = 2,
    shared: int = 1,
    neurons: int = 100,
    cell_kind: str = "lstm",
    hyper: TrainHyper | None = None,
    norm: NormConstants | None = None,
) -> tuple[Model, TrainReport]:
    """Fit a network on ``train_log`` and return the best-validation model.

    The normaliser is fitted on the full training log unless given. The last
    ``hyper.validation_fraction`` of traces (by start time) are held out for
    early stopping.
    """
    hyper = hyper or TrainHyper()
    if len(train_log) == 0:
        raise ValueError("empty training log")
    started = time.perf_counter()
    norm = norm or fit_normalizer(train_log)
    config = NetworkConfig.for_alphabet(
        len(train_log.alphabet),
        total_layers=layers,
        shared_layers=shared,
        neurons=neurons,
        cell_kind=cell_kind,
        seed=hyper.seed,
    )
    fit_part, val_part = _validation_split(train_log, hyper.validation_fraction)
    train_samples = build_samples(fit_part, norm)
    val_samples = build_samples(val_part, norm)
    if not train_samples:
        raise ValueError("training log has no trace with two or more events")
    if not val_samples:
        val_samples = train_samples

    params = init_params(config)
    state = AdamState.for_params(
        params,
        alpha=hyper.learning_rate,
        beta1=hyper.beta1,
        beta2=hyper.beta2,
        epsilon=hyper.epsilon,
    )
    rng = np.random.default_rng(hyper.seed)
    report = TrainReport(mean_delta=norm.mean_delta)
    best_val, best_params, since_best = math.inf, params.copy(), 0

    for epoch in range(1, hyper.max_epochs + 1):
        total, n = 0.0, 0
        for batch in _minibatches(train_samples, hyper.batch_size, rng):
            _, _, tape = forward(batch.X, params, config)
            value, grads = backward(tape, batch.targets(), hyper.loss_weight)
            adam_step(params, grads, state)
            total += value * len(batch)
            n += len(batch)
        val_loss, val_acc = evaluate(params, config, val_samples, hyper.loss_weight)
        stats = EpochStats(epoch, total / n, val_loss, val_acc)
        if not (math.isfinite(stats.train_loss) and math.isfinite(val_loss)):
            raise DivergenceError(f"non-finite loss at epoch {epoch}")
        report.epochs.append(stats)
        logger.info(
            "epoch %d train_loss=%.5f val_loss=%.5f val_acc=%.4f",
            epoch, stats.train_loss, val_loss, val_acc,
        )
        if val_loss < best_val:
            best_val, best_params, since_best = val_loss, params.copy(), 0
            report.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= hyper.patience:
                break
    report.stopping_epoch = len(report.epochs)
    report.wall_clock = time.perf_counter() - started
    max_len = max(len(t) for t in train_log)
    return Model(config, best_params, norm, tuple(train_log.alphabet), max_len), report
