"""Acceptance criteria, one PASS / FAIL / BLOCKED line each.

Criteria 3 to 5 need the public Helpdesk and BPI'12 W logs as pre-filtered
CSVs. Point ``LSTM_PPM_HELPDESK`` and ``LSTM_PPM_BPI12W`` at them (optionally
``LSTM_PPM_HELPDESK_COLUMNS`` / ``LSTM_PPM_BPI12W_COLUMNS`` for other header
names). The full-length training runs (up to four CPU hours per log) also
need ``LSTM_PPM_FULL=1``; without it only the short smoke run is attempted.
"""

import os
import random
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from lstm_ppm.baselines import build_ts
from lstm_ppm.eventlog import HEADER, parse_csv, read_csv
from lstm_ppm.experiments import evaluate_baseline, evaluate_next, evaluate_suffix, prepare
from lstm_ppm.metrics import accuracy, dl_distance, mae_days
from lstm_ppm.prediction import predict_suffix
from lstm_ppm.training import TrainHyper, train

from .conftest import ACCEPTANCE_LINES, deterministic_csv
from .gradcheck import REL_TOL, max_relative_error, random_problem
from .test_metrics import osa_oracle

ROOT = Path(__file__).resolve().parent.parent
TS_MAE_TOL = 0.30
TS_EXPECTED = {"set": 5.83, "bag": 5.74, "sequence": 5.67}


def report(criterion, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
    assert ok, detail


def blocked(criterion, reason):
    ACCEPTANCE_LINES.append(f"[BLOCKED] {criterion}: {reason}")
    pytest.skip(f"BLOCKED: {reason}")


def dataset(env, criterion):
    path = os.environ.get(env)
    if not path or not os.path.isfile(path):
        blocked(criterion, f"dataset unavailable (set {env} to the CSV path)")
    cols = os.environ.get(f"{env}_COLUMNS")
    if cols:
        columns = tuple(c.strip() for c in cols.split(","))
    else:
        with open(path, encoding="utf-8-sig") as fh:
            first = fh.readline().strip()
        legacy = ("CaseID", "ActivityID", "CompleteTimestamp")
        columns = legacy if first == ",".join(legacy) else HEADER
    return read_csv(path, columns)


def full_runs(criterion):
    if os.environ.get("LSTM_PPM_FULL") != "1":
        blocked(criterion, "full-length training disabled (set LSTM_PPM_FULL=1; budget 4 CPU hours per log)")


# 1 -------------------------------------------------------------------------


def test_c1_gradient_check():
    rng = np.random.default_rng(20240)
    kinds = [("lstm", "a"), ("lstm", "b"), ("lstm", "c"), ("rnn", None)]
    started = time.perf_counter()
    worst, seen = 0.0, []
    for i in range(20):
        cell, arch = kinds[i % 4]
        if arch is None:
            arch = "abc"[int(rng.integers(3))]
        layers = int(rng.integers(2, 4)) if arch == "c" else int(rng.integers(1, 3))
        if arch == "a":
            shared = 0
        elif arch == "b":
            shared = layers
        else:
            shared = int(rng.integers(1, layers))
        problem = random_problem(
            rng,
            n_act=int(rng.integers(2, 5)),
            neurons=int(rng.integers(3, 7)),
            steps=int(rng.integers(1, 7)),
            layers=layers,
            shared=shared,
            cell=cell,
        )
        seen.append((cell, problem[3].architecture))
        worst = max(worst, max_relative_error(*problem))
    elapsed = time.perf_counter() - started
    covered = {("lstm", "a"), ("lstm", "b"), ("lstm", "c")} <= set(seen) and any(c == "rnn" for c, _ in seen)
    report(
        "1 gradient check",
        worst < REL_TOL and elapsed < 60 and covered,
        f"20 configs, max rel error {worst:.2e} (< {REL_TOL:g}), {elapsed:.1f}s (< 60s)",
    )


# 2 -------------------------------------------------------------------------


def test_c2_edit_distance_oracle():
    rnd = random.Random(7)
    started = time.perf_counter()
    mismatches = 0
    n_pairs = 10_000
    for _ in range(n_pairs):
        a = tuple(rnd.choice("abc") for _ in range(rnd.randint(0, 6)))
        b = tuple(rnd.choice("abc") for _ in range(rnd.randint(0, 6)))
        mismatches += dl_distance(a, b) != osa_oracle(a, b)
    elapsed = time.perf_counter() - started
    example = dl_distance(("a", "b"), ("b", "a"))
    report(
        "2 edit-distance oracle",
        mismatches == 0 and example == 1 and elapsed < 60,
        f"{n_pairs} pairs, {mismatches} mismatches; d(<a,b>,<b,a>)={example}; {elapsed:.1f}s",
    )


# 3 -------------------------------------------------------------------------


def test_c3_transition_system_helpdesk():
    log = dataset("LSTM_PPM_HELPDESK", "3 transition-system baseline (Helpdesk)")
    started = time.perf_counter()
    train_log, test_log = prepare(log, "2/3")
    got = {}
    for kind in TS_EXPECTED:
        got[kind] = mae_days(evaluate_baseline(build_ts(train_log, kind), test_log, "next_delta"))
    elapsed = time.perf_counter() - started
    ok = all(abs(got[k] - TS_EXPECTED[k]) <= TS_MAE_TOL for k in TS_EXPECTED) and elapsed < 60
    detail = ", ".join(f"{k} {got[k]:.2f} (target {TS_EXPECTED[k]} +/- {TS_MAE_TOL})" for k in TS_EXPECTED)
    report("3 transition-system baseline (Helpdesk)", ok, f"{detail}; {elapsed:.1f}s")


# 4 and 5 -------------------------------------------------------------------

_MODELS = {}


def trained(env, criterion, dedup="off"):
    key = (env, dedup)
    if key not in _MODELS:
        log = dataset(env, criterion)
        full_runs(criterion)
        train_log, test_log = prepare(log, "2/3", dedup)
        started = time.perf_counter()
        model, _ = train(train_log, layers=2, shared=1, neurons=100, hyper=TrainHyper(seed=0))
        _MODELS[key] = (model, test_log, time.perf_counter() - started)
    return _MODELS[key]


@pytest.mark.dataset
def test_c4_smoke_helpdesk():
    criterion = "4 smoke run (Helpdesk, <= 10 epochs)"
    log = dataset("LSTM_PPM_HELPDESK", criterion)
    started = time.perf_counter()
    train_log, test_log = prepare(log, "2/3")
    model, _ = train(train_log, layers=2, shared=1, neurons=100, hyper=TrainHyper(max_epochs=10))
    acc = accuracy(evaluate_next(model, test_log))
    elapsed = time.perf_counter() - started
    report(criterion, acc >= 0.60 and elapsed <= 900, f"accuracy {acc:.4f} (>= 0.60), {elapsed / 60:.1f} min (<= 15)")


@pytest.mark.dataset
@pytest.mark.slow
def test_c4_next_event_helpdesk():
    criterion = "4 next event (Helpdesk)"
    model, test_log, secs = trained("LSTM_PPM_HELPDESK", criterion)
    records = evaluate_next(model, test_log)
    acc, mae = accuracy(records), mae_days(records)
    report(
        criterion,
        acc >= 0.68 and mae <= 4.3 and secs <= 4 * 3600,
        f"accuracy {acc:.4f} (>= 0.68), MAE {mae:.2f} days (<= 4.3), trained in {secs / 3600:.2f} h",
    )


@pytest.mark.dataset
@pytest.mark.slow
def test_c4_next_event_bpi12w():
    criterion = "4 next event (BPI'12 W)"
    model, test_log, secs = trained("LSTM_PPM_BPI12W", criterion)
    acc = accuracy(evaluate_next(model, test_log))
    report(criterion, acc >= 0.72 and secs <= 4 * 3600, f"accuracy {acc:.4f} (>= 0.72), trained in {secs / 3600:.2f} h")


@pytest.mark.dataset
@pytest.mark.slow
def test_c5_suffix_helpdesk():
    criterion = "5 suffix (Helpdesk)"
    model, test_log, _ = trained("LSTM_PPM_HELPDESK", criterion)
    result = evaluate_suffix(model, test_log)
    report(criterion, result.mean_dls >= 0.70, f"mean DLS {result.mean_dls:.4f} (>= 0.70)")


@pytest.mark.dataset
@pytest.mark.slow
def test_c5_suffix_bpi12w_no_duplicates():
    criterion = "5 suffix (BPI'12 W, no duplicates)"
    model, test_log, _ = trained("LSTM_PPM_BPI12W", criterion, dedup="first")
    result = evaluate_suffix(model, test_log)
    report(criterion, result.mean_dls >= 0.30, f"mean DLS {result.mean_dls:.4f} (>= 0.30)")


# 6 -------------------------------------------------------------------------


def test_c6_synthetic_overfit():
    started = time.perf_counter()
    log = parse_csv(deterministic_csv())
    train_log, test_log = prepare(log, "2/3")
    model, _ = train(
        train_log, layers=2, shared=1, neurons=20, hyper=TrainHyper(max_epochs=200, patience=200)
    )
    acc = accuracy(evaluate_next(model, test_log))
    suffix = predict_suffix(model, test_log.traces[0].head(2)).activities
    records = evaluate_suffix(model, test_log).records
    rel = max(abs(r.predicted_time - r.actual_time) / r.actual_time for r in records)
    elapsed = time.perf_counter() - started
    report(
        "6 synthetic overfit",
        acc >= 0.99 and suffix == ["c", "d"] and rel <= 0.05 and elapsed < 300,
        f"accuracy {acc:.4f} (>= 0.99), suffix of <a,b> = <{','.join(suffix)}>, "
        f"worst remaining-time error {100 * rel:.2f}% (<= 5%), {elapsed:.1f}s",
    )


# 7 -------------------------------------------------------------------------

INVARIANT_TESTS = [
    "tests/test_network.py::test_forward_shapes_and_softmax",
    "tests/test_prediction.py::test_distribution_sums_to_one",
    "tests/test_network.py::test_gate_ranges_and_finite_state",
    "tests/test_network.py::test_gates_strictly_inside_for_moderate_inputs",
    "tests/test_prediction.py::test_cap_truncates",
    "tests/test_prediction.py::test_suffix_recursion_consistent_with_next",
    "tests/test_prediction.py::test_remaining_is_sum_of_deltas",
    "tests/test_prediction.py::test_timestamps_accumulate",
    "tests/test_eventlog.py::test_split_partitions",
    "tests/test_eventlog.py::test_dedup_idempotent",
    "tests/test_eventlog.py::test_parsed_traces_are_time_ordered",
    "tests/test_eventlog.py::test_head_tail_reconstruct",
    "tests/test_encoding.py::test_encoding_properties",
    "tests/test_metrics.py::test_dl_symmetric_and_bounded",
    "tests/test_baselines.py::test_matches_brute_force",
]


def test_c7_invariant_suites():
    started = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *INVARIANT_TESTS],
        cwd=ROOT,
        capture_output=True,
        text=True,
    )
    elapsed = time.perf_counter() - started
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()
    report(
        "7 invariant suites",
        proc.returncode == 0 and elapsed < 60,
        f"{len(INVARIANT_TESTS)} suites: {summary}",
    )
