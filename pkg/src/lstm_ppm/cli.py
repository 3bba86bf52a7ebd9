"""Command line entry points.

    lstm-ppm train          --log helpdesk.csv --out runs/helpdesk
    lstm-ppm eval-next      --log helpdesk.csv --checkpoint runs/helpdesk/model.npz
    lstm-ppm eval-suffix    --log helpdesk.csv --checkpoint runs/helpdesk/model.npz
    lstm-ppm eval-remaining --log helpdesk.csv --checkpoint runs/helpdesk/model.npz
    lstm-ppm eval-remaining --log helpdesk.csv --abstraction sequence
    lstm-ppm baseline       --log helpdesk.csv --abstraction sequence

Any option may also come from a ``--config`` file of ``key = value`` lines
(keys are option names without the leading dashes); flags on the command
line win. Exit status is 0 on success, 1 on runtime failure and 2 on bad
usage or input.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

from .baselines import Abstraction, build_ts
from .encoding import UnknownActivityError, fit_normalizer
from .eventlog import HEADER, LogFormatError, read_csv
from .experiments import DEDUP_MODES, evaluate_baseline, evaluate_next, evaluate_suffix, prepare
from .metrics import DAY_SECONDS, aggregate
from .network import load_checkpoint, save_checkpoint
from .training import TrainHyper, train

logger = logging.getLogger("lstm_ppm")


class UsageError(Exception):
    pass


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _prefix_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _fraction(text: str) -> Fraction:
    try:
        value = Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"invalid fraction {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"split fraction must be in (0, 1), got {text}")
    return value


def _columns(text: str) -> tuple[str, ...]:
    cols = tuple(c.strip() for c in text.split(","))
    if len(cols) != 3:
        raise argparse.ArgumentTypeError("--columns needs case,activity,timestamp header names")
    return cols


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value file supplying defaults")
    p.add_argument("--log", required=True, help="event log CSV")
    p.add_argument(
        "--columns",
        type=_columns,
        default=",".join(HEADER),
        help="header names for case id, activity and timestamp (default: %(default)s)",
    )
    p.add_argument("--split", type=_fraction, default="2/3", help="training fraction, e.g. 2/3 or 0.6667")
    p.add_argument("--dedup", choices=DEDUP_MODES, default="off")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="lstm-ppm", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["train"] = sub.add_parser("train", help="train a model on the training split")
    _add_common(p)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--shared", type=int, default=1)
    p.add_argument("--neurons", type=int, default=100)
    p.add_argument("--cell", choices=("lstm", "rnn"), default="lstm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=150, help="maximum epochs")
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--loss-weight", type=float, default=1.0, help="weight of the time MAE term")
    p.add_argument("--val-fraction", type=float, default=0.2)

    p = subs["eval-next"] = sub.add_parser("eval-next", help="next activity and timestamp")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--prefixes", type=_prefix_list, default="2,4,6", help="prefix rows to display")

    p = subs["eval-suffix"] = sub.add_parser("eval-suffix", help="suffix similarity")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cap", type=int, default=None, help="rollout cap (default 5x longest trace)")

    p = subs["eval-remaining"] = sub.add_parser("eval-remaining", help="remaining time per prefix")
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--abstraction", choices=[a.value for a in Abstraction])
    p.add_argument("--statistic", choices=("mean", "median"), default="mean")
    p.add_argument("--cap", type=int, default=None)

    p = subs["baseline"] = sub.add_parser("baseline", help="transition-system time baseline")
    _add_common(p)
    p.add_argument("--abstraction", choices=[a.value for a in Abstraction], default="sequence")
    p.add_argument("--target", choices=("next", "remaining"), default="next")
    p.add_argument("--statistic", choices=("mean", "median"), default="mean")
    p.add_argument("--prefixes", type=_prefix_list, default="2,4,6")
    return parser, subs


def _parse(argv):
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in subs:
        sp = subs[known.command]
        try:
            values = read_config(known.config)
        except OSError as exc:
            raise UsageError(f"cannot read config {known.config}: {exc.strerror}") from None
        dests = {a.dest for a in sp._actions}
        unknown = sorted(set(values) - dests)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        for action in sp._actions:
            if action.dest in values:
                # config values satisfy required options
                action.required = False
        sp.set_defaults(**values)
    return parser.parse_args(argv)


def _load_log(args):
    if not os.path.isfile(args.log):
        raise UsageError(f"event log not found: {args.log}")
    log = read_csv(args.log, args.columns)
    train_log, test_log = prepare(log, args.split, args.dedup)
    logger.info(
        "log %s: %d traces, %d events, %d activities; train %d / test %d traces",
        args.log, len(log), log.n_events, len(log.alphabet), len(train_log), len(test_log),
    )
    return train_log, test_log


def _load_model(path):
    if not os.path.isfile(path):
        raise UsageError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _out(args, name) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def cmd_train(args):
    train_log, _ = _load_log(args)
    norm = fit_normalizer(train_log)
    hyper = TrainHyper(
        learning_rate=args.lr,
        batch_size=args.batch_size,
        max_epochs=args.epochs,
        patience=args.patience,
        validation_fraction=args.val_fraction,
        loss_weight=args.loss_weight,
        seed=args.seed,
    )
    model, report = train(
        train_log, args.layers, args.shared, args.neurons, args.cell, hyper=hyper, norm=norm
    )
    save_checkpoint(_out(args, "model.npz"), model)
    with open(_out(args, "train_report.csv"), "w", newline="") as fh:
        report.write_csv(fh)
    best = report.epochs[report.best_epoch - 1]
    print(
        f"trained {report.stopping_epoch} epochs in {report.wall_clock:.1f}s; "
        f"best epoch {report.best_epoch}: val_loss={best.val_loss:.5f} "
        f"val_accuracy={best.val_accuracy:.4f}; mean_delta={norm.mean_delta:.3f}s"
    )


def cmd_eval_next(args):
    model = _load_model(args.checkpoint)
    _, test_log = _load_log(args)
    table = aggregate(evaluate_next(model, test_log), args.prefixes)
    with open(_out(args, "next_metrics.csv"), "w", newline="") as fh:
        table.write_csv(fh)
    print(f"accuracy={table.all.accuracy:.4f} mae_days={table.all.mae_days:.4f} prefixes={table.all.count}")


def cmd_eval_suffix(args):
    model = _load_model(args.checkpoint)
    _, test_log = _load_log(args)
    result = evaluate_suffix(model, test_log, args.cap)
    table = aggregate(result.records)
    with open(_out(args, "suffix_metrics.csv"), "w", newline="") as fh:
        table.write_csv(fh)
    summary = {
        "mean_dls": result.mean_dls,
        "truncated_fraction": result.truncated_fraction,
        "prefixes": len(result.records),
    }
    with open(_out(args, "suffix_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"mean_dls={result.mean_dls:.4f} truncated_fraction={result.truncated_fraction:.4f}")


def write_remaining_csv(records, fh):
    """One row per prefix length plus ``All``: prefix, count, mae_days."""
    groups = defaultdict(list)
    for r in records:
        groups[r.prefix_length].append(abs(r.predicted_time - r.actual_time))
    fh.write("prefix,count,mae_days\n")
    for k in sorted(groups):
        errs = groups[k]
        fh.write(f"{k},{len(errs)},{sum(errs) / len(errs) / DAY_SECONDS!r}\n")
    errs = [abs(r.predicted_time - r.actual_time) for r in records]
    fh.write(f"All,{len(errs)},{sum(errs) / len(errs) / DAY_SECONDS!r}\n")


def cmd_eval_remaining(args):
    train_log, test_log = _load_log(args)
    if args.checkpoint:
        model = _load_model(args.checkpoint)
        records = evaluate_suffix(model, test_log, args.cap).records
        name = "remaining_mae_model.csv"
    else:
        ts = build_ts(train_log, args.abstraction, args.statistic)
        records = evaluate_baseline(ts, test_log, "remaining")
        name = f"remaining_mae_{args.abstraction}.csv"
    with open(_out(args, name), "w", newline="") as fh:
        write_remaining_csv(records, fh)
    mae = sum(abs(r.predicted_time - r.actual_time) for r in records) / len(records) / DAY_SECONDS
    print(f"remaining-time mae_days={mae:.4f} prefixes={len(records)}")


def cmd_baseline(args):
    train_log, test_log = _load_log(args)
    ts = build_ts(train_log, args.abstraction, args.statistic)
    target = "next_delta" if args.target == "next" else "remaining"
    table = aggregate(evaluate_baseline(ts, test_log, target), args.prefixes)
    with open(_out(args, f"baseline_{args.abstraction}_{args.target}.csv"), "w", newline="") as fh:
        table.write_csv(fh)
    print(f"{args.abstraction} abstraction, {args.target}: mae_days={table.all.mae_days:.4f}")


COMMANDS = {
    "train": cmd_train,
    "eval-next": cmd_eval_next,
    "eval-suffix": cmd_eval_suffix,
    "eval-remaining": cmd_eval_remaining,
    "baseline": cmd_baseline,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _parse(argv)
    except UsageError as exc:
        print(f"lstm-ppm: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        COMMANDS[args.command](args)
    except (UsageError, LogFormatError, UnknownActivityError, FileNotFoundError) as exc:
        print(f"lstm-ppm: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        logger.debug("command failed", exc_info=True)
        print(f"lstm-ppm: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
