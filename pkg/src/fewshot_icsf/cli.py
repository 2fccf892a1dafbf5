"""Command-line entry point: ``fewshot-icsf <command> ...``.

Exit status is 0 on success, 1 for validation or contract errors and 2 for
I/O errors. Diagnostics go to standard error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from . import pipeline
from .autodiff import CheckpointError, GradientCheckError, gradient_check
from .data.config import (
    DEFAULT_ADAPT_STEPS,
    DEFAULT_BASELINE_BATCH,
    DEFAULT_EVAL_EPISODES,
    DEFAULT_INNER_LR,
    DEFAULT_INNER_STEPS,
    DEFAULT_OUTER_LR,
    ConfigError,
    read_run_config,
)
from .data.results import read_results, records_to_csv, render_tables, write_results

log = logging.getLogger("fewshot_icsf")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Raise instead of exiting so bad usage maps onto the validation exit status."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


TRAINING_DEFAULTS = (
    "run-config defaults when a key is omitted: outer_lr "
    + ", ".join(f"{k}={v}" for k, v in DEFAULT_OUTER_LR.items())
    + f"; inner_lr={DEFAULT_INNER_LR}; inner_steps={DEFAULT_INNER_STEPS}"
    + f"; baseline_batch={DEFAULT_BASELINE_BATCH}; baseline_adapt_steps={DEFAULT_ADAPT_STEPS}"
    + "; epochs=50 (30 with contextual vectors); episodes_per_epoch=100"
)


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="fewshot-icsf", description="Few-shot intent classification and slot filling.",
                     formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("prepare-splits", help="prefix slot labels and split a corpus by intent",
                       formatter_class=fmt)
    p.add_argument("--data", required=True, help="corpus file, or directory of <dataset>.txt files")
    p.add_argument("--splits", required=True, help="JSON split config {dataset: {train, dev, test}}")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sample", help="draw episodes from a split file", formatter_class=fmt)
    p.add_argument("--split", required=True, help="split file")
    p.add_argument("--kmax", required=True, type=_positive_int, help="support set size cap (20 or 100)")
    p.add_argument("--count", type=_positive_int, default=100, help="number of episodes")
    p.add_argument("--seed", required=True, type=int, help="sampler seed")
    p.add_argument("--out", required=True, help="output JSONL file")

    p = sub.add_parser("train", help="train one model per seed", formatter_class=fmt,
                       epilog=TRAINING_DEFAULTS)
    p.add_argument("--config", required=True, help="JSON run config")
    p.add_argument("--joint", action="store_true", default=False,
                   help="train on every listed dataset, picking one per episode/batch")
    p.add_argument("--seeds", required=True, type=_seed_list,
                   help="comma-separated training seeds, one model each")

    p = sub.add_parser("eval", help="episodic evaluation aggregated over seeds", formatter_class=fmt,
                       epilog="`{seed}` in a --checkpoint path is replaced by each seed.")
    p.add_argument("--checkpoint", required=True, action="append",
                   help="checkpoint file; repeat once per seed or use a {seed} pattern")
    p.add_argument("--split", required=True, action="append", help="split file; may be repeated")
    p.add_argument("--episodes", type=_positive_int, default=DEFAULT_EVAL_EPISODES, help="episodes per seed")
    p.add_argument("--seeds", required=True, type=_seed_list, help="comma-separated evaluation seeds")
    p.add_argument("--kmax", type=_positive_int, default=None,
                   help="support set size cap (default: the checkpoint's training value)")
    p.add_argument("--out", default=None, help="results CSV (a .txt table is written beside it); "
                                               "CSV goes to stdout when omitted")

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op",
                       formatter_class=fmt)
    p.add_argument("--seed", type=int, default=0, help="seed for the random test inputs")
    p.add_argument("--trials", type=_positive_int, default=5, help="random shapes per op")
    p.add_argument("--step", type=float, default=1e-5, help="central-difference step h")
    p.add_argument("--tolerance", type=float, default=1e-6, help="maximum relative error")

    p = sub.add_parser("report", help="merge result CSVs into one set of tables", formatter_class=fmt)
    p.add_argument("--in", dest="inputs", required=True, help="directory of result CSV files")
    p.add_argument("--out", required=True, help="merged results CSV (a .txt table is written beside it)")
    return parser


def _cmd_prepare_splits(args) -> int:
    stats = pipeline.prepare_splits(args.data, args.splits, args.out)
    sys.stderr.write((Path(args.out) / "stats.txt").read_text(encoding="utf-8"))
    log.info("wrote splits for %s to %s", ", ".join(stats), args.out)
    return EXIT_OK


def _cmd_sample(args) -> int:
    n = pipeline.sample_episodes(args.split, args.kmax, args.count, args.seed, args.out)
    log.info("wrote %d episodes to %s", n, args.out)
    return EXIT_OK


def _cmd_train(args) -> int:
    run = read_run_config(args.config)
    if args.joint:
        run.joint = True
    elif len(run.datasets) > 1 and not run.joint:
        raise ConfigError("several datasets listed; pass --joint or set \"joint\": true")
    run.seeds = args.seeds
    for path in pipeline.run_training(run):
        print(path)
    return EXIT_OK


def _cmd_eval(args) -> int:
    records = [pipeline.run_evaluation(args.checkpoint, split, args.seeds, args.episodes, args.kmax)
               for split in args.split]
    if args.out:
        csv_path, table_path = write_results(records, args.out)
        log.info("wrote %s and %s", csv_path, table_path)
    else:
        sys.stdout.write(records_to_csv(records))
    sys.stderr.write(render_tables(records))
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    start = time.perf_counter()
    try:
        report = gradient_check(seed=args.seed, trials=args.trials, h=args.step, tolerance=args.tolerance)
        status = EXIT_OK
    except GradientCheckError as exc:
        report, status = exc.report, EXIT_INVALID
    for name, err in report.items():
        verdict = "ok" if err < args.tolerance else "FAIL"
        print(f"{name:24s} {err:.3e} {verdict}")
    log.info("gradcheck finished in %.2fs", time.perf_counter() - start)
    return status


def _cmd_report(args) -> int:
    folder = Path(args.inputs)
    if not folder.is_dir():
        raise FileNotFoundError(f"not a directory: {folder}")
    out = Path(args.out).resolve()
    records = []
    for path in sorted(folder.glob("*.csv")):
        if path.resolve() != out:
            records.extend(read_results(path))
    csv_path, table_path = write_results(records, out)
    log.info("merged %d records into %s and %s", len(records), csv_path, table_path)
    return EXIT_OK


COMMANDS = {
    "prepare-splits": _cmd_prepare_splits,
    "sample": _cmd_sample,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (OSError, CheckpointError) as exc:
        print(f"error: {args.command}: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {args.command}: {type(exc).__module__}.{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
