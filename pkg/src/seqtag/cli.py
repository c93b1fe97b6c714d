"""Command-line entry point: train, eval, sweep, compare, analyze-units, convert.

Exit codes: 0 success, 1 usage/configuration/IO error, 2 diverged training run.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from .config import ConfigError, NetworkConfig, canonical_json
from .corpus import encode_sentences, load_task_dir, read_conll, write_conll, RawSentence
from .runner import run_multi, run_single
from .study import (
    HyperparameterSpace, ResultsAppender, StudyRecord, binned_medians, check_paired, compare,
    paired_group, poly_fit, read_results, write_comparison, write_violin_data, units_points,
)
from .tagger import load_checkpoint, save_checkpoint
from .tagscheme import InvalidTagSequence, RepairStrategy, TagScheme, convert_scheme, repair_invalid
from .trainer import evaluate

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2

log = logging.getLogger("seqtag")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other user-facing failures
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _default_jobs() -> int:
    raw = os.environ.get("SEQTAG_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _load_config(args) -> NetworkConfig:
    config = NetworkConfig()
    if args.config:
        config = NetworkConfig.from_json(Path(args.config).read_text(encoding="utf-8"))
    if getattr(args, "embeddings", None):
        config = config.with_value("embedding_path", args.embeddings)
    if getattr(args, "seed", None) is not None:
        config = config.with_value("seed", args.seed)
    return config


def cmd_train(args) -> int:
    config = _load_config(args)
    if args.aux_data:
        model, report = run_multi(args.data, args.aux_data, config, args.supervision, args.max_epochs)
    else:
        model, report = run_single(args.data, config, args.max_epochs)
    if args.out:
        save_checkpoint(model, args.out)
    print(report.to_json(with_time=args.timing))
    return EXIT_DIVERGED if report.diverged else EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(args.checkpoint)
    task = args.task or model.main_task
    if task not in model.heads:
        raise UsageError(f"checkpoint has no task {task!r}; available: {sorted(model.heads)}")
    head = model.heads[task]
    _, _, splits = load_task_dir(args.data, head.scheme.value)
    sents = encode_sentences(splits[args.split], task, model.word_vocab, model.char_vocab, head.labels)
    _, repaired = model.predict_tags(sents, task)
    metric = "accuracy" if head.scheme is TagScheme.NONE else "f1"
    out = {"task": task, "split": args.split, "metric": metric,
           "score": evaluate(model, sents, task), "sentences": len(sents),
           "repaired_sentences": repaired}
    print(canonical_json(out))
    return EXIT_OK


def _sweep_run(task_dir: str, option: str, group_id: int, config_json: str, max_epochs):
    config = NetworkConfig.from_json(config_json)
    _, report = run_single(task_dir, config, max_epochs)
    return StudyRecord(group_id, option, config.seed, report.task, report.test_at_best_dev,
                       report.dev_at_best, report.epochs_run, report.diverged, config_json)


def cmd_sweep(args) -> int:
    space = HyperparameterSpace.load(args.space) if args.space else HyperparameterSpace()
    space.options(args.vary)
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    task_names = {d: load_task_dir(d)[0] for d in args.tasks}
    out = Path(args.out)
    done = set()
    if out.exists() and out.stat().st_size:
        done = {(r.task, r.group_id) for r in read_results(out)}
    appender = ResultsAppender(out)

    pending = {}  # (task, group) -> {option: record or None}
    jobs = []
    for d in args.tasks:
        for g in range(args.n):
            key = (task_names[d], g)
            if key in done:
                continue
            group = paired_group(space, args.vary, g, args.seed)
            check_paired([c for _, c in group], args.vary)
            pending[key] = {o: None for o, _ in group}
            jobs += [(key, d, o, g, c.to_json()) for o, c in group]
    log.info("sweep: %d runs in %d groups (%d groups already done)", len(jobs), len(pending), len(done))

    def finish(key, rec):
        pending[key][rec.option] = rec
        if all(r is not None for r in pending[key].values()):
            appender.append(pending.pop(key).values())

    if args.jobs <= 1:
        for key, d, o, g, cfg in jobs:
            finish(key, _sweep_run(d, o, g, cfg, args.max_epochs))
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(_sweep_run, d, o, g, cfg, args.max_epochs): key
                       for key, d, o, g, cfg in jobs}
            for fut in as_completed(futures):
                finish(futures[fut], fut.result())
    return EXIT_OK


def cmd_compare(args) -> int:
    records = read_results(args.results)
    if not records:
        raise UsageError(f"{args.results}: no records")
    tables = compare(records, args.vary)
    if not tables:
        raise UsageError(f"{args.results}: no complete groups")
    if args.out:
        write_comparison(args.out, tables)
    if args.violin:
        write_violin_data(args.violin, records)
    print("\n\n".join(t.format() for t in tables))
    return EXIT_OK


def cmd_analyze_units(args) -> int:
    x, y = units_points(read_results(args.results), args.layers)
    if len(np.unique(x)) < 3:
        raise UsageError(f"need at least 3 distinct unit counts, found {len(np.unique(x))}")
    fit = poly_fit(x, y)
    out = fit.to_dict()
    out["layers"] = args.layers
    out["binned_medians"] = [{"units": u, "median": m, "count": c} for u, m, c in binned_medians(x, y)]
    print(canonical_json(out))
    return EXIT_OK


def cmd_convert(args) -> int:
    source, target = TagScheme.parse(args.source), TagScheme.parse(args.target)
    sents = read_conll(args.input, args.token_column, args.label_column)
    out, repaired = [], 0
    for s in sents:
        tags = list(s.tags)
        if args.repair:
            tags, n = repair_invalid(tags, source, args.repair)
            repaired += n > 0
        out.append(RawSentence(s.words, convert_scheme(tags, source, target)))
    write_conll(args.output, out)
    if repaired:
        print(f"repaired {repaired} sentences", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="seqtag", description="BiLSTM sequence tagger and paired hyperparameter studies.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one model and print its report as JSON")
    t.add_argument("--config", help="NetworkConfig as canonical JSON (defaults when omitted)")
    t.add_argument("--data", required=True, help="task directory with train/dev/test.txt")
    t.add_argument("--aux-data", help="auxiliary task directory for multi-task training")
    t.add_argument("--supervision", choices=("same_level", "different_level"), default="same_level",
                   help="layer feeding the auxiliary output layer (multi-task only)")
    t.add_argument("--embeddings", help="text embedding file (overrides the config)")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--max-epochs", type=int, help="override the epoch cap")
    t.add_argument("--out", help="write a checkpoint here")
    t.add_argument("--timing", action="store_true", help="include wall time in the report")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a split of a task directory")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="task directory")
    e.add_argument("--split", choices=("train", "dev", "test"), default="test")
    e.add_argument("--task", help="output layer to use (default: the main task)")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="run paired random configurations varying one knob")
    s.add_argument("--space", help="JSON with 'candidates', 'fixed' and optional 'depth_units'")
    s.add_argument("--vary", required=True, help="knob under study, e.g. classifier or dropout.kind")
    s.add_argument("--n", type=int, required=True, help="number of paired groups per task")
    s.add_argument("--tasks", nargs="+", required=True, help="task directories")
    s.add_argument("--jobs", type=int, default=_default_jobs(),
                   help="concurrent runs (default: $SEQTAG_THREADS or 1)")
    s.add_argument("--out", required=True, help="results CSV (appended to; finished groups are skipped)")
    s.add_argument("--seed", type=int, default=0, help="base seed")
    s.add_argument("--max-epochs", type=int, help="override the epoch cap")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("compare", help="comparison table from a results CSV")
    c.add_argument("--results", required=True)
    c.add_argument("--vary", required=True, help="name of the varied knob (for labelling)")
    c.add_argument("--out", help="write the table as CSV")
    c.add_argument("--violin", help="write per-option score vectors as CSV")
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("analyze-units", help="quadratic fit of test score against units per LSTM")
    a.add_argument("--results", required=True)
    a.add_argument("--layers", type=int, help="only records with this many BiLSTM layers")
    a.set_defaults(func=cmd_analyze_units)

    v = sub.add_parser("convert", help="convert a CoNLL file between tagging schemes")
    v.add_argument("--input", required=True)
    v.add_argument("--output", required=True)
    v.add_argument("--from", dest="source", required=True, choices=("BIO", "IOB", "IOBES"))
    v.add_argument("--to", dest="target", required=True, choices=("BIO", "IOB", "IOBES"))
    v.add_argument("--repair", choices=[r.value for r in RepairStrategy],
                   help="repair invalid input sequences instead of failing")
    v.add_argument("--token-column", type=int, default=0)
    v.add_argument("--label-column", type=int, default=-1)
    v.set_defaults(func=cmd_convert)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, InvalidTagSequence, OSError, ValueError, KeyError,
            np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
