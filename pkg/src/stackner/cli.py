"""Command line entry point: train, augment, predict, evaluate, make-synthetic."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np
import torch

from . import augment as aug
from .config import ConfigError, RunConfig
from .corpus import (IOB2, IOBES, SCHEMES, Corpus, CorpusError, Sentence,
                     build_entity_glossary, build_vocab, entity_classes, extract_entities,
                     extract_spans, format_column_corpus, iobes_labelset, read_column_corpus,
                     read_pretrained_embeddings, write_labels)
from .evaluation import score_entities
from .model import (BilateralModel, Side, load_checkpoint, parameter_checksums,
                    save_checkpoint)
from .synthetic import write_synthetic_corpus
from .training import Phase, TrainingLog, evaluate, train_joint, train_separate

logger = logging.getLogger("stackner")


class CommandError(Exception):
    def __init__(self, message: str, status: int = 1):
        super().__init__(message)
        self.status = status


def _read(path, cfg: RunConfig | None = None, scheme=IOB2, **kwargs) -> Corpus:
    try:
        if cfg is not None:
            return read_column_corpus(path, token_column=cfg.token_column,
                                      label_column=cfg.label_column, scheme=cfg.scheme,
                                      **kwargs)
        return read_column_corpus(path, scheme=scheme, **kwargs)
    except (CorpusError, OSError) as err:
        raise CommandError(f"{path}: {err}") from err


def _load_config(args, need_train=True) -> RunConfig:
    if args.config is None:
        raise CommandError("--config is required", status=2)
    try:
        cfg = RunConfig.load(args.config, seed=args.seed, output_dir=args.output)
    except ConfigError as err:
        raise CommandError(f"invalid config: {err}", status=2) from err
    return cfg


def _metric_lines(prefix: str, report) -> list[str]:
    return [f"{prefix} {line}" for line in report.lines()]


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train = _read(cfg.train_path, cfg)
    dev = _read(cfg.dev_path, cfg) if cfg.dev_path else None
    test = _read(cfg.test_path, cfg) if cfg.test_path else None
    embeddings = read_pretrained_embeddings(cfg.embeddings_path) if cfg.embeddings_path else None

    run_dir = os.path.join(cfg.output_dir, cfg.run_name)
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)

    words, chars = build_vocab(train, cfg.min_frequency)
    classes = entity_classes(list(train) + list(dev or []) + list(test or []))
    torch.manual_seed(cfg.seed)
    model = BilateralModel(cfg.bilateral_config(iobes_labelset(classes)), words, chars)
    if embeddings is not None:
        model.load_pretrained(embeddings)

    log = TrainingLog(os.path.join(run_dir, "train.log"))
    tcfg = cfg.train_config()
    snapshots = {}
    if cfg.training_mode == "joint":
        train_joint(train, model, tcfg, dev=dev, run_dir=run_dir, log=log)
    else:
        train_separate(train, model, tcfg, dev=dev, run_dir=run_dir, log=log,
                       snapshots=snapshots)
    save_checkpoint(os.path.join(run_dir, "final.pt"), model, {"scheme": cfg.scheme})

    lines = []
    for name, corpus in (("dev", dev), ("test", test)):
        if corpus is None:
            continue
        lines += _metric_lines(f"split={name} model=final", evaluate(model, corpus))
        if Phase.LEFT_PRETRAIN in snapshots:
            lines += _metric_lines(f"split={name} model=left",
                                   evaluate(snapshots[Phase.LEFT_PRETRAIN], corpus, Side.LEFT))
    with open(os.path.join(run_dir, "metrics.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(run_dir, "checksums.txt"), "w") as fh:
        for group, digest in parameter_checksums(model).items():
            fh.write(f"{group}={digest}\n")
    print("\n".join(lines))
    return 0


def cmd_augment(args) -> int:
    cfg = None
    if args.config is not None:
        try:
            cfg = RunConfig.load(args.config)
        except ConfigError as err:
            raise CommandError(f"invalid config: {err}", status=2) from err
    mode = args.mode or (cfg.augment_mode if cfg else "sca")
    p = args.p if args.p is not None else (cfg.augment_p if cfg else 0.7)
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    source = args.input or (cfg.train_path if cfg else None)
    if source is None:
        raise CommandError("no input corpus given", status=2)
    if mode not in ("sca", "eca"):
        raise CommandError(f"--mode must be sca or eca, got {mode!r}", status=2)
    if args.output is None:
        raise CommandError("--output is required", status=2)
    if args.count is not None and args.count < 0:
        raise CommandError("--count must be non-negative", status=2)
    try:
        acfg = aug.AugmentConfig(aug.AugmentMode(mode), p, seed, args.count)
    except ValueError as err:
        raise CommandError(str(err), status=2) from err

    scheme = cfg.scheme if cfg else args.scheme
    corpus = _read(source, cfg, scheme=scheme)
    iobes = corpus.to_scheme(IOBES)
    if mode == "sca" and args.count is None:
        # one pass over the corpus in order, one augmented copy per sentence
        rng = np.random.default_rng([seed, 0])
        glossary = build_entity_glossary(iobes)
        produced = [aug.sca_augment(s, glossary, acfg, rng, i) for i, s in enumerate(iobes)]
    else:
        produced = list(aug.augmentation_stream(iobes, acfg, epoch=0))
    sentences = [a.sentence.to_scheme(corpus.scheme) for a in produced]
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(format_column_corpus(sentences))
    print(f"wrote {len(sentences)} sentences to {args.output}")
    return 0


def cmd_predict(args) -> int:
    if args.checkpoint is None or args.input is None:
        raise CommandError("--checkpoint and an input file are required", status=2)
    if args.output is None:
        raise CommandError("--output is required", status=2)
    try:
        model, meta = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, RuntimeError) as err:
        raise CommandError(f"cannot load checkpoint: {err}") from err
    scheme = meta.get("scheme", IOB2)
    if args.config is not None:
        _check_declared(model, _load_config(args))

    try:
        corpus = read_column_corpus(args.input, token_column=0, label_column=None,
                                    scheme=scheme, allow_empty=True)
    except (CorpusError, OSError) as err:
        raise CommandError(f"{args.input}: {err}") from err
    sentences = list(corpus)
    predicted = model.predict(sentences) if sentences else []
    out, mentions = [], []
    for idx, (sent, labels) in enumerate(zip(sentences, predicted)):
        spans = extract_spans(labels, IOBES, strict=False)
        fixed = Sentence(sent.tokens, tuple(write_labels(spans, len(sent), scheme)), scheme)
        out.append(fixed)
        for m in extract_entities(fixed):
            mentions.append(f"{idx}\t{m.entity_class}\t{m.start}\t{m.end}\t{' '.join(m.surface)}")
    with open(args.output, "w", encoding="utf-8") as fh:
        fh.write(format_column_corpus(out))
    if args.mentions:
        with open(args.mentions, "w", encoding="utf-8") as fh:
            fh.write("".join(line + "\n" for line in mentions))
    return 0


def _check_declared(model: BilateralModel, cfg: RunConfig) -> None:
    train = _read(cfg.train_path, cfg)
    words, chars = build_vocab(train, cfg.min_frequency)
    if words != model.words or chars != model.chars:
        raise CommandError("vocabulary of the checkpoint does not match the configured corpus")
    paths = [cfg.train_path, cfg.dev_path, cfg.test_path]
    classes = entity_classes(s for p in paths if p for s in _read(p, cfg))
    if tuple(iobes_labelset(classes)) != model.labelset:
        raise CommandError("labelset of the checkpoint does not match the configured corpus")
    declared = cfg.bilateral_config(model.labelset)
    if declared != model.config:
        raise CommandError("model architecture of the checkpoint differs from the config")


def cmd_evaluate(args) -> int:
    if args.gold is None or args.predicted is None:
        raise CommandError("gold and predicted files are required", status=2)
    gold = _read(args.gold, scheme=args.scheme)
    pred = _read(args.predicted, scheme=args.scheme, validate=False)
    try:
        report = score_entities(gold, [s.labels for s in pred], scheme=args.scheme)
    except ValueError as err:
        raise CommandError(str(err)) from err
    print(report.table())
    print("\n".join(report.lines()))
    return 0


def cmd_make_synthetic(args) -> int:
    if args.output is None:
        raise CommandError("--output is required", status=2)
    paths = write_synthetic_corpus(args.output, n_train=args.train, n_dev=args.dev,
                                   n_test=args.test, seed=args.seed or 0,
                                   overlap=args.overlap)
    for name, path in paths.items():
        print(f"{name}={path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    def global_flags(default):
        flags = argparse.ArgumentParser(add_help=False)
        flags.add_argument("--config", default=default, help="flat JSON run configuration")
        flags.add_argument("--seed", type=int, default=default)
        flags.add_argument("--output", default=default, help="output directory or file")
        return flags

    # flags are accepted before or after the subcommand; the subcommand
    # copies suppress their defaults so they do not clobber earlier values
    parser = argparse.ArgumentParser(prog="stackner", parents=[global_flags(None)])
    common = global_flags(argparse.SUPPRESS)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("augment", parents=[common])
    p.add_argument("input", nargs="?")
    p.add_argument("--mode", choices=["sca", "eca"])
    p.add_argument("--p", type=float)
    p.add_argument("--count", type=int)
    p.add_argument("--scheme", choices=SCHEMES, default=IOB2)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("predict", parents=[common])
    p.add_argument("input", nargs="?")
    p.add_argument("--checkpoint")
    p.add_argument("--mentions", help="also write class/span/surface per mention")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common])
    p.add_argument("gold", nargs="?")
    p.add_argument("predicted", nargs="?")
    p.add_argument("--scheme", choices=SCHEMES, default=IOB2)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("make-synthetic", parents=[common])
    p.add_argument("--train", type=int, default=500)
    p.add_argument("--dev", type=int, default=100)
    p.add_argument("--test", type=int, default=100)
    p.add_argument("--overlap", type=float, default=0.5)
    p.set_defaults(func=cmd_make_synthetic)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except CommandError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.status


if __name__ == "__main__":
    sys.exit(main())
