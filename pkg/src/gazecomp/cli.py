"""Command-line front end over the library pipeline.

Subcommands: preprocess-gaze, make-labels, stats, train, evaluate, predict,
gradcheck, selftest. Every subcommand is a thin shell over library
operations; all randomness flows from the configured seed. Exit status: 0
success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import zlib
from pathlib import Path

import numpy as np

from . import selftest as selftest_mod
from .autodiff import finite_difference_check
from .compression import (
    COMPRESSION_LABELS,
    KEEP,
    corpus_stats,
    keep_projection,
    label_corpus,
    parse_labeled_file,
    parse_parallel_file,
    write_labeled_corpus,
)
from .config import parse_config_file
from .conllio import write_labeled_file
from .datasets import load_training_setup, split_config_mapping
from .embeddings import random_embeddings
from .errors import ConfigError, DataFormatError, GazecompError, NumericError
from .evaluation import EvalReport, token_f1
from .gaze import build_word_gazes, export_gaze_corpus, parse_fixation_file, parse_sentences_file
from .model import (
    TASK_COMPRESSION,
    ArchitectureConfig,
    build_model,
    predict_compression,
    sentence_losses,
    train,
)
from .serialize import load_model, save_model

logger = logging.getLogger("gazecomp")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="gazecomp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="info-level logging")
    parser.add_argument("--quiet", action="store_true", help="errors only")
    parser.add_argument("--timestamps", action="store_true",
                        help="timestamp diagnostic log lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess-gaze",
                       help="fixation TSV -> per-reader gaze bin label files")
    p.add_argument("--fixations", required=True,
                   help="TSV: reader<TAB>sentence<TAB>word_index<TAB>duration_ms")
    p.add_argument("--sentences", required=True,
                   help="TSV: sentence_id<TAB>space-separated tokens")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--measure", choices=["first_pass", "regression", "both"],
                   default="both")

    p = sub.add_parser("make-labels", help="parallel pairs TSV -> KEEP/DEL corpus")
    p.add_argument("--pairs", required=True, help="TSV: source<TAB>compression")
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", help="write rejected pair diagnostics here")

    p = sub.add_parser("stats", help="labeled corpus -> corpus statistics")
    p.add_argument("--corpus", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--arch", choices=["baseline", "multitask", "cascaded"])
    p.add_argument("--gaze-measure", choices=["first_pass", "regression"])
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--out", help="model file path (default from config, else model.bin)")

    p = sub.add_parser("evaluate", help="score a model on a labeled corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--positive-class", default=KEEP, choices=list(COMPRESSION_LABELS))

    p = sub.add_parser("predict", help="label raw sentences and emit compressions")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True,
                   help="one whitespace-tokenized sentence per line; '-' for stdin")
    p.add_argument("--labels-out", help="also write a token<TAB>label corpus here")
    p.add_argument("--compressed-out", help="also write the surface compressions here")

    p = sub.add_parser("gradcheck",
                       help="finite-difference gradient check of a configured model")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-4)
    p.add_argument("--tokens", type=int, default=3, help="length of the probe sentence")

    sub.add_parser("selftest", help="run the bundled synthetic verification suite")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _setup_logging(args)
    handler = {
        "preprocess-gaze": cmd_preprocess_gaze,
        "make-labels": cmd_make_labels,
        "stats": cmd_stats,
        "train": cmd_train,
        "evaluate": cmd_evaluate,
        "predict": cmd_predict,
        "gradcheck": cmd_gradcheck,
        "selftest": cmd_selftest,
    }[args.command]
    try:
        return handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except NumericError as exc:
        logger.error("%s", exc)
        return EXIT_NUMERIC
    except (DataFormatError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except GazecompError as exc:
        logger.error("%s", exc)
        return EXIT_DATA


def _setup_logging(args) -> None:
    level = logging.WARNING
    if args.verbose:
        level = logging.INFO
    if args.quiet:
        level = logging.ERROR
    fmt = "%(levelname)s %(name)s: %(message)s"
    if args.timestamps:
        fmt = "%(asctime)s " + fmt
    logging.basicConfig(level=level, format=fmt, stream=sys.stderr, force=True)


def cmd_preprocess_gaze(args) -> int:
    sentences = parse_sentences_file(args.sentences)
    streams = parse_fixation_file(args.fixations)
    gazes, stats = build_word_gazes(streams, {k: len(v) for k, v in sentences.items()})
    measures = ("first_pass", "regression") if args.measure == "both" else (args.measure,)
    written = export_gaze_corpus(sentences, gazes, args.out_dir, measures=measures)
    for (reader, measure), st in sorted(stats.items()):
        logger.info("reader %s %s: mean=%.1f sd=%.1f over %d non-zero values",
                    reader, measure, st.mean, st.sd, st.count_nonzero)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_make_labels(args) -> int:
    pairs = parse_parallel_file(args.pairs)
    result = label_corpus(pairs)
    if not result.sentences:
        raise DataFormatError(f"{args.pairs}: every pair was rejected")
    write_labeled_corpus(args.out, result.sentences)
    for lineno, diag in result.rejected:
        print(f"{args.pairs}:{lineno}: {diag}", file=sys.stderr)
    if args.rejects:
        Path(args.rejects).write_text(
            "".join(f"{lineno}\t{diag}\n" for lineno, diag in result.rejected),
            encoding="utf-8",
        )
    print(f"labeled {len(result.sentences)} sentences "
          f"({len(result.rejected)} rejected) -> {args.out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    corpus = parse_labeled_file(args.corpus, allowed_labels=set(COMPRESSION_LABELS))
    stats = corpus_stats(corpus)
    print(f"sentences\t{stats.sentence_count}")
    print(f"mean_sentence_length\t{stats.mean_sentence_length:.2f}")
    print(f"type_token_ratio\t{stats.type_token_ratio:.4f}")
    print(f"deletion_rate\t{stats.deletion_rate:.4f}")
    return EXIT_OK


def _train_overrides(args) -> dict[str, str]:
    overrides = {}
    if args.arch:
        overrides["architecture"] = args.arch
    if args.gaze_measure:
        overrides["gaze_measure"] = args.gaze_measure
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.iterations is not None:
        overrides["iterations"] = str(args.iterations)
    if args.learning_rate is not None:
        overrides["learning_rate"] = repr(args.learning_rate)
    if args.out:
        overrides["out"] = args.out
    return overrides


def cmd_train(args) -> int:
    mapping = parse_config_file(args.config)
    mapping.update(_train_overrides(args))
    setup = load_training_setup(mapping)
    log = train(setup.model, setup.task_datasets, dev=setup.dev)
    model_path = save_model(setup.model, setup.out)
    setup.log.write_text(log.render(), encoding="utf-8")
    if log.best_params is not None:
        final = setup.model.snapshot()
        setup.model.restore(log.best_params)
        best_path = save_model(setup.model, Path(str(setup.out) + ".best"))
        setup.model.restore(final)
        print(f"model -> {model_path} (best dev epoch {log.best_epoch}: "
              f"f1={log.best_dev_f1:.4f} -> {best_path})")
    else:
        print(f"model -> {model_path}")
    print(f"log -> {setup.log}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    corpus = parse_labeled_file(args.corpus, task=TASK_COMPRESSION,
                                allowed_labels=set(COMPRESSION_LABELS))
    if not corpus:
        raise DataFormatError(f"{args.corpus}: empty corpus")
    gold = [s.labels[TASK_COMPRESSION] for s in corpus]
    pred = [predict_compression(model, s.tokens) for s in corpus]
    report = token_f1(gold, pred, positive_class=args.positive_class)
    other = token_f1(gold, pred,
                     positive_class=next(c for c in COMPRESSION_LABELS
                                         if c != args.positive_class))
    print(report.text(args.positive_class))
    print(f"other class f1: {other.f1:.4f}")
    print(EvalReport.MACHINE_HEADER)
    print(report.machine_line())
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if args.input == "-":
        lines = sys.stdin.read().splitlines()
    else:
        lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    labeled = []
    for lineno, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            logger.warning("input line %d is empty; skipped", lineno)
            continue
        labels = predict_compression(model, tokens)
        labeled.append((tokens, labels))
    from .compression import LabeledSentence

    surfaces = [
        " ".join(keep_projection(LabeledSentence(tokens, {TASK_COMPRESSION: labels})))
        for tokens, labels in labeled
    ]
    for (tokens, labels), surface in zip(labeled, surfaces):
        print("\t".join([" ".join(labels), surface]))
    if args.labels_out:
        write_labeled_file(args.labels_out, labeled)
    if args.compressed_out:
        Path(args.compressed_out).write_text(
            "".join(s + "\n" for s in surfaces), encoding="utf-8")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    mapping = parse_config_file(args.config)
    arch_map, _ = split_config_mapping(mapping)
    config = ArchitectureConfig.from_mapping(arch_map)
    if args.tokens < 1:
        raise _UsageError("--tokens must be >= 1")
    tokens = [f"v{i}" for i in range(12)]
    rng = np.random.default_rng([config.seed, zlib.crc32(b"gradcheck")])
    vocab, emb = random_embeddings(tokens, config.embedding_dim,
                                   np.random.default_rng(config.seed))
    model = build_model(config, vocab, emb, {"ccg": ["c0", "c1", "c2", "c3"]})
    # random parameter values keep every gradient coordinate well-excited,
    # where central differences retain relative precision
    for p in model.parameters():
        p.value[...] = rng.normal(0.0, 0.6, size=p.value.shape)
    probes = []
    for n_tokens in (args.tokens, args.tokens + 2):
        sent = [tokens[rng.integers(len(tokens))] for _ in range(n_tokens)]
        gold = {
            name: [spec.label_vocab[rng.integers(len(spec.label_vocab))] for _ in sent]
            for name, spec in sorted(model.tasks.items())
        }
        probes.append((sent, gold))

    def forward(tape):
        total = []
        for sent, gold in probes:
            losses = sentence_losses(model, tape, sent, gold)
            total.extend(losses[k] for k in sorted(losses))
        return tape.add_n(total)

    params = model.parameters()
    if not model.embeddings.trainable:
        # frozen embeddings sit outside the differentiable graph
        params = [p for p in params if p.name != model.embeddings.param.name]
    result = finite_difference_check(forward, params, args.epsilon)
    print(result.report() if args.verbose else
          f"max relative error: {result.max_rel_error:.3e}")
    if not result.max_rel_error < args.threshold:
        raise NumericError(
            f"gradient check failed: {result.max_rel_error:.3e} >= {args.threshold:.1e}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    ok = selftest_mod.run_selftest(print)
    if not ok:
        raise NumericError("self-test failed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
