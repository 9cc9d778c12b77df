"""Command line front end wiring the pipeline together for batch use.

Subcommands: clean, filter, build-vocab, train, evaluate, predict,
compress, benchmark.  Every command exits 0 on success, 2 on usage or
data errors, and 1 on internal faults.  Diagnostics go to standard
error; data and tables go to standard output.  The TTRNN_LOG
environment variable (quiet | info | debug) sets the diagnostic level.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .cells import KINDS
from .errors import ShapeMismatch, TtrnnError
from .metrics import MetricsReport
from .modelio import load_matrix_csv, load_model, save_model, save_ttmatrix
from .tensor import DenseTensor
from .textpipe import (
    build_vocab,
    clean_example,
    clean_tweet,
    encode,
    filter_by_sentiment_agreement,
    load_clean_jsonl,
    load_dataset,
    load_predictions,
    looks_like_clean_jsonl,
    tokenize,
    write_clean_jsonl,
)
from .training import (
    TrainConfig,
    benchmark_pair,
    drop_untokenizable,
    evaluate_model,
    model_probabilities,
    resolve_task,
    split_train_test,
    train,
)
from .ttcore import (
    ModeFactorization,
    choose_factorization,
    compression_ratio,
    param_count,
    reconstruct,
    tt_svd,
)

log = logging.getLogger("ttrnn")

_LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

_CELL_CHOICES = tuple(k.replace("_", "-") for k in KINDS)


# ---------------------------------------------------------------------------
# small shared pieces


def _comma_ints(text: str) -> tuple:
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            "expected comma-separated integers, got %r" % text
        )
    return parts


def _configure_logging() -> None:
    name = os.environ.get("TTRNN_LOG", "info").strip().lower()
    level = _LOG_LEVELS.get(name)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(logging.INFO if level is None else level)
    if level is None and name != "info":
        log.warning("unknown TTRNN_LOG value %r, using info", name)


def _load_examples(path: str, fmt: str | None = None):
    """Cleaned examples from either a cleaned JSONL file or a raw dataset."""
    if fmt is None and looks_like_clean_jsonl(path):
        examples = load_clean_jsonl(path)
        log.info("loaded %d cleaned records from %s", len(examples), path)
        return examples
    raws = load_dataset(path, fmt)
    log.info("loaded %d raw records from %s, cleaning", len(raws), path)
    return [clean_example(r) for r in raws]


def _print_report(labels, report: MetricsReport, stream=None) -> None:
    stream = sys.stdout if stream is None else stream
    name_w = max(len("class"), max(len(x) for x in labels))
    stream.write(
        "%-*s %10s %10s %10s\n" % (name_w, "class", "precision", "recall", "f1")
    )
    for i, name in enumerate(labels):
        stream.write(
            "%-*s %10.6f %10.6f %10.6f\n"
            % (name_w, name, report.precision[i], report.recall[i], report.f1[i])
        )
    stream.write("macro_f1 %.6f\n" % report.macro_f1)
    stream.write("micro_f1 %.6f\n" % report.micro_f1)
    stream.write("accuracy %.6f\n" % report.accuracy)
    if report.loss is not None:
        stream.write("loss %.6f\n" % report.loss)


def _config_from_args(args, **overrides) -> TrainConfig:
    kw = dict(
        hidden_dim=args.hidden,
        embed_dim=args.embed,
    )
    ranks = getattr(args, "tt_ranks", None)
    if ranks:
        if len(ranks) == 1:
            kw["tt_ranks"] = ranks[0]
        else:
            kw["tt_rank_vector"] = ranks
    if getattr(args, "tt_modes", None):
        kw["tt_out_modes"] = args.tt_modes
    if getattr(args, "tt_in_modes", None):
        kw["tt_in_modes"] = args.tt_in_modes
    kw.update(overrides)
    return TrainConfig(**kw)


# ---------------------------------------------------------------------------
# subcommands


def cmd_clean(args) -> int:
    raws = load_dataset(args.infile, args.format)
    cleaned = [clean_example(r) for r in raws]
    with open(args.out, "w", encoding="utf-8") as f:
        write_clean_jsonl(cleaned, f)
    empty = sum(1 for ex in cleaned if not ex.clean_text)
    if empty:
        log.info("%d records cleaned to empty text", empty)
    log.info("wrote %s", args.out)
    print("records in %d, records out %d" % (len(raws), len(cleaned)))
    return 0


def cmd_filter(args) -> int:
    examples = _load_examples(args.infile)
    predictions = load_predictions(args.predictions)
    kept = filter_by_sentiment_agreement(examples, predictions)
    neutral = sum(1 for ex in examples if predictions[ex.id] == "Neutral")
    mismatch = len(examples) - len(kept) - neutral
    with open(args.out, "w", encoding="utf-8") as f:
        write_clean_jsonl(kept, f)
    log.info("wrote %s", args.out)
    print("kept %d, dropped %d mismatch, %d neutral" % (len(kept), mismatch, neutral))
    return 0


def cmd_build_vocab(args) -> int:
    examples = _load_examples(args.infile)
    vocab = build_vocab(
        (ex.clean_text for ex in examples),
        min_count=args.min_count,
        max_size=args.max_size,
    )
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(vocab.to_dict(), f, sort_keys=True)
        f.write("\n")
    log.info("wrote %s", args.out)
    print("vocabulary size %d (including pad and unk)" % vocab.size)
    return 0


def cmd_train(args) -> int:
    examples = _load_examples(args.data)
    config = _config_from_args(
        args,
        epochs_max=args.epochs,
        early_stop_patience=args.patience,
        batch_size=args.batch,
        learning_rate=args.lr,
        optimizer=args.optimizer,
        seed=args.seed,
        split_fraction=args.split_fraction,
        max_len=args.max_len,
        min_count=args.min_count,
        max_vocab=args.max_vocab,
        candidate_bias=not args.no_candidate_bias,
        clip_norm=args.clip,
        timing=args.timing,
    )
    log_path = args.log if args.log is not None else args.out + ".log.jsonl"
    with open(log_path, "w", encoding="utf-8") as log_stream:
        bundle, records = train(
            config, examples, args.cell, task=args.task, log_stream=log_stream
        )
    save_model(bundle, args.out)
    footer = records[-1]
    log.info(
        "best epoch %s, val macro f1 %.6f, stopped after epoch %s",
        footer["best_epoch"],
        footer["best_val_macro_f1"],
        footer["stopped_epoch"],
    )
    log.info("model written to %s, log written to %s", args.out, log_path)
    print("test metrics")
    _print_report(bundle.labels, MetricsReport.from_dict(bundle.metrics["test"]))
    return 0


def cmd_evaluate(args) -> int:
    bundle = load_model(args.model)
    examples = _load_examples(args.data)
    _, label_of = resolve_task(bundle.task)
    label_id = {name: i for i, name in enumerate(bundle.labels)}
    usable, dropped = drop_untokenizable(examples)
    if dropped:
        log.info("dropped %d examples with no tokens", dropped)
    if args.split == "test":
        split = bundle.split or {}
        if "fraction" not in split or "seed" not in split:
            raise ShapeMismatch(
                "model records no train/test split; use --split all"
            )
        _, subset = split_train_test(
            usable, split["fraction"], split["seed"], key=label_of
        )
        log.info("evaluating the recorded test split: %d examples", len(subset))
    else:
        subset = usable
        log.info("evaluating all %d examples", len(subset))
    encoded = [
        encode(
            tokenize(ex.clean_text), bundle.vocab, bundle.max_len, label_id[label_of(ex)]
        )
        for ex in subset
    ]
    report = evaluate_model(bundle.spec, bundle.weights, encoded)
    _print_report(bundle.labels, report)
    return 0


def cmd_predict(args) -> int:
    bundle = load_model(args.model)
    text, _ = clean_tweet(args.text)
    encoded = encode(tokenize(text), bundle.vocab, bundle.max_len, 0)
    probs = model_probabilities(bundle.spec, bundle.weights, [encoded])[0]
    winner = int(np.argmax(probs))
    out = {
        "prediction": bundle.labels[winner],
        "probabilities": {
            name: float(probs[i]) for i, name in enumerate(bundle.labels)
        },
    }
    print(json.dumps(out))
    return 0


def _load_dense_matrix(path: str) -> DenseTensor:
    if path.endswith(".npy"):
        arr = np.load(path, allow_pickle=False)
        if arr.ndim != 2:
            raise ShapeMismatch("expected a 2-d matrix, got shape %r" % (arr.shape,))
        return DenseTensor(np.asarray(arr, dtype=np.float64))
    return load_matrix_csv(path)


def cmd_compress(args) -> int:
    w = _load_dense_matrix(args.matrix)
    rows, cols = w.shape
    if args.modes is not None and args.in_modes is not None:
        facto = ModeFactorization(args.modes, args.in_modes)
    elif args.modes is None and args.in_modes is None:
        facto = choose_factorization(rows, cols, 3)
        log.info(
            "auto factorization: out modes %s, in modes %s",
            list(facto.out_modes),
            list(facto.in_modes),
        )
    else:
        raise ShapeMismatch("give both --modes and --in-modes, or neither")
    max_ranks = None
    if args.ranks:
        if len(args.ranks) == 1:
            max_ranks = (1,) + (args.ranks[0],) * (facto.order - 1) + (1,)
        else:
            max_ranks = args.ranks
    tt = tt_svd(w, facto, max_ranks=max_ranks, eps=args.eps)
    save_ttmatrix(tt, args.out)
    log.info("wrote %s", args.out)
    recon = reconstruct(tt)
    denom = float(np.linalg.norm(w.array))
    err = float(np.linalg.norm(w.array - recon.array)) / denom if denom > 0 else 0.0
    print("params %d, ratio %.2f" % (param_count(tt), compression_ratio(tt)))
    print("ranks %s" % ",".join(str(r) for r in tt.ranks))
    print("reconstruction error %.6e" % err)
    return 0


def _parse_pairs(text: str):
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        left, sep, right = chunk.partition(":")
        if not sep or not left or not right:
            raise ShapeMismatch(
                "pair %r is not of the form dense:tensorized" % chunk
            )
        pairs.append((left.strip(), right.strip()))
    if not pairs:
        raise ShapeMismatch("no benchmark pairs given")
    for a, b in pairs:
        for kind in (a, b):
            if kind.replace("-", "_") not in KINDS:
                raise ShapeMismatch("unknown cell kind %r" % kind)
    return pairs


def cmd_benchmark(args) -> int:
    config = _config_from_args(args)
    rows = []
    for dense_kind, tensor_kind in _parse_pairs(args.pairs):
        log.info("timing %s vs %s", dense_kind, tensor_kind)
        rows.extend(
            benchmark_pair(dense_kind, tensor_kind, config, steps=args.steps, seed=args.seed)
        )
    headers = (
        "kind",
        "hidden",
        "embed",
        "input-map-params",
        "total-params",
        "macs/step",
        "step-us",
    )
    table = [
        (
            row["kind"],
            str(row["hidden"]),
            str(row["embed"]),
            str(row["input_map_params"]),
            str(row["total_params"]),
            str(row["macs_per_step"]),
            "%.1f" % (row["median_step_seconds"] * 1e6),
        )
        for row in rows
    ]
    widths = [
        max(len(headers[c]), max(len(line[c]) for line in table))
        for c in range(len(headers))
    ]
    def fmt(line):
        first = line[0].ljust(widths[0])
        rest = [line[c].rjust(widths[c]) for c in range(1, len(headers))]
        return "  ".join([first] + rest)
    print(fmt(headers))
    for line in table:
        print(fmt(line))
    if args.csv:
        fields = (
            "kind",
            "hidden",
            "embed",
            "gates",
            "input_map_params",
            "total_params",
            "macs_per_step",
            "median_step_seconds",
        )
        with open(args.csv, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row[k] for k in fields})
        log.info("wrote %s", args.csv)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttrnn",
        description="Tweet emotion classifiers with tensor-train compressed "
        "recurrent cells: data cleaning, training, evaluation and "
        "matrix compression tools.",
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker thread budget; execution is sequential and deterministic, "
        "values above 1 are accepted but do not change results (default: 1)",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser(
        "clean",
        help="normalize raw tweets into cleaned JSONL",
        description="Read a raw dataset (CSV or JSONL), apply the cleaning "
        "pipeline, and write cleaned records as JSONL.",
    )
    p.add_argument("--in", dest="infile", required=True, help="raw dataset path")
    p.add_argument("--out", required=True, help="cleaned JSONL output path")
    p.add_argument(
        "--format",
        choices=("csv", "jsonl"),
        default=None,
        help="input format; guessed from the file when omitted",
    )
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser(
        "filter",
        help="drop records whose external sentiment disagrees",
        description="Keep only records whose external sentiment prediction "
        "matches the label-derived sentiment; neutral predictions drop the "
        "record.",
    )
    p.add_argument("--in", dest="infile", required=True, help="dataset path (raw or cleaned)")
    p.add_argument(
        "--predictions", required=True, help="CSV of id,sentiment external calls"
    )
    p.add_argument("--out", required=True, help="cleaned JSONL output path")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser(
        "build-vocab",
        help="build a token vocabulary from a dataset",
        description="Count tokens over the cleaned texts and write the "
        "vocabulary as JSON.",
    )
    p.add_argument("--in", dest="infile", required=True, help="dataset path (raw or cleaned)")
    p.add_argument("--out", required=True, help="vocabulary JSON output path")
    p.add_argument(
        "--min-count", type=int, default=1, help="minimum token count (default: 1)"
    )
    p.add_argument(
        "--max-size",
        type=int,
        default=None,
        help="cap on total vocabulary size including pad and unk (default: none)",
    )
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser(
        "train",
        help="train a recurrent classifier",
        description="Clean (if raw), split, and train one cell kind; writes "
        "the model file, a JSONL training log, and prints test metrics.",
    )
    p.add_argument("--data", required=True, help="dataset path (raw or cleaned)")
    p.add_argument(
        "--cell", required=True, choices=_CELL_CHOICES, help="cell kind to train"
    )
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--hidden", type=int, default=64, help="hidden size (default: 64)")
    p.add_argument("--embed", type=int, default=64, help="embedding size (default: 64)")
    p.add_argument(
        "--tt-modes",
        type=_comma_ints,
        default=None,
        help="output mode sizes m1,m2,... for tensorized cells; their product "
        "must equal --hidden (default: automatic three-mode split)",
    )
    p.add_argument(
        "--tt-in-modes",
        type=_comma_ints,
        default=None,
        help="input mode sizes n1,n2,... for tensorized cells; their product "
        "must equal --embed (default: automatic three-mode split)",
    )
    p.add_argument(
        "--tt-ranks",
        type=_comma_ints,
        default=None,
        help="rank vector r0,r1,...,rd (boundary ranks 1), or a single number "
        "used for every interior rank (default: 4)",
    )
    p.add_argument(
        "--task",
        choices=("emotion", "sentiment"),
        default="emotion",
        help="label set to train on (default: emotion)",
    )
    p.add_argument("--epochs", type=int, default=450, help="epoch cap (default: 450)")
    p.add_argument(
        "--patience",
        type=int,
        default=10,
        help="early-stop patience in epochs, 0 disables (default: 10)",
    )
    p.add_argument("--batch", type=int, default=32, help="batch size (default: 32)")
    p.add_argument(
        "--lr", type=float, default=1e-3, help="learning rate (default: 0.001)"
    )
    p.add_argument(
        "--optimizer",
        choices=("adam", "sgd"),
        default="adam",
        help="update rule (default: adam)",
    )
    p.add_argument("--seed", type=int, default=0, help="master seed (default: 0)")
    p.add_argument(
        "--split-fraction",
        type=float,
        default=0.8,
        help="train fraction of the stratified split (default: 0.8)",
    )
    p.add_argument(
        "--max-len", type=int, default=40, help="token window length (default: 40)"
    )
    p.add_argument(
        "--min-count",
        type=int,
        default=1,
        help="minimum token count for the vocabulary (default: 1)",
    )
    p.add_argument(
        "--max-vocab",
        type=int,
        default=None,
        help="cap on total vocabulary size (default: none)",
    )
    p.add_argument(
        "--no-candidate-bias",
        action="store_true",
        help="drop the bias term inside the gated-update candidate",
    )
    p.add_argument(
        "--clip",
        type=float,
        default=None,
        help="gradient-norm clip threshold (default: off)",
    )
    p.add_argument(
        "--timing",
        action="store_true",
        help="record wall-clock seconds per epoch in the log (off keeps logs "
        "byte-identical across machines)",
    )
    p.add_argument(
        "--log",
        default=None,
        help="JSONL training log path (default: <out>.log.jsonl)",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser(
        "evaluate",
        help="evaluate a saved model on a dataset",
        description="Load a model, clean the data if raw, and print the "
        "metrics report.",
    )
    p.add_argument("--model", required=True, help="model file path")
    p.add_argument("--data", required=True, help="dataset path (raw or cleaned)")
    p.add_argument(
        "--split",
        choices=("test", "all"),
        default="test",
        help="'test' re-derives the train/test split recorded in the model; "
        "'all' scores every record (default: test)",
    )
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "predict",
        help="classify one text with a saved model",
        description="Clean and encode one text with the model's own "
        "vocabulary and print the predicted class with probabilities as JSON.",
    )
    p.add_argument("--model", required=True, help="model file path")
    p.add_argument("--text", required=True, help="raw text to classify")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser(
        "compress",
        help="compress a dense matrix into tensor-train form",
        description="Factor a dense matrix (CSV rows, or .npy) into a "
        "tensor-train matrix file and report size and accuracy.",
    )
    p.add_argument("--matrix", required=True, help="matrix path (.csv or .npy)")
    p.add_argument(
        "--modes",
        type=_comma_ints,
        default=None,
        help="output mode sizes m1,m2,...; product must equal the row count "
        "(default: automatic three-mode split)",
    )
    p.add_argument(
        "--in-modes",
        type=_comma_ints,
        default=None,
        help="input mode sizes n1,n2,...; product must equal the column count "
        "(default: automatic three-mode split)",
    )
    group = p.add_mutually_exclusive_group()
    group.add_argument(
        "--ranks",
        type=_comma_ints,
        default=None,
        help="rank cap vector r0,...,rd (boundary ranks 1), or a single "
        "number used for every interior rank (default: exact)",
    )
    group.add_argument(
        "--eps",
        type=float,
        default=None,
        help="relative reconstruction error budget (default: exact)",
    )
    p.add_argument("--out", required=True, help="tensor-train output path")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser(
        "benchmark",
        help="compare dense and tensorized cells",
        description="Time single cell steps and compare parameter counts and "
        "multiply-accumulate estimates for dense:tensorized pairs.",
    )
    p.add_argument(
        "--pairs",
        default="gru:t-gru",
        help="comma-separated dense:tensorized pairs (default: gru:t-gru)",
    )
    p.add_argument("--hidden", type=int, default=64, help="hidden size (default: 64)")
    p.add_argument("--embed", type=int, default=64, help="embedding size (default: 64)")
    p.add_argument(
        "--tt-modes",
        type=_comma_ints,
        default=None,
        help="output mode sizes for the tensorized side (default: automatic)",
    )
    p.add_argument(
        "--tt-in-modes",
        type=_comma_ints,
        default=None,
        help="input mode sizes for the tensorized side (default: automatic)",
    )
    p.add_argument(
        "--tt-ranks",
        type=_comma_ints,
        default=None,
        help="rank vector, or a single interior rank (default: 4)",
    )
    p.add_argument(
        "--steps", type=int, default=200, help="timed steps per cell (default: 200)"
    )
    p.add_argument("--seed", type=int, default=0, help="weight seed (default: 0)")
    p.add_argument(
        "--csv", default=None, help="also write the table as CSV to this path"
    )
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging()
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    if args.threads != 1:
        log.info(
            "--threads %d noted; execution stays sequential so results are "
            "reproducible",
            args.threads,
        )
    try:
        return args.func(args)
    except TtrnnError as e:
        log.error("%s: %s", type(e).__name__, e)
        return 2
    except OSError as e:
        log.error("%s", e)
        return 2
    except Exception:
        log.exception("internal error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
