"""Training loop, optimizers, stratified splitting and model evaluation.

The loop is single-threaded and fully seeded: example shuffles, weight
initialization and the train/validation/test splits all derive from the
config seed through named sub-seeds, so a config run twice produces
byte-identical logs and model files.  Wall-clock numbers are recorded
only when timing is switched on, precisely so that logs stay comparable.

Early stopping watches validation macro-F1: the counter resets whenever
the score improves on the best seen by at least 1e-4 and trips after
`early_stop_patience` flat epochs (0 disables stopping).  Whatever epoch
scored the highest validation macro-F1 is the checkpoint returned.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import cells as cells_mod
from . import rng
from .autodiff import Tape, Variable
from .cells import CellSpec, CellWeights, init_weights, run_sequence, weight_templates
from .errors import ClassTooSmall, EmptyTestSet, ShapeMismatch
from .metrics import MetricsReport, evaluate as evaluate_metrics
from .modelio import ModelBundle
from .tensor import _wrap
from .textpipe import EMOTIONS, SENTIMENTS, EncodedExample, build_vocab, encode, tokenize
from .ttcore import choose_factorization, tt_matvec_macs

_EVAL_BATCH = 64  # fixed so stored metrics reproduce regardless of train batch size


@dataclass
class TrainConfig:
    epochs_max: int = 450
    early_stop_patience: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    seed: int = 0
    split_fraction: float = 0.8
    tt_ranks: int = 4  # interior rank used when no explicit rank vector is given
    hidden_dim: int = 64
    embed_dim: int = 64
    max_len: int = 40
    tt_out_modes: tuple | None = None
    tt_in_modes: tuple | None = None
    tt_rank_vector: tuple | None = None
    min_count: int = 1
    max_vocab: int | None = None
    candidate_bias: bool = True
    clip_norm: float | None = None
    timing: bool = False

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise ShapeMismatch("split_fraction must be in (0, 1)")
        for name in ("epochs_max", "batch_size", "hidden_dim", "embed_dim", "max_len", "tt_ranks", "min_count"):
            if int(getattr(self, name)) < 1:
                raise ShapeMismatch("%s must be positive" % name)
        if self.early_stop_patience < 0:
            raise ShapeMismatch("early_stop_patience must be >= 0")
        if self.learning_rate <= 0:
            raise ShapeMismatch("learning_rate must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ShapeMismatch("optimizer must be sgd or adam")

    def to_dict(self) -> dict:
        return {
            "epochs_max": self.epochs_max,
            "early_stop_patience": self.early_stop_patience,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "seed": self.seed,
            "split_fraction": self.split_fraction,
            "tt_ranks": self.tt_ranks,
            "hidden_dim": self.hidden_dim,
            "embed_dim": self.embed_dim,
            "max_len": self.max_len,
            "tt_out_modes": list(self.tt_out_modes) if self.tt_out_modes else None,
            "tt_in_modes": list(self.tt_in_modes) if self.tt_in_modes else None,
            "tt_rank_vector": list(self.tt_rank_vector) if self.tt_rank_vector else None,
            "min_count": self.min_count,
            "max_vocab": self.max_vocab,
            "candidate_bias": self.candidate_bias,
            "clip_norm": self.clip_norm,
        }


# ---------------------------------------------------------------------------
# splitting


def _class_of(example):
    if hasattr(example, "class_id"):
        return example.class_id
    if hasattr(example, "emotion_label"):
        return example.emotion_label
    raise ShapeMismatch("cannot find a class on %r" % (example,))


def split_train_test(examples, fraction: float, seed: int, key=None):
    """Stratified, seeded, exact partition into (train, test).

    Per-class train counts follow the largest-remainder rule against the
    global target round(fraction * n), then are clamped so every class
    keeps at least one example on each side.  Output lists preserve the
    input order.
    """
    examples = list(examples)
    if len(examples) < 2:
        raise ClassTooSmall("need at least 2 examples to split")
    if not 0.0 < fraction < 1.0:
        raise ShapeMismatch("fraction must be in (0, 1)")
    key = key or _class_of
    by_class: dict = {}
    for i, ex in enumerate(examples):
        by_class.setdefault(key(ex), []).append(i)
    classes = sorted(by_class, key=str)
    for c in classes:
        if len(by_class[c]) < 2:
            raise ClassTooSmall(
                "class %r has only %d example(s); need at least 2" % (c, len(by_class[c]))
            )

    total_target = math.floor(fraction * len(examples) + 0.5)
    base = {c: math.floor(fraction * len(by_class[c])) for c in classes}
    remainders = sorted(
        classes,
        key=lambda c: (-(fraction * len(by_class[c]) - base[c]), str(c)),
    )
    leftover = total_target - sum(base.values())
    take = dict(base)
    i = 0
    while leftover > 0 and i < 10 * len(classes):
        c = remainders[i % len(classes)]
        if take[c] < len(by_class[c]) - 1:
            take[c] += 1
            leftover -= 1
        i += 1
    for c in classes:
        take[c] = min(max(take[c], 1), len(by_class[c]) - 1)

    train_idx = set()
    for c in classes:
        members = by_class[c]
        perm = rng.permutation(rng.split(seed, "split", str(c)), len(members))
        train_idx.update(members[j] for j in perm[: take[c]])
    train = [ex for i, ex in enumerate(examples) if i in train_idx]
    test = [ex for i, ex in enumerate(examples) if i not in train_idx]
    return train, test


# ---------------------------------------------------------------------------
# optimizers


def sgd_step(variables, lr: float):
    for v in variables:
        if v.grad is not None:
            v.value = _wrap(v.value.array - lr * v.grad)


def adam_step(
    variables,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    t: int = 1,
    state: dict | None = None,
) -> dict:
    """Standard bias-corrected update; returns the moment state for reuse.

    The state maps variable identity to its running first and second
    moments, so pass the same variable objects (and the incremented t)
    on every call.
    """
    if t < 1:
        raise ShapeMismatch("adam step index t starts at 1")
    if state is None:
        state = {}
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for v in variables:
        g = v.grad
        if g is None:
            continue
        m, s = state.get(id(v), (0.0, 0.0))
        m = beta1 * m + (1.0 - beta1) * g
        s = beta2 * s + (1.0 - beta2) * g * g
        state[id(v)] = (m, s)
        v.value = _wrap(v.value.array - lr * (m / c1) / (np.sqrt(s / c2) + eps))
    return state


def clip_gradients(variables, max_norm: float):
    """Scale all gradients down to a global L2 norm of max_norm."""
    total = 0.0
    for v in variables:
        if v.grad is not None:
            total += float(np.sum(v.grad * v.grad))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        factor = max_norm / norm
        for v in variables:
            if v.grad is not None:
                v.grad = v.grad * factor
    return norm


# ---------------------------------------------------------------------------
# model plumbing


def build_cell_spec(kind: str, vocab_size: int, config: TrainConfig, num_classes: int) -> CellSpec:
    kind = kind.replace("-", "_")
    if kind not in cells_mod.KINDS:
        raise ShapeMismatch("unknown cell kind %r" % (kind,))
    if kind not in cells_mod.TENSORIZED:
        return CellSpec(kind, vocab_size, config.embed_dim, config.hidden_dim, num_classes)
    if config.tt_out_modes is None and config.tt_in_modes is None:
        facto = choose_factorization(config.hidden_dim, config.embed_dim, 3)
        out_modes, in_modes = facto.out_modes, facto.in_modes
    elif config.tt_out_modes is None or config.tt_in_modes is None:
        raise ShapeMismatch("give both tt output and input modes, or neither")
    else:
        out_modes = tuple(config.tt_out_modes)
        in_modes = tuple(config.tt_in_modes)
    prod_out = int(np.prod(out_modes, dtype=np.int64))
    prod_in = int(np.prod(in_modes, dtype=np.int64))
    if prod_out != config.hidden_dim:
        raise ShapeMismatch(
            "tt output modes multiply to %d but hidden size is %d"
            % (prod_out, config.hidden_dim)
        )
    if prod_in != config.embed_dim:
        raise ShapeMismatch(
            "tt input modes multiply to %d but embedding size is %d"
            % (prod_in, config.embed_dim)
        )
    if config.tt_rank_vector is not None:
        ranks = tuple(config.tt_rank_vector)
    else:
        ranks = (1,) + (config.tt_ranks,) * (len(out_modes) - 1) + (1,)
    return CellSpec(
        kind,
        vocab_size,
        config.embed_dim,
        config.hidden_dim,
        num_classes,
        tt_out_modes=out_modes,
        tt_in_modes=in_modes,
        tt_ranks=ranks,
        candidate_bias=config.candidate_bias,
    )


def param_counts(spec: CellSpec) -> dict:
    total = 0
    input_maps = 0
    for name, shape in weight_templates(spec):
        n = int(np.prod(shape, dtype=np.int64))
        total += n
        if name.startswith("w"):
            input_maps += n
    return {"total": total, "input_maps": input_maps}


def _batch_arrays(encoded):
    ids = np.array([e.token_ids for e in encoded], dtype=np.int64)
    mask = np.array([e.mask for e in encoded], dtype=np.float64)
    labels = np.array([e.class_id for e in encoded], dtype=np.int64)
    return ids, mask, labels


def model_probabilities(spec: CellSpec, weights: CellWeights, encoded, batch_size: int = _EVAL_BATCH):
    """Class probabilities for a list of encoded examples, batch by batch."""
    chunks = []
    for start in range(0, len(encoded), batch_size):
        part = encoded[start : start + batch_size]
        ids, mask, _ = _batch_arrays(part)
        probs = run_sequence(Tape(), spec, weights, ids, mask=mask)
        chunks.append(probs.value.array)
    return np.concatenate(chunks, axis=0)


def evaluate_model(spec: CellSpec, weights: CellWeights, encoded) -> MetricsReport:
    if not encoded:
        raise EmptyTestSet("no examples to evaluate")
    probs = model_probabilities(spec, weights, encoded)
    labels = np.array([e.class_id for e in encoded], dtype=np.int64)
    preds = np.argmax(probs, axis=1)
    picked = probs[np.arange(len(encoded)), labels] + 1e-12
    loss = float(-np.log(picked).mean())
    return evaluate_metrics(labels, preds, spec.num_classes, loss=loss)


# ---------------------------------------------------------------------------
# dataset preparation


@dataclass
class PreparedData:
    labels: tuple  # class names in id order
    vocab: object
    train: list = field(default_factory=list)  # EncodedExample
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    dropped_empty: int = 0


def resolve_task(task: str):
    """Class-name tuple and label extractor for a classification task."""
    if task == "emotion":
        return EMOTIONS, lambda ex: ex.emotion_label
    if task == "sentiment":
        return SENTIMENTS, lambda ex: ex.sentiment_label
    raise ShapeMismatch("task must be emotion or sentiment")


def drop_untokenizable(clean_examples):
    """Partition off examples whose cleaned text has no tokens at all."""
    usable = []
    dropped = 0
    for ex in clean_examples:
        if tokenize(ex.clean_text):
            usable.append(ex)
        else:
            dropped += 1
    return usable, dropped


def prepare_dataset(clean_examples, config: TrainConfig, task: str = "emotion") -> PreparedData:
    """Split cleaned examples, build the vocabulary on train only, encode.

    The validation slice is 10% of train, stratified, carved with a
    sub-seed so it is independent of the train/test draw.
    """
    labels, label_of = resolve_task(task)
    label_id = {name: i for i, name in enumerate(labels)}

    usable, dropped = drop_untokenizable(clean_examples)

    train_ex, test_ex = split_train_test(
        usable, config.split_fraction, config.seed, key=label_of
    )
    vocab = build_vocab(
        (ex.clean_text for ex in train_ex),
        min_count=config.min_count,
        max_size=config.max_vocab,
    )

    def encode_all(examples):
        return [
            encode(
                tokenize(ex.clean_text), vocab, config.max_len, label_id[label_of(ex)]
            )
            for ex in examples
        ]

    train_enc = encode_all(train_ex)
    test_enc = encode_all(test_ex)
    core, val = split_train_test(
        train_enc, 0.9, rng.split(config.seed, "val"), key=lambda e: e.class_id
    )
    return PreparedData(
        labels=labels,
        vocab=vocab,
        train=core,
        val=val,
        test=test_enc,
        dropped_empty=dropped,
    )


# ---------------------------------------------------------------------------
# the training loop


def train(
    config: TrainConfig,
    clean_examples,
    kind: str,
    task: str = "emotion",
    log_stream=None,
):
    """Train one cell on cleaned examples.  Returns (ModelBundle, log records).

    Every record written to log_stream (JSONL) is also returned: a header
    with the resolved configuration, one line per epoch, and a footer with
    the chosen checkpoint and test metrics.
    """
    data = prepare_dataset(clean_examples, config, task=task)
    spec = build_cell_spec(kind, data.vocab.size, config, len(data.labels))
    weights = init_weights(spec, rng.split(config.seed, "init"))
    params = weights.params()
    counts = param_counts(spec)

    records = []

    def emit(record):
        records.append(record)
        if log_stream is not None:
            log_stream.write(json.dumps(record, sort_keys=True) + "\n")

    emit(
        {
            "cell": spec.to_dict(),
            "config": config.to_dict(),
            "counts": {
                "train": len(data.train),
                "val": len(data.val),
                "test": len(data.test),
                "dropped_empty": data.dropped_empty,
            },
            "labels": list(data.labels),
            "params": counts,
            "task": task,
            "vocab_size": data.vocab.size,
        }
    )

    adam_state: dict = {}
    step_index = 0
    best_macro = -1.0
    best_epoch = 0
    best_snapshot = {n: v.value for n, v in weights.values.items()}
    patience_ref = -math.inf
    flat_epochs = 0
    stopped_epoch = config.epochs_max

    n_train = len(data.train)
    for epoch in range(1, config.epochs_max + 1):
        tick = time.perf_counter()
        order = rng.permutation(rng.split(config.seed, "epoch", epoch), n_train)
        loss_sum = 0.0
        for start in range(0, n_train, config.batch_size):
            batch = [data.train[i] for i in order[start : start + config.batch_size]]
            ids, mask, labels = _batch_arrays(batch)
            tape = Tape()
            probs = run_sequence(tape, spec, weights, ids, mask=mask)
            loss = ad.cross_entropy_mean(tape, probs, labels)
            ad.backward(tape, loss)
            if config.clip_norm is not None:
                clip_gradients(params, config.clip_norm)
            if config.optimizer == "adam":
                step_index += 1
                adam_state = adam_step(
                    params, config.learning_rate, t=step_index, state=adam_state
                )
            else:
                sgd_step(params, config.learning_rate)
            ad.zero_grads(params)
            loss_sum += float(loss.value.array) * len(batch)

        val_report = evaluate_model(spec, weights, data.val)
        seconds = time.perf_counter() - tick if config.timing else 0.0
        emit(
            {
                "epoch": epoch,
                "loss": loss_sum / n_train,
                "params": counts,
                "seconds": seconds,
                "val": val_report.to_dict(),
            }
        )

        if val_report.macro_f1 > best_macro:
            best_macro = val_report.macro_f1
            best_epoch = epoch
            best_snapshot = {n: v.value for n, v in weights.values.items()}
        if val_report.macro_f1 >= patience_ref + 1e-4:
            patience_ref = val_report.macro_f1
            flat_epochs = 0
        else:
            flat_epochs += 1
        if config.early_stop_patience > 0 and flat_epochs >= config.early_stop_patience:
            stopped_epoch = epoch
            break
        stopped_epoch = epoch

    restored = CellWeights(spec, {n: Variable(t) for n, t in best_snapshot.items()})
    test_report = evaluate_model(spec, restored, data.test)
    emit(
        {
            "best_epoch": best_epoch,
            "best_val_macro_f1": best_macro,
            "stopped_epoch": stopped_epoch,
            "test": test_report.to_dict(),
        }
    )

    bundle = ModelBundle(
        spec=spec,
        weights=restored,
        vocab=data.vocab,
        task=task,
        labels=data.labels,
        max_len=config.max_len,
        train_config=config.to_dict(),
        metrics={"test": test_report.to_dict()},
        split={"fraction": config.split_fraction, "seed": config.seed},
    )
    return bundle, records


# ---------------------------------------------------------------------------
# benchmark


def benchmark_pair(dense_kind: str, tensor_kind: str, config: TrainConfig, steps: int = 1000, seed: int = 0):
    """Measure one dense/tensorized pair.  Returns one row dict per kind.

    Parameter counts are exact; the multiply-accumulate estimate covers
    the input maps (H*E per gate dense, the contraction formula for TT);
    wall time is the median over `steps` single cell steps after warmup.
    """
    rows = []
    for kind in (dense_kind, tensor_kind):
        spec = build_cell_spec(kind, 2, config, 2)
        weights = init_weights(spec, seed)
        gates = len(spec.gates)
        if spec.tensorized:
            macs = gates * tt_matvec_macs(spec.facto, spec.tt_ranks)
            input_params = sum(
                int(np.prod(s)) for n, s in weight_templates(spec) if ".core" in n
            )
        else:
            macs = gates * spec.hidden_dim * spec.embed_dim
            input_params = gates * spec.hidden_dim * spec.embed_dim
        x = Variable(_wrap(rng.normal(rng.split(seed, "bench-x"), spec.embed_dim)))
        state = cells_mod.init_state(spec)
        for _ in range(50):  # warmup
            cells_mod.step(Tape(), spec, weights, x, state)
        times = []
        for _ in range(max(steps, 1)):
            t0 = time.perf_counter()
            cells_mod.step(Tape(), spec, weights, x, state)
            times.append(time.perf_counter() - t0)
        rows.append(
            {
                "kind": kind,
                "hidden": spec.hidden_dim,
                "embed": spec.embed_dim,
                "gates": gates,
                "input_map_params": input_params,
                "total_params": param_counts(spec)["total"],
                "macs_per_step": macs,
                "median_step_seconds": float(np.median(times)),
            }
        )
    return rows
