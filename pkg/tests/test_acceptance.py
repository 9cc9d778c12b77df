"""Release gate: ten checks, one test per criterion.

Each test is numbered and self-contained, asserts the stated tolerance,
and enforces its own runtime budget where one applies.  Run with -v to get
a single pass/fail line per criterion.
"""

import json
import os
import time

import numpy as np
import pytest

from conftest import data_path, run_cli

import ttrnn.autodiff as ad
from ttrnn.autodiff import Tape, Variable
from ttrnn.cells import (
    CellSpec,
    CellWeights,
    init_state,
    init_weights,
    run_sequence,
    step,
    weight_templates,
)
from ttrnn.metrics import evaluate, f1
from ttrnn.modelio import load_model, save_model
from ttrnn.synth import make_dataset
from ttrnn.tensor import DenseTensor
from ttrnn.textpipe import (
    clean_example,
    encode,
    load_dataset,
    tokenize,
    write_clean_jsonl,
)
from ttrnn.training import (
    TrainConfig,
    drop_untokenizable,
    evaluate_model,
    param_counts,
    resolve_task,
    split_train_test,
    train,
)
from ttrnn.ttcore import (
    ModeFactorization,
    random_tt,
    reconstruct,
    tt_matvec,
    tt_svd,
)

MODE_CHOICES = (2, 3, 4)


def _random_factorization(gen, order):
    out = tuple(int(gen.choice(MODE_CHOICES)) for _ in range(order))
    inn = tuple(int(gen.choice(MODE_CHOICES)) for _ in range(order))
    return ModeFactorization(out, inn)


def test_criterion_01_tt_svd_round_trip_is_exact():
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(50):
        gen = np.random.default_rng(1000 + case)
        order = case % 3 + 1
        facto = _random_factorization(gen, order)
        w = gen.standard_normal((facto.rows, facto.cols))
        tt = tt_svd(DenseTensor(w), facto)
        recon = reconstruct(tt).array
        rel = float(np.linalg.norm(recon - w) / np.linalg.norm(w))
        worst = max(worst, rel)
        assert rel <= 1e-10, "case %d: relative error %.3e" % (case, rel)
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print("criterion 1: pass (worst rel err %.3e, %.1f s)" % (worst, elapsed))


def test_criterion_02_tt_matvec_matches_dense_multiply():
    t0 = time.perf_counter()
    worst = 0.0
    for case in range(200):
        gen = np.random.default_rng(2000 + case)
        order = case % 3 + 1
        facto = _random_factorization(gen, order)
        ranks = (1,) + tuple(int(gen.integers(1, 4)) for _ in range(order - 1)) + (1,)
        tt = random_tt(facto, ranks, seed=case)
        x = gen.standard_normal(facto.cols)
        via_tt = tt_matvec(tt, DenseTensor(x)).array
        via_dense = reconstruct(tt).array @ x
        denom = float(np.linalg.norm(via_dense))
        rel = float(np.linalg.norm(via_tt - via_dense)) / max(denom, 1e-300)
        worst = max(worst, rel)
        assert rel <= 1e-10, "case %d: relative error %.3e" % (case, rel)
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print("criterion 2: pass (worst rel err %.3e, %.1f s)" % (worst, elapsed))


def _dense_spec(kind, vocab=12, dims=8, classes=3):
    return CellSpec(
        kind=kind,
        vocab_size=vocab,
        embed_dim=dims,
        hidden_dim=dims,
        num_classes=classes,
    )


def _tensorize_from_dense(dense_spec, dense_weights, tensor_kind):
    """Build a tensorized cell whose input maps are exact TT forms of the
    dense cell's weight matrices; every other tensor is shared."""
    facto = ModeFactorization((2, 2, 2), (2, 2, 2))
    values = {}
    realized = None
    for gate in dense_spec.gates:
        wname = "w" if gate == "" else "w_%s" % gate
        tt = tt_svd(dense_weights[wname].value, facto)
        realized = tt.ranks
        for k, core in enumerate(tt.cores):
            values["%s.core%d" % (wname, k)] = Variable(core)
    spec = CellSpec(
        kind=tensor_kind,
        vocab_size=dense_spec.vocab_size,
        embed_dim=dense_spec.embed_dim,
        hidden_dim=dense_spec.hidden_dim,
        num_classes=dense_spec.num_classes,
        tt_out_modes=(2, 2, 2),
        tt_in_modes=(2, 2, 2),
        tt_ranks=realized,
        candidate_bias=dense_spec.candidate_bias,
    )
    for name, _ in weight_templates(spec):
        if name not in values:
            values[name] = Variable(dense_weights[name].value)
    return spec, CellWeights(spec, values)


def test_criterion_03_full_rank_twins_track_dense_hidden_states():
    t0 = time.perf_counter()
    worst = 0.0
    for dense_kind, tensor_kind in (
        ("elman", "t_rnn"),
        ("gru", "t_gru"),
        ("lstm", "t_lstm"),
    ):
        d_spec = _dense_spec(dense_kind)
        d_weights = init_weights(d_spec, seed=6)
        t_spec, t_weights = _tensorize_from_dense(d_spec, d_weights, tensor_kind)
        gen = np.random.default_rng(30)
        ids = gen.integers(0, d_spec.vocab_size, size=100)
        tape = Tape()
        s_d = init_state(d_spec)
        s_t = init_state(t_spec)
        for token in ids:
            x_d = ad.embed(tape, d_weights["embedding"], int(token))
            x_t = ad.embed(tape, t_weights["embedding"], int(token))
            s_d, _ = step(tape, d_spec, d_weights, x_d, s_d)
            s_t, _ = step(tape, t_spec, t_weights, x_t, s_t)
            gap = float(np.max(np.abs(s_d.h.value.array - s_t.h.value.array)))
            worst = max(worst, gap)
            assert gap <= 1e-8, "%s vs %s drifted to %.3e" % (
                dense_kind,
                tensor_kind,
                gap,
            )
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    print("criterion 3: pass (worst state gap %.3e, %.1f s)" % (worst, elapsed))


ALL_KINDS = ("elman", "jordan", "lstm", "gru", "t_rnn", "t_lstm", "t_gru")


def _spec_for_kind(kind, vocab=10, dims=8, classes=3):
    tensorized = kind.startswith("t_")
    return CellSpec(
        kind=kind,
        vocab_size=vocab,
        embed_dim=dims,
        hidden_dim=dims,
        num_classes=classes,
        tt_out_modes=(2, 2, 2) if tensorized else None,
        tt_in_modes=(2, 2, 2) if tensorized else None,
        tt_ranks=(1, 2, 2, 1) if tensorized else None,
    )


def test_criterion_04_every_parameter_gradient_matches_finite_differences():
    t0 = time.perf_counter()
    h = 1e-6
    worst = 0.0
    gen = np.random.default_rng(4)
    ids = gen.integers(0, 10, size=(3, 4))
    labels = np.array([0, 2, 1], dtype=np.int64)

    for kind in ALL_KINDS:
        spec = _spec_for_kind(kind)
        weights = init_weights(spec, seed=11)
        params = weights.params()

        def loss_value(ws):
            tape = Tape()
            probs = run_sequence(tape, spec, ws, ids)
            return float(ad.cross_entropy_mean(tape, probs, labels).value.array)

        tape = Tape()
        probs = run_sequence(tape, spec, weights, ids)
        loss = ad.cross_entropy_mean(tape, probs, labels)
        ad.zero_grads(params)
        ad.backward(tape, loss)
        grads = {
            name: np.zeros(var.value.shape) if var.grad is None else np.array(var.grad)
            for name, var in weights.values.items()
        }

        for name, var in weights.values.items():
            shape = var.value.shape
            base = var.value.array.reshape(-1)
            flat_grad = grads[name].reshape(-1)
            for i in range(base.size):
                probed = {}
                for sign in (1.0, -1.0):
                    probe = base.copy()
                    probe[i] += sign * h
                    values = dict(weights.values)
                    values[name] = Variable(DenseTensor(probe.reshape(shape)))
                    probed[sign] = loss_value(CellWeights(spec, values))
                fd = (probed[1.0] - probed[-1.0]) / (2.0 * h)
                a = float(flat_grad[i])
                rel = abs(a - fd) / max(abs(a), abs(fd), 1e-5)
                worst = max(worst, rel)
                assert rel <= 1e-4, "%s %s[%d]: analytic %.6e vs fd %.6e" % (
                    kind,
                    name,
                    i,
                    a,
                    fd,
                )
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    print("criterion 4: pass (worst rel err %.3e, %.1f s)" % (worst, elapsed))


def test_criterion_05_parameter_reduction_at_full_scale():
    per_gate_dense = 256 * 256
    per_gate_tt = 4 * 4 * 1 * 4 + 8 * 8 * 4 * 4 + 8 * 8 * 4 * 1
    assert per_gate_tt == 1344
    assert per_gate_dense == 65536
    for dense_kind, tensor_kind in (
        ("elman", "t_rnn"),
        ("lstm", "t_lstm"),
        ("gru", "t_gru"),
    ):
        t_spec = CellSpec(
            kind=tensor_kind,
            vocab_size=2,
            embed_dim=256,
            hidden_dim=256,
            num_classes=6,
            tt_out_modes=(4, 8, 8),
            tt_in_modes=(4, 8, 8),
            tt_ranks=(1, 4, 4, 1),
        )
        d_spec = CellSpec(
            kind=dense_kind,
            vocab_size=2,
            embed_dim=256,
            hidden_dim=256,
            num_classes=6,
        )
        gates = len(t_spec.gates)
        t_input = param_counts(t_spec)["input_maps"]
        d_input = param_counts(d_spec)["input_maps"]
        assert t_input == 1344 * gates
        assert d_input == 65536 * gates
        assert t_input * 40 <= d_input
    ratio = per_gate_dense / per_gate_tt
    print("criterion 5: pass (1344 vs 65536 per gate, ratio %.2f)" % ratio)


def test_criterion_06_tensorized_accuracy_tracks_dense_on_synthetic_corpus():
    t0 = time.perf_counter()
    corpus = [clean_example(r) for r in make_dataset(3000)]
    scores = {}
    for kind in ("t_lstm", "lstm", "t_gru", "gru"):
        tensorized = kind.startswith("t_")
        config = TrainConfig(
            epochs_max=30,
            early_stop_patience=5,
            batch_size=32,
            learning_rate=1e-3,
            optimizer="adam",
            seed=7,
            hidden_dim=32,
            embed_dim=32,
            max_len=12,
            tt_out_modes=(4, 4, 2) if tensorized else None,
            tt_in_modes=(4, 4, 2) if tensorized else None,
            tt_ranks=4,
        )
        bundle, _ = train(config, corpus, kind)
        scores[kind] = bundle.metrics["test"]["macro_f1"]
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0
    assert scores["t_lstm"] > 0.90, "t_lstm macro-F1 %.4f" % scores["t_lstm"]
    assert scores["t_gru"] > 0.90, "t_gru macro-F1 %.4f" % scores["t_gru"]
    assert abs(scores["t_lstm"] - scores["lstm"]) <= 0.03, scores
    assert abs(scores["t_gru"] - scores["gru"]) <= 0.03, scores
    print(
        "criterion 6: pass (t_lstm %.4f vs lstm %.4f, t_gru %.4f vs gru %.4f, %.0f s)"
        % (scores["t_lstm"], scores["lstm"], scores["t_gru"], scores["gru"], elapsed)
    )


def _oracle(y_true, y_pred, num_classes):
    from fractions import Fraction

    per = {"precision": [], "recall": [], "f1": []}
    tp_all = fp_all = fn_all = 0
    for c in range(num_classes):
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        tp_all += tp
        fp_all += fp
        fn_all += fn
        per["precision"].append(Fraction(tp, tp + fp) if tp + fp else Fraction(0))
        per["recall"].append(Fraction(tp, tp + fn) if tp + fn else Fraction(0))
        per["f1"].append(
            Fraction(2 * tp, 2 * tp + fp + fn) if 2 * tp + fp + fn else Fraction(0)
        )
    macro = sum(per["f1"], 0) / num_classes
    pooled = 2 * tp_all + fp_all + fn_all
    micro = Fraction(2 * tp_all, pooled) if pooled else Fraction(0)
    acc = Fraction(tp_all, len(y_true))
    return per, float(macro), float(micro), float(acc)


def test_criterion_07_metrics_match_a_counting_oracle_exactly():
    for case in range(1000):
        gen = np.random.default_rng(7000 + case)
        classes = int(gen.integers(1, 7))
        n = int(gen.integers(1, 40))
        y_true = gen.integers(0, classes, size=n)
        y_pred = gen.integers(0, classes, size=n)
        report = evaluate(y_true, y_pred, classes)
        per, macro, micro, acc = _oracle(list(y_true), list(y_pred), classes)
        assert report.precision == tuple(float(x) for x in per["precision"])
        assert report.recall == tuple(float(x) for x in per["recall"])
        assert report.f1 == tuple(float(x) for x in per["f1"])
        assert report.macro_f1 == macro
        assert report.micro_f1 == micro
        assert report.accuracy == acc
    # worked single-class example: TP=6, FP=2, FN=3
    value = f1(6 / (6 + 2), 6 / (6 + 3))
    assert abs(value - 0.705882) <= 1e-6
    print("criterion 7: pass (1000 exact sets, worked example %.6f)" % value)


def test_criterion_08_cleaning_golden_files_are_byte_identical(tmp_path):
    raws = load_dataset(data_path("raw_golden.csv"))
    cleaned = [clean_example(r) for r in raws]
    out = tmp_path / "clean.jsonl"
    with open(out, "w", encoding="utf-8") as fh:
        write_clean_jsonl(cleaned, fh)
    with open(data_path("clean_golden.jsonl"), "rb") as fh:
        golden = fh.read()
    assert out.read_bytes() == golden

    by_id = {ex.id: ex for ex in cleaned}
    assert by_id["t1"].clean_text == "i am happy"  # contraction expansion
    mapping = {ex.emotion_label: ex.sentiment_label for ex in cleaned}
    assert mapping == {
        "Happy": "Positive",
        "Surprised": "Positive",
        "Angry": "Negative",
        "Bad": "Negative",
        "Fearful": "Negative",
        "Sad": "Negative",
    }
    print("criterion 8: pass (golden bytes equal, all six labels mapped)")


def test_criterion_09_training_is_byte_deterministic(tmp_path):
    corpus = [clean_example(r) for r in make_dataset(200, seed=5)]
    data = tmp_path / "corpus.jsonl"
    with open(data, "w", encoding="utf-8") as fh:
        write_clean_jsonl(corpus, fh)
    blobs = []
    for tag in ("first", "second"):
        model = tmp_path / ("%s.ttrnn" % tag)
        log = tmp_path / ("%s.log.jsonl" % tag)
        proc = run_cli(
            [
                "train",
                "--data",
                str(data),
                "--out",
                str(model),
                "--log",
                str(log),
                "--cell",
                "t-gru",
                "--hidden",
                "8",
                "--embed",
                "8",
                "--epochs",
                "3",
                "--patience",
                "0",
                "--seed",
                "7",
                "--max-len",
                "12",
            ]
        )
        assert proc.returncode == 0, proc.stderr
        blobs.append((model.read_bytes(), log.read_bytes()))
    assert blobs[0][0] == blobs[1][0], "model files differ between runs"
    assert blobs[0][1] == blobs[1][1], "training logs differ between runs"
    print("criterion 9: pass (model %d bytes and log identical)" % len(blobs[0][0]))


def test_criterion_10_serialization_round_trip_is_bitwise(tiny_bundle, tiny_corpus, tmp_path):
    bundle, _, config = tiny_bundle
    path = str(tmp_path / "model.ttrnn")
    save_model(bundle, path)
    loaded = load_model(path)

    for name, var in bundle.weights.values.items():
        a = var.value.array
        b = loaded.weights[name].value.array
        assert a.shape == b.shape
        assert a.tobytes() == b.tobytes(), "weight %s not bitwise equal" % name
    assert loaded.metrics == bundle.metrics

    # replaying the stored split through the loaded model reproduces the
    # manifest metrics exactly
    labels, label_of = resolve_task(loaded.task)
    usable, _ = drop_untokenizable(tiny_corpus)
    _, test_set = split_train_test(
        usable, loaded.split["fraction"], loaded.split["seed"], key=label_of
    )
    label_id = {name: i for i, name in enumerate(loaded.labels)}
    encoded = [
        encode(tokenize(ex.clean_text), loaded.vocab, loaded.max_len, label_id[label_of(ex)])
        for ex in test_set
    ]
    report = evaluate_model(loaded.spec, loaded.weights, encoded)
    assert report.to_dict() == loaded.metrics["test"]
    print("criterion 10: pass (bitwise weights, metrics replayed exactly)")
