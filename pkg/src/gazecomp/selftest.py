"""Bundled synthetic-data verification suite behind ``gazecomp selftest``.

Each check rebuilds its own fixtures from fixed seeds, compares the library
against brute-force oracles or frozen reference values, and reports one
pass/fail line. Runtime is a few tens of seconds on a laptop.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from .autodiff import Tape, finite_difference_check
from .compression import DEL, KEEP, align_and_label
from .embeddings import random_embeddings
from .evaluation import summary_metrics, token_f1
from .gaze import ReaderStats, compute_first_pass, compute_regression, discretize_measure
from .model import (
    ArchitectureConfig,
    build_model,
    predict_compression,
    sentence_losses,
    train,
    train_step,
)
from .serialize import save_model
from .synthetic import (
    random_compression_corpus,
    random_fixation_streams,
    random_sentence_pairs,
)

# frozen via an independent high-precision evaluation (mpmath, 40 digits)
_TANH_1 = 0.7615941559557649
_CE_123_GOLD2 = 0.4076059644443803


def _tiny_model(arch: str, seed: int = 0, fine_tune: bool = True):
    cfg = ArchitectureConfig(
        architecture=arch, layers=2, hidden_size=3, embedding_dim=3,
        seed=seed, learning_rate=0.1, iterations=2, fine_tune_embeddings=fine_tune,
    )
    tokens = [f"v{i}" for i in range(8)]
    vocab, emb = random_embeddings(tokens, 3, np.random.default_rng(seed))
    return build_model(cfg, vocab, emb, {"ccg": ["c0", "c1", "c2"]}), tokens


def check_reference_values():
    t = Tape()
    ok = abs(t.tanh(t.const([1.0])).data[0, 0] - _TANH_1) < 1e-14
    t2 = Tape()
    ce = t2.softmax_cross_entropy(t2.const([1.0, 2.0, 3.0]), 2).item()
    ok = ok and abs(ce - _CE_123_GOLD2) < 1e-14
    return ok, "tanh and cross-entropy match frozen references"


def check_gradients():
    # random parameter values keep every coordinate's gradient well away from
    # zero, where finite differences lose relative precision
    model, tokens = _tiny_model("cascaded")
    rng = np.random.default_rng(1)
    for p in model.parameters():
        p.value[...] = rng.normal(0.0, 0.6, size=p.value.shape)
    probes = []
    for n_tokens in (4, 6):
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

    res = finite_difference_check(forward, model.parameters(), 1e-5)
    return res.max_rel_error < 1e-4, f"max relative gradient error {res.max_rel_error:.2e}"


def check_scope_isolation():
    from .compression import LabeledSentence

    aux = {
        "gaze": [LabeledSentence(["v1", "v2"], {"gaze": ["2", "4"]})],
        "ccg": [LabeledSentence(["v3", "v4"], {"ccg": ["c0", "c1"]})],
    }

    def frozen_names(model):
        names = {"task.compression.W", "task.compression.b"}
        for fwd, bwd in model.layers[1:]:
            names.update(p.name for p in fwd.parameters())
            names.update(p.name for p in bwd.parameters())
        return names

    cascaded, _ = _tiny_model("cascaded", seed=3)
    before = cascaded.snapshot()
    rng = np.random.default_rng(0)
    for _ in range(20):
        train_step(cascaded, aux, rng)
    for p in cascaded.parameters():
        if p.name in frozen_names(cascaded) and not np.array_equal(p.value, before[p.name]):
            return False, f"cascaded aux update moved {p.name}"

    multitask, _ = _tiny_model("multitask", seed=3)
    before = multitask.snapshot()
    rng = np.random.default_rng(0)
    for _ in range(20):
        train_step(multitask, aux, rng)
    upper = frozen_names(multitask) - {"task.compression.W", "task.compression.b"}
    moved = any(not np.array_equal(p.value, before[p.name])
                for p in multitask.parameters() if p.name in upper)
    if not moved:
        return False, "multitask positive control detected no movement"
    return True, "cascaded freezes upper layers; multitask moves them"


def check_gaze_oracle():
    rng = np.random.default_rng(7)
    for events in random_fixation_streams(200, rng):
        pairs = [(e.word_index, e.duration_ms) for e in events]
        fp = compute_first_pass(events)
        regr = compute_regression(events)
        words = [w for w, _ in pairs]
        for w in set(words):
            first = words.index(w)
            run_total = 0
            k = first
            while k < len(words) and words[k] == w:
                run_total += pairs[k][1]
                k += 1
            if fp.get(w, 0) != run_total:
                return False, f"first-pass mismatch on word {w}"
            regr_total = 0
            for j, (wj, d) in enumerate(pairs):
                if wj == w and any(
                    words[i] == w and any(words[m] != w for m in range(i + 1, j))
                    for i in range(j)
                ):
                    regr_total += d
            if regr.get(w, 0) != regr_total:
                return False, f"regression mismatch on word {w}"
            total = sum(d for wj, d in pairs if wj == w)
            if fp.get(w, 0) + regr.get(w, 0) != total:
                return False, f"partition violated on word {w}"
    return True, "200 random streams match the brute-force definitions"


def check_binning():
    rng = np.random.default_rng(5)
    for _ in range(2000):
        value = float(rng.uniform(0, 500)) if rng.integers(4) else 0.0
        mean = float(rng.uniform(1, 400))
        sd = float(rng.uniform(0, 150))
        stats = ReaderStats("r", "first_pass", mean, sd, 10)
        got = discretize_measure(value, stats)
        if value == 0:
            want = 0
        elif sd == 0:
            want = 3
        elif value < mean - sd:
            want = 1
        elif value < mean - 0.5 * sd:
            want = 2
        elif value < mean + 0.5 * sd:
            want = 3
        elif value <= mean + sd:
            want = 4
        else:
            want = 5
        if got != want:
            return False, f"bin mismatch at value={value} mean={mean} sd={sd}"
    stats = ReaderStats("r", "first_pass", 300.0, 141.4213562373095, 5)
    worked = [discretize_measure(v, stats) for v in (100, 250, 380, 500)]
    if worked != [1, 3, 4, 5]:
        return False, f"worked example gave {worked}"
    return True, "2000 random triples and the worked example match"


def check_label_derivation():
    from .compression import SentencePair

    rng = np.random.default_rng(9)
    for pair in random_sentence_pairs(100, rng):
        labeled = align_and_label(pair)
        keeps = [t for t, lab in zip(labeled.tokens, labeled.labels["compression"])
                 if lab == KEEP]
        if keeps != pair.compression:
            return False, "KEEP projection does not reproduce the compression"
    source = ("Intel would be building car batteries , expanding its business "
              "beyond its core strength , the company said in a statement .").split()
    labeled = align_and_label(
        SentencePair(source, "Intel would be building car batteries".split()))
    labels = labeled.labels["compression"]
    if labels[:6] != [KEEP] * 6 or set(labels[6:]) != {DEL}:
        return False, "example pair mislabeled"
    return True, "100 random pairs project exactly; example pair labeled 6 KEEP + DEL"


def check_f1_oracle():
    rng = np.random.default_rng(13)
    for _ in range(200):
        gold = [[(KEEP, DEL)[rng.integers(2)] for _ in range(rng.integers(1, 7))]
                for _ in range(rng.integers(1, 8))]
        pred = [[(KEEP, DEL)[rng.integers(2)] for _ in s] for s in gold]
        r = token_f1(gold, pred)
        flat = [(g, p) for gs, ps in zip(gold, pred) for g, p in zip(gs, ps)]
        tp = sum(1 for g, p in flat if g == p == KEEP)
        fp = sum(1 for g, p in flat if g == DEL and p == KEEP)
        fn = sum(1 for g, p in flat if g == KEEP and p == DEL)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        if abs(r.f1 - f1) > 1e-12 or (r.tp, r.fp, r.fn) != (tp, fp, fn):
            return False, "confusion mismatch"
    hand = token_f1([[KEEP, DEL, KEEP, KEEP]], [[KEEP, KEEP, DEL, KEEP]])
    if abs(hand.f1 - 2 / 3) > 1e-12:
        return False, f"hand case F1 {hand.f1}"
    return True, "200 random corpora match the direct confusion computation"


def check_determinism():
    def run(tmp: Path):
        corpus = random_compression_corpus(6, np.random.default_rng(2), vocab_size=8)
        cfg = ArchitectureConfig(
            architecture="baseline", layers=2, hidden_size=3, embedding_dim=3,
            seed=11, learning_rate=0.1, iterations=2, fine_tune_embeddings=True,
        )
        tokens = sorted({t for s in corpus for t in s.tokens})
        vocab, emb = random_embeddings(tokens, 3, np.random.default_rng(11))
        model = build_model(cfg, vocab, emb, {"ccg": ["c0", "c1", "c2"]})
        log = train(model, {"compression": corpus})
        path = save_model(model, tmp / "m.bin")
        return path.read_bytes(), log.render()

    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        bytes1, log1 = run(Path(d1))
        bytes2, log2 = run(Path(d2))
    if bytes1 != bytes2:
        return False, "model bytes differ between identical runs"
    if log1 != log2:
        return False, "loss traces differ between identical runs"
    return True, "identical seeds give identical model bytes and loss traces"


def check_overfit():
    rng = np.random.default_rng(4)
    corpus = random_compression_corpus(8, rng, vocab_size=10, min_len=3, max_len=6)
    cfg = ArchitectureConfig(
        architecture="baseline", layers=2, hidden_size=8, embedding_dim=6,
        seed=4, learning_rate=0.2, iterations=150, fine_tune_embeddings=True,
    )
    tokens = sorted({t for s in corpus for t in s.tokens})
    vocab, emb = random_embeddings(tokens, 6, np.random.default_rng(4))
    model = build_model(cfg, vocab, emb)
    train(model, {"compression": corpus})
    gold = [s.labels["compression"] for s in corpus]
    pred = [predict_compression(model, s.tokens) for s in corpus]
    acc, _, _ = summary_metrics(gold, pred)
    return acc >= 0.99, f"memorization accuracy {acc:.3f} after 150 epochs"


CHECKS = [
    ("reference values", check_reference_values),
    ("gradient correctness", check_gradients),
    ("cascaded scope isolation", check_scope_isolation),
    ("gaze measure oracle", check_gaze_oracle),
    ("bin discretization oracle", check_binning),
    ("deletion label derivation", check_label_derivation),
    ("token F1 oracle", check_f1_oracle),
    ("training determinism", check_determinism),
    ("memorization capacity", check_overfit),
]


def run_selftest(write) -> bool:
    """Run every check, writing one line per check; True when all pass."""
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn()
        all_ok = all_ok and ok
        write(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    write("self-test " + ("PASSED" if all_ok else "FAILED"))
    return all_ok
