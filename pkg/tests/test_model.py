import numpy as np
import pytest

from gazecomp.compression import DEL, KEEP, LabeledSentence
from gazecomp.embeddings import random_embeddings
from gazecomp.errors import ConfigError
from gazecomp.model import (
    GAZE_LABELS,
    ArchitectureConfig,
    TrainingDiverged,
    build_model,
    evaluate_compression,
    forward_task,
    predict_compression,
    train,
    train_step,
)

VOCAB_TOKENS = "the cat sat on a mat dog ran".split()


def make_model(arch="baseline", layers=2, hidden=3, dim=4, seed=0,
               fine_tune=False, ccg_labels=("X", "Y"), lr=0.1, iterations=2):
    cfg = ArchitectureConfig(
        architecture=arch, layers=layers, hidden_size=hidden, embedding_dim=dim,
        seed=seed, learning_rate=lr, iterations=iterations,
        fine_tune_embeddings=fine_tune,
    )
    vocab, emb = random_embeddings(VOCAB_TOKENS, dim, np.random.default_rng(seed))
    return build_model(cfg, vocab, emb, {"ccg": list(ccg_labels)})


def sent(tokens, labels, task="compression"):
    return LabeledSentence(tokens.split(), {task: labels.split()})


def test_baseline_heads_attach_outer():
    m = make_model("baseline", layers=3)
    assert set(m.tasks) == {"compression", "ccg"}
    assert m.tasks["compression"].attach_layer == 2
    assert m.tasks["ccg"].attach_layer == 2


def test_multitask_heads_attach_outer():
    m = make_model("multitask", layers=3)
    assert set(m.tasks) == {"compression", "ccg", "gaze"}
    assert all(spec.attach_layer == 2 for spec in m.tasks.values())
    assert m.tasks["gaze"].label_vocab == list(GAZE_LABELS)


def test_cascaded_aux_heads_attach_inner():
    m = make_model("cascaded", layers=3)
    assert m.tasks["compression"].attach_layer == 2
    assert m.tasks["ccg"].attach_layer == 0
    assert m.tasks["gaze"].attach_layer == 0


def test_same_seed_bitwise_identical():
    m1 = make_model(seed=7)
    m2 = make_model(seed=7)
    for p1, p2 in zip(m1.parameters(), m2.parameters()):
        assert p1.name == p2.name
        np.testing.assert_array_equal(p1.value, p2.value)


def test_architecture_equivalence_shared_initialization():
    models = {arch: make_model(arch, layers=3, seed=5) for arch in
              ("baseline", "multitask", "cascaded")}
    ref = models["baseline"]
    for arch, m in models.items():
        np.testing.assert_array_equal(
            m.embeddings.param.value, ref.embeddings.param.value)
        for (f1, b1), (f2, b2) in zip(m.layers, ref.layers):
            for pa, pb in zip(f1.parameters() + b1.parameters(),
                              f2.parameters() + b2.parameters()):
                np.testing.assert_array_equal(pa.value, pb.value)
    # shared heads initialize identically too
    np.testing.assert_array_equal(
        models["multitask"].tasks["ccg"].w.value,
        models["baseline"].tasks["ccg"].w.value,
    )


def test_parameter_count_is_config_determined():
    def count(m):
        return sum(p.value.size for p in m.parameters())

    m = make_model("multitask", layers=2, hidden=3, dim=4)
    hidden, dim, vocab = 3, 4, m.vocab.size
    per_dir_l0 = 4 * (hidden * dim + hidden * hidden + hidden)
    per_dir_l1 = 4 * (hidden * 2 * hidden + hidden * hidden + hidden)
    heads = (2 * (2 * hidden) + 2) + (2 * (2 * hidden) + 2) + (6 * (2 * hidden) + 6)
    expected = vocab * dim + 2 * (per_dir_l0 + per_dir_l1) + heads
    assert count(m) == expected
    assert count(make_model("multitask", layers=2, hidden=3, dim=4, seed=9)) == expected


def test_forward_task_distributions_normalized():
    m = make_model("multitask", layers=2)
    dist = forward_task(m, ["the", "cat", "sat"], "gaze")
    assert dist.shape == (3, 6)
    np.testing.assert_allclose(dist.sum(axis=1), np.ones(3), atol=1e-9)


def test_compression_rows_have_two_labels():
    m = make_model()
    dist = forward_task(m, ["cat"], "compression")
    assert dist.shape == (1, 2)


def test_zero_heads_give_uniform_distributions():
    m = make_model("multitask")
    for spec in m.tasks.values():
        spec.w.value[...] = 0.0
        spec.b.value[...] = 0.0
    dist = forward_task(m, ["the", "dog"], "gaze")
    np.testing.assert_allclose(dist, np.full((2, 6), 1 / 6), atol=1e-12)


def test_unknown_task_rejected():
    m = make_model()
    with pytest.raises(ValueError, match="unknown task"):
        forward_task(m, ["the"], "parsing")


def test_zero_model_predicts_first_label_keep():
    m = make_model()
    m.tasks["compression"].w.value[...] = 0.0
    m.tasks["compression"].b.value[...] = 0.0
    assert predict_compression(m, ["the", "cat", "ran"]) == [KEEP, KEEP, KEEP]


def test_single_token_uniform_loss_is_ln2():
    m = make_model()
    m.tasks["compression"].w.value[...] = 0.0
    m.tasks["compression"].b.value[...] = 0.0
    data = {"compression": [sent("cat", "KEEP")]}
    _, loss = train_step(m, data, np.random.default_rng(0))
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)


def cascaded_upper_names(m):
    names = set()
    for fwd, bwd in m.layers[1:]:
        names.update(p.name for p in fwd.parameters())
        names.update(p.name for p in bwd.parameters())
    names.add("task.compression.W")
    names.add("task.compression.b")
    return names


def test_cascaded_aux_step_leaves_upper_layers_bitwise_unchanged():
    m = make_model("cascaded", layers=3)
    aux_data = {
        "gaze": [sent("the cat", "0 3", task="gaze")],
        "ccg": [sent("dog ran", "X Y", task="ccg")],
    }
    upper = cascaded_upper_names(m)
    before = {p.name: p.value.copy() for p in m.parameters()}
    rng = np.random.default_rng(1)
    changed_lower = False
    for _ in range(20):
        train_step(m, aux_data, rng)
    for p in m.parameters():
        if p.name in upper or p.name == "embeddings":
            np.testing.assert_array_equal(p.value, before[p.name], err_msg=p.name)
        elif not np.array_equal(p.value, before[p.name]):
            changed_lower = True
    assert changed_lower


def test_multitask_aux_step_updates_upper_layers_positive_control():
    m = make_model("multitask", layers=3)
    aux_data = {"gaze": [sent("the cat", "0 3", task="gaze")]}
    upper = cascaded_upper_names(m) - {"task.compression.W", "task.compression.b"}
    before = {name: dict() for name in ()} or {
        p.name: p.value.copy() for p in m.parameters()
    }
    rng = np.random.default_rng(1)
    for _ in range(5):
        train_step(m, aux_data, rng)
    assert any(
        not np.array_equal(p.value, before[p.name])
        for p in m.parameters() if p.name in upper
    )
    # the compression head still never moves on aux updates
    np.testing.assert_array_equal(
        m.tasks["compression"].w.value, before["task.compression.W"])


def test_frozen_embeddings_bitwise_stable_under_training():
    m = make_model(fine_tune=False)
    before = m.embeddings.param.value.copy()
    data = {"compression": [sent("the cat sat", "KEEP DEL KEEP")]}
    rng = np.random.default_rng(3)
    for _ in range(25):
        train_step(m, data, rng)
    np.testing.assert_array_equal(m.embeddings.param.value, before)


def test_finetuned_embeddings_change():
    m = make_model(fine_tune=True)
    before = m.embeddings.param.value.copy()
    data = {"compression": [sent("the cat sat", "KEEP DEL KEEP")]}
    train_step(m, data, np.random.default_rng(3))
    assert not np.array_equal(m.embeddings.param.value, before)


def test_task_sampling_uniform_chi_square():
    from scipy.stats import chisquare

    m = make_model("multitask", layers=1, hidden=2, dim=2)
    data = {
        "compression": [sent("cat", "KEEP")],
        "ccg": [sent("dog", "X", task="ccg")],
        "gaze": [sent("the", "2", task="gaze")],
    }
    rng = np.random.default_rng(11)
    counts = {"compression": 0, "ccg": 0, "gaze": 0}
    for _ in range(10_000):
        name, _ = train_step(m, data, rng)
        counts[name] += 1
    _, p = chisquare(list(counts.values()))
    assert p > 0.001


def test_descent_on_fixed_instance():
    m = make_model(lr=0.05)
    data = {"compression": [sent("the cat sat on a mat", "KEEP DEL KEEP KEEP DEL KEEP")]}
    rng = np.random.default_rng(0)
    _, first = train_step(m, data, rng)
    _, second = train_step(m, data, rng)
    assert second < first


def test_skip_on_label_vocab_mismatch(caplog):
    m = make_model()
    bad = LabeledSentence(["a"], {"compression": ["MAYBE"]})
    with caplog.at_level("WARNING"):
        name, loss = train_step(m, {"compression": [bad]}, np.random.default_rng(0))
    assert loss is None


def test_train_zero_iterations_leaves_model_unchanged():
    m = make_model(iterations=0)
    before = m.snapshot()
    log = train(m, {"compression": [sent("the cat", "KEEP DEL")]})
    assert log.epochs == []
    for p in m.parameters():
        np.testing.assert_array_equal(p.value, before[p.name])


def test_train_requires_compression_data():
    m = make_model()
    with pytest.raises(ConfigError):
        train(m, {"ccg": [sent("a", "X", task="ccg")]})


def test_train_fixed_seed_identical_loss_trace():
    def run():
        m = make_model(seed=13, iterations=3)
        data = {
            "compression": [sent("the cat sat", "KEEP DEL KEEP"),
                            sent("a dog ran", "DEL KEEP KEEP")],
            "ccg": [sent("the cat", "X Y", task="ccg")],
        }
        return train(m, data).render()

    assert run() == run()


def test_train_tracks_best_dev_snapshot():
    m = make_model(seed=2, iterations=4, lr=0.2)
    data = {"compression": [sent("the cat sat", "KEEP DEL KEEP"),
                            sent("a dog ran", "DEL KEEP KEEP")]}
    dev = [sent("the dog sat", "KEEP KEEP KEEP")]
    log = train(m, data, dev=dev)
    assert log.best_epoch is not None
    assert log.best_params is not None
    assert log.best_dev_f1 == max(rec.dev_f1 for rec in log.epochs)
    assert len(log.epochs) == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_aborts_on_nonfinite_loss_and_restores():
    m = make_model(iterations=2)
    # saturating bias overflows the per-token loss to +inf on DEL tokens
    m.tasks["compression"].b.value[...] = np.array([[1e308], [-1e308]])
    poisoned = m.snapshot()
    data = {"compression": [sent("the cat", "KEEP DEL")]}
    with pytest.raises(TrainingDiverged):
        train(m, data)
    for p in m.parameters():
        np.testing.assert_array_equal(p.value, poisoned[p.name])


def test_micro_overfit_memorizes_training_corpus():
    corpus = [
        sent("the cat sat", "KEEP DEL KEEP"),
        sent("a dog ran", "DEL KEEP KEEP"),
        sent("the mat sat on a cat", "KEEP KEEP DEL DEL DEL KEEP"),
        sent("dog on mat", "KEEP DEL DEL"),
    ]
    cfg = ArchitectureConfig(
        architecture="baseline", layers=2, hidden_size=8, embedding_dim=8,
        seed=3, learning_rate=0.2, iterations=150, fine_tune_embeddings=True,
    )
    vocab, emb = random_embeddings(VOCAB_TOKENS, 8, np.random.default_rng(3))
    m = build_model(cfg, vocab, emb, {"ccg": ["X", "Y"]})
    train(m, {"compression": corpus})
    for s in corpus:
        assert predict_compression(m, s.tokens) == s.labels["compression"]
    assert evaluate_compression(m, corpus) == 1.0


def test_config_validation_errors():
    with pytest.raises(ConfigError):
        ArchitectureConfig(architecture="transformer").validate()
    with pytest.raises(ConfigError):
        ArchitectureConfig(layers=0).validate()
    with pytest.raises(ConfigError):
        ArchitectureConfig(gaze_measure="pupil").validate()
    with pytest.raises(ConfigError):
        ArchitectureConfig(learning_rate=-1.0).validate()


def test_config_mapping_round_trip():
    cfg = ArchitectureConfig(architecture="cascaded", seed=42, clip_norm=5.0,
                             fine_tune_embeddings=True)
    from gazecomp.config import parse_kv_text

    back = ArchitectureConfig.from_mapping(parse_kv_text(cfg.to_text()))
    assert back == cfg


def test_config_mapping_rejects_unknown_and_bad_values():
    with pytest.raises(ConfigError, match="unknown configuration key"):
        ArchitectureConfig.from_mapping({"optimizer": "adam"})
    with pytest.raises(ConfigError, match="bad value"):
        ArchitectureConfig.from_mapping({"layers": "three"})


def test_build_rejects_dim_mismatch():
    cfg = ArchitectureConfig(embedding_dim=5)
    vocab, emb = random_embeddings(["a"], 4, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        build_model(cfg, vocab, emb)


def test_build_rejects_wrong_forced_vocab():
    cfg = ArchitectureConfig(embedding_dim=4, layers=1)
    vocab, emb = random_embeddings(["a"], 4, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        build_model(cfg, vocab, emb, {"compression": ["YES", "NO"]})
