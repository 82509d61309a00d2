import numpy as np
import pytest

from gazecomp.cli import main
from gazecomp.compression import parse_labeled_file
from gazecomp.serialize import load_model

FIXATIONS = """\
r1\ts1\t0\t200
r1\ts1\t1\t150
r1\ts1\t1\t100
r1\ts1\t0\t300
r2\ts1\t0\t90
r2\ts1\t2\t80
"""

SENTENCES = "s1\tthe cat sat\n"

PAIRS = """\
the big cat sat down\tthe cat sat
a dog ran away\ta dog ran
the end\tzebra
"""


def write(path, text):
    path.write_text(text)
    return str(path)


def train_config(tmp_path, corpus_lines, **extra):
    corpus = tmp_path / "train.tsv"
    corpus.write_text(corpus_lines)
    out = tmp_path / "model.bin"
    cfg = {
        "architecture": "baseline",
        "layers": "1",
        "hidden_size": "3",
        "embedding_dim": "4",
        "seed": "7",
        "learning_rate": "0.2",
        "iterations": "3",
        "fine_tune_embeddings": "true",
        "compression_train": str(corpus),
        "out": str(out),
    }
    cfg.update(extra)
    path = tmp_path / "exp.cfg"
    path.write_text("".join(f"{k} = {v}\n" for k, v in cfg.items()))
    return path, out


TRAIN_CORPUS = "the\tKEEP\ncat\tDEL\nsat\tKEEP\n\ndog\tKEEP\nran\tKEEP\n\n"


def test_preprocess_gaze_end_to_end(tmp_path, capsys):
    fx = write(tmp_path / "fix.tsv", FIXATIONS)
    st = write(tmp_path / "sents.tsv", SENTENCES)
    out_dir = tmp_path / "gaze"
    assert main(["preprocess-gaze", "--fixations", fx, "--sentences", st,
                 "--out-dir", str(out_dir)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert len(printed) == 4  # 2 readers x 2 measures
    fp = (out_dir / "r1.first_pass.tsv").read_text().splitlines()
    assert fp[0].startswith("the\t") and len(fp) == 4  # 3 tokens + blank
    # never-fixated word gets bin 0
    regr = (out_dir / "r2.regression.tsv").read_text().splitlines()
    assert all(line.endswith("\t0") for line in regr[:3])


def test_make_labels_and_stats(tmp_path, capsys):
    pairs = write(tmp_path / "pairs.tsv", PAIRS)
    out = tmp_path / "labeled.tsv"
    rejects = tmp_path / "rejects.tsv"
    assert main(["make-labels", "--pairs", pairs, "--out", str(out),
                 "--rejects", str(rejects)]) == 0
    captured = capsys.readouterr()
    assert "labeled 2 sentences (1 rejected)" in captured.out
    assert "zebra" in captured.err
    assert rejects.read_text().startswith("3\t")
    corpus = parse_labeled_file(out)
    assert corpus[0].labels["compression"] == ["KEEP", "DEL", "KEEP", "KEEP", "DEL"]

    assert main(["stats", "--corpus", str(out)]) == 0
    lines = dict(l.split("\t") for l in capsys.readouterr().out.splitlines())
    assert lines["sentences"] == "2"
    assert float(lines["deletion_rate"]) == pytest.approx(3 / 9, abs=1e-3)


def test_train_evaluate_predict_cycle(tmp_path, capsys):
    cfg, out = train_config(tmp_path, TRAIN_CORPUS, iterations="60")
    assert main(["train", "--config", str(cfg)]) == 0
    assert out.exists() and (tmp_path / "model.bin.manifest").exists()
    assert (tmp_path / "model.bin.log").exists()
    capsys.readouterr()

    assert main(["evaluate", "--model", str(out), "--corpus",
                 str(tmp_path / "train.tsv")]) == 0
    eval_out = capsys.readouterr().out
    assert "positive class KEEP" in eval_out
    machine = eval_out.strip().splitlines()[-1].split("\t")
    assert len(machine) == 11
    assert float(machine[2]) == 1.0  # overfit tiny corpus -> F1 1.0

    raw = write(tmp_path / "raw.txt", "the cat sat\ndog ran\n\n")
    labels_out = tmp_path / "pred_labels.tsv"
    comp_out = tmp_path / "pred_comp.txt"
    assert main(["predict", "--model", str(out), "--input", raw,
                 "--labels-out", str(labels_out),
                 "--compressed-out", str(comp_out)]) == 0
    stdout = capsys.readouterr().out.splitlines()
    assert stdout[0] == "KEEP DEL KEEP\tthe sat"
    assert stdout[1] == "KEEP KEEP\tdog ran"
    assert comp_out.read_text() == "the sat\ndog ran\n"
    parsed = parse_labeled_file(labels_out)
    assert parsed[0].tokens == ["the", "cat", "sat"]


def test_train_deterministic_outputs(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    cfg1, out1 = train_config(tmp_path / "a", TRAIN_CORPUS)
    cfg2, out2 = train_config(tmp_path / "b", TRAIN_CORPUS)
    assert main(["train", "--config", str(cfg1)]) == 0
    assert main(["train", "--config", str(cfg2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert (tmp_path / "a" / "model.bin.log").read_text() == \
           (tmp_path / "b" / "model.bin.log").read_text()


def test_train_flag_overrides_config(tmp_path):
    cfg, out = train_config(tmp_path, TRAIN_CORPUS)
    assert main(["train", "--config", str(cfg), "--arch", "cascaded",
                 "--seed", "9", "--iterations", "1"]) == 0
    model = load_model(out)
    assert model.config.architecture == "cascaded"
    assert model.config.seed == 9
    assert model.config.iterations == 1


def test_train_with_dev_writes_best_snapshot(tmp_path):
    dev = tmp_path / "dev.tsv"
    dev.write_text("the\tKEEP\nsat\tKEEP\n\n")
    cfg, out = train_config(tmp_path, TRAIN_CORPUS, compression_dev=str(dev))
    assert main(["train", "--config", str(cfg)]) == 0
    assert (tmp_path / "model.bin.best").exists()
    assert (tmp_path / "model.bin.best.manifest").exists()


def test_train_with_gaze_and_ccg_tasks(tmp_path):
    gaze_dir = tmp_path / "gaze"
    gaze_dir.mkdir()
    (gaze_dir / "r1.first_pass.tsv").write_text("the\t2\ncat\t0\n\n")
    (gaze_dir / "r1.regression.tsv").write_text("the\t5\ncat\t0\n\n")
    ccg = tmp_path / "ccg.tsv"
    ccg.write_text("the\tDT\ncat\tNN\n\nsat\tVB\n\n")
    cfg, out = train_config(
        tmp_path, TRAIN_CORPUS,
        architecture="cascaded", layers="2",
        gaze_train=str(gaze_dir / "*.tsv"),
        gaze_measure="regression",
        ccg_train=str(ccg),
    )
    assert main(["train", "--config", str(cfg)]) == 0
    model = load_model(out)
    assert model.tasks["ccg"].label_vocab == ["DT", "NN", "VB"]
    assert model.tasks["gaze"].attach_layer == 0


def test_gradcheck_passes_and_fails_by_threshold(tmp_path, capsys):
    cfg = tmp_path / "tiny.cfg"
    cfg.write_text(
        "architecture = cascaded\nlayers = 2\nhidden_size = 3\n"
        "embedding_dim = 3\nseed = 1\nfine_tune_embeddings = true\n"
    )
    assert main(["gradcheck", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "max relative error" in out
    assert main(["gradcheck", "--config", str(cfg), "--threshold", "1e-12"]) == 3


def test_exit_codes():
    assert main(["no-such-command"]) == 1
    assert main(["train"]) == 1  # missing --config
    assert main(["stats", "--corpus", "/nonexistent/file.tsv"]) == 2


def test_unknown_config_key_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("architecture = baseline\noptimizer = adam\n")
    assert main(["train", "--config", str(cfg)]) == 1


def test_malformed_corpus_is_data_error(tmp_path):
    corpus = tmp_path / "bad.tsv"
    corpus.write_text("token with no label\n")
    assert main(["stats", "--corpus", str(corpus)]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_training_is_numeric_error(tmp_path):
    # a destructive learning rate reliably overflows this tiny model
    cfg, _ = train_config(tmp_path, TRAIN_CORPUS, learning_rate="1e200",
                          iterations="5")
    assert main(["train", "--config", str(cfg)]) == 3
