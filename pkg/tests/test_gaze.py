import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazecomp.conllio import read_labeled_file
from gazecomp.errors import DataFormatError
from gazecomp.gaze import (
    FixationEvent,
    ReaderStats,
    WordGaze,
    build_word_gazes,
    compute_first_pass,
    compute_regression,
    discretize_measure,
    export_gaze_corpus,
    parse_fixation_file,
    parse_sentences_file,
    reader_stats,
)

# frozen oracle: population SD of {100..500 step 100} = sqrt(20000)
SD_100_500 = 141.4213562373095


def stream(pairs, reader="r1", sentence="s1"):
    return [
        FixationEvent(reader, sentence, w, d, order)
        for order, (w, d) in enumerate(pairs)
    ]


# ---- independent brute-force oracles (definition-level restatements) ----

def oracle_first_pass(pairs):
    words = [w for w, _ in pairs]
    out = {}
    for w in set(words):
        first = words.index(w)
        total = 0
        k = first
        while k < len(words) and words[k] == w:
            total += pairs[k][1]
            k += 1
        out[w] = total
    return out


def oracle_regression(pairs):
    words = [w for w, _ in pairs]
    out = {}
    for k, (w, d) in enumerate(pairs):
        left_before = any(
            words[i] == w and any(words[m] != w for m in range(i + 1, k))
            for i in range(k)
        )
        if left_before:
            out[w] = out.get(w, 0) + d
    return out


SPEC_PAIRS = [(1, 200), (2, 150), (2, 100), (1, 300), (3, 250)]


def test_first_pass_hand_simulation():
    assert compute_first_pass(stream(SPEC_PAIRS)) == {1: 200, 2: 250, 3: 250}


def test_regression_hand_simulation():
    assert compute_regression(stream(SPEC_PAIRS)) == {1: 300}


def test_never_fixated_word_absent_means_zero():
    fp = compute_first_pass(stream([(0, 100)]))
    assert fp.get(7, 0) == 0


def test_single_fixation_per_word():
    pairs = [(0, 120), (1, 80), (2, 95)]
    assert compute_first_pass(stream(pairs)) == {0: 120, 1: 80, 2: 95}
    assert compute_regression(stream(pairs)) == {}


def test_three_separated_visits():
    pairs = [(0, 100), (1, 50), (0, 100), (1, 50), (0, 100)]
    assert compute_first_pass(stream(pairs))[0] == 100
    assert compute_regression(stream(pairs))[0] == 200


def test_unsorted_stream_rejected():
    events = stream([(0, 100), (1, 100)])
    events = [events[1], events[0]]
    with pytest.raises(DataFormatError):
        compute_first_pass(events)
    with pytest.raises(DataFormatError):
        compute_regression(events)


def test_empty_stream_gives_empty_maps():
    assert compute_first_pass([]) == {}
    assert compute_regression([]) == {}


@settings(max_examples=300, deadline=None)
@given(
    pairs=st.lists(
        st.tuples(st.integers(0, 9), st.integers(1, 1000)),
        min_size=0,
        max_size=30,
    )
)
def test_measures_match_oracle_and_partition_total_time(pairs):
    events = stream(pairs)
    fp = compute_first_pass(events)
    regr = compute_regression(events)
    assert fp == oracle_first_pass(pairs)
    assert regr == oracle_regression(pairs)
    totals = {}
    for w, d in pairs:
        totals[w] = totals.get(w, 0) + d
    for w, total in totals.items():
        assert fp.get(w, 0) + regr.get(w, 0) == total


def test_reader_stats_mean_and_population_sd():
    s = reader_stats([100, 200, 300, 400, 500], "r1", "first_pass")
    assert s.mean == pytest.approx(300.0)
    assert s.sd == pytest.approx(SD_100_500, abs=1e-10)
    assert s.count_nonzero == 5


def test_reader_stats_all_equal_gives_zero_sd(caplog):
    with caplog.at_level("WARNING"):
        s = reader_stats([5, 5, 5])
    assert s.mean == 5 and s.sd == 0
    assert any("sd=0" in r.message for r in caplog.records)


def test_reader_stats_excludes_zeros():
    s = reader_stats([0, 0, 10])
    assert s.mean == 10 and s.sd == 0 and s.count_nonzero == 1


def test_reader_stats_no_nonzero_values_errors():
    with pytest.raises(ValueError):
        reader_stats([0, 0, 0])


def test_binning_zero_and_negative():
    s = ReaderStats("r", "first_pass", 300.0, SD_100_500, 5)
    assert discretize_measure(0, s) == 0
    with pytest.raises(ValueError):
        discretize_measure(-1, s)


def test_binning_worked_thresholds():
    s = ReaderStats("r", "first_pass", 300.0, SD_100_500, 5)
    assert discretize_measure(100, s) == 1
    assert discretize_measure(250, s) == 3
    assert discretize_measure(380, s) == 4
    assert discretize_measure(500, s) == 5


def test_binning_degenerate_sd_maps_to_center():
    s = ReaderStats("r", "first_pass", 5.0, 0.0, 3)
    assert discretize_measure(17, s) == 3
    assert discretize_measure(0, s) == 0


def test_binning_monotone_and_total():
    s = ReaderStats("r", "first_pass", 200.0, 50.0, 10)
    bins = [discretize_measure(v, s) for v in range(1, 500)]
    assert all(b2 >= b1 for b1, b2 in zip(bins, bins[1:]))
    assert all(1 <= b <= 5 for b in bins)


def test_binning_boundaries_half_open_scheme():
    s = ReaderStats("r", "first_pass", 100.0, 10.0, 5)
    assert discretize_measure(89.999, s) == 1
    assert discretize_measure(90.0, s) == 2
    assert discretize_measure(95.0, s) == 3
    assert discretize_measure(105.0, s) == 4
    assert discretize_measure(110.0, s) == 4  # closed at mean + sd
    assert discretize_measure(110.001, s) == 5


def test_export_table_format(tmp_path):
    words = ["Are", "tourists", "enticed", "by", "these", "attractions",
             "threatening", "their", "very", "existence", "?"]
    fp_bins = [4, 2, 3, 4, 2, 3, 3, 5, 3, 3, 3]
    regr_bins = [4, 0, 0, 0, 0, 0, 3, 0, 3, 5, 5]
    gazes = [
        WordGaze("r1", "s1", i, 10, 10, fp_bins[i], regr_bins[i])
        for i in range(len(words))
    ]
    written = export_gaze_corpus({"s1": words}, gazes, tmp_path)
    fp_file = tmp_path / "r1.first_pass.tsv"
    regr_file = tmp_path / "r1.regression.tsv"
    assert set(written) == {fp_file, regr_file}
    fp_lines = fp_file.read_text().splitlines()
    assert fp_lines[0] == "Are\t4"
    assert fp_lines[1] == "tourists\t2"
    regr_lines = regr_file.read_text().splitlines()
    assert regr_lines[0] == "Are\t4"
    assert regr_lines[1] == "tourists\t0"


def test_export_round_trip(tmp_path):
    sentences = {"a": ["x", "y"], "b": ["z"]}
    gazes, _ = build_word_gazes(
        parse_streams_from_pairs({("r1", "a"): [(0, 100), (1, 200), (0, 50)],
                                  ("r1", "b"): [(0, 300)]}),
        {"a": 2, "b": 1},
    )
    written = export_gaze_corpus(sentences, gazes, tmp_path)
    for path in written:
        parsed = read_labeled_file(path)
        assert [tokens for tokens, _ in parsed] == [["x", "y"], ["z"]]
        for tokens, labels in parsed:
            assert len(tokens) == len(labels)
            assert all(lab in "012345" for lab in labels)


def parse_streams_from_pairs(table):
    return {
        key: [
            FixationEvent(key[0], key[1], w, d, order)
            for order, (w, d) in enumerate(pairs)
        ]
        for key, pairs in table.items()
    }


def test_sentence_with_no_fixations_gets_all_zero_labels(tmp_path):
    sentences = {"s1": ["a", "b"], "s2": ["c", "d", "e"]}
    streams = parse_streams_from_pairs({("r1", "s1"): [(0, 100), (1, 150)]})
    gazes, _ = build_word_gazes(streams, {k: len(v) for k, v in sentences.items()})
    export_gaze_corpus(sentences, gazes, tmp_path)
    parsed = read_labeled_file(tmp_path / "r1.first_pass.tsv")
    assert parsed[1][1] == ["0", "0", "0"]


def test_export_missing_positions_listed(tmp_path):
    gazes = [WordGaze("r1", "s1", 0, 10, 0, 3, 0)]
    with pytest.raises(DataFormatError, match=r"\('r1', 's1', 1\)"):
        export_gaze_corpus({"s1": ["a", "b"]}, gazes, tmp_path)


def test_build_word_gazes_validates_indices():
    streams = parse_streams_from_pairs({("r1", "s1"): [(5, 100)]})
    with pytest.raises(DataFormatError):
        build_word_gazes(streams, {"s1": 2})
    streams = parse_streams_from_pairs({("r1", "nope"): [(0, 100)]})
    with pytest.raises(DataFormatError):
        build_word_gazes(streams, {"s1": 2})


def test_parse_fixation_file(tmp_path):
    path = tmp_path / "fix.tsv"
    path.write_text(
        "# comment line\n"
        "r1\ts1\t0\t200\n"
        "r1\ts1\t1\t150\r\n"
        "\n"
        "r2\ts1\t0\t90\n"
    )
    streams = parse_fixation_file(path)
    assert set(streams) == {("r1", "s1"), ("r2", "s1")}
    assert [e.duration_ms for e in streams[("r1", "s1")]] == [200, 150]
    assert [e.order for e in streams[("r1", "s1")]] == [0, 1]


@pytest.mark.parametrize("bad", [
    "r1\ts1\t0\n",
    "r1\ts1\tzero\t100\n",
    "r1\ts1\t0\t0\n",
    "r1\ts1\t-1\t100\n",
])
def test_parse_fixation_file_errors_carry_line(tmp_path, bad):
    path = tmp_path / "bad.tsv"
    path.write_text("r1\ts1\t0\t100\n" + bad)
    with pytest.raises(DataFormatError, match=r":2"):
        parse_fixation_file(path)


def test_parse_sentences_file(tmp_path):
    path = tmp_path / "sents.tsv"
    path.write_text("s1\tAre tourists enticed\ns2\tHello world\n")
    sentences = parse_sentences_file(path)
    assert sentences == {"s1": ["Are", "tourists", "enticed"], "s2": ["Hello", "world"]}
    path.write_text("s1\ta b\ns1\tc d\n")
    with pytest.raises(DataFormatError, match="duplicate"):
        parse_sentences_file(path)
