"""Reading-measure extraction and six-bin discretization.

From a raw fixation log we derive, per (reader, word):

* first-pass duration: the total time of the first maximal run of
  consecutive fixations on the word (immediate refixations merge);
* regression duration: all fixation time on the word after the gaze has
  left it at least once.

The two measures partition a word's total fixation time. Each measure is
discretized into bins 0-5 against the reader's own mean and population
standard deviation, computed over non-zero values only:

    bin 0: value == 0
    bin 1: value <  mean - sd
    bin 2: value <  mean - 0.5 sd
    bin 3: value <  mean + 0.5 sd
    bin 4: value <= mean + sd
    bin 5: value >  mean + sd

Fixation streams are handled independently per (reader, sentence).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

from .conllio import write_labeled_file
from .errors import DataFormatError

logger = logging.getLogger(__name__)

MEASURES = ("first_pass", "regression")


@dataclass(frozen=True)
class FixationEvent:
    reader_id: str
    sentence_id: str
    word_index: int
    duration_ms: int
    order: int


@dataclass(frozen=True)
class WordGaze:
    reader_id: str
    sentence_id: str
    word_index: int
    first_pass_ms: int
    regression_ms: int
    fp_bin: int
    regr_bin: int


@dataclass(frozen=True)
class ReaderStats:
    reader_id: str
    measure: str
    mean: float
    sd: float
    count_nonzero: int


def _check_stream(events: list[FixationEvent]) -> None:
    for prev, cur in zip(events, events[1:]):
        if cur.order <= prev.order:
            raise DataFormatError(
                f"fixation stream not sorted by order: {prev.order} then {cur.order} "
                f"(reader {cur.reader_id!r}, sentence {cur.sentence_id!r})"
            )


def compute_first_pass(events: list[FixationEvent]) -> dict[int, int]:
    """First-pass duration per fixated word; absent words read at 0 ms.

    The first pass of a word is the maximal block of consecutive fixations
    on it starting at its first fixation.
    """
    _check_stream(events)
    result: dict[int, int] = {}
    i = 0
    n = len(events)
    while i < n:
        w = events[i].word_index
        if w in result:
            i += 1
            continue
        j = i
        total = 0
        while j < n and events[j].word_index == w:
            total += events[j].duration_ms
            j += 1
        result[w] = total
        i = j
    return result


def compute_regression(events: list[FixationEvent]) -> dict[int, int]:
    """Total duration of fixations on a word after the gaze left it once."""
    _check_stream(events)
    result: dict[int, int] = {}
    seen: set[int] = set()
    left: set[int] = set()
    for ev in events:
        w = ev.word_index
        if w in left:
            result[w] = result.get(w, 0) + ev.duration_ms
        for v in seen:
            if v != w:
                left.add(v)
        seen.add(w)
    return result


def reader_stats(values, reader_id: str = "", measure: str = "") -> ReaderStats:
    """Mean and population SD over the non-zero values only."""
    nonzero = [float(v) for v in values if v != 0]
    if not nonzero:
        raise ValueError(
            f"no non-zero {measure or 'measure'} values for reader {reader_id!r}"
        )
    n = len(nonzero)
    mean = sum(nonzero) / n
    sd = (sum((v - mean) ** 2 for v in nonzero) / n) ** 0.5
    if sd == 0.0:
        logger.warning(
            "degenerate statistics for reader %r, %s: all %d non-zero values equal "
            "(sd=0); every non-zero value will fall in the central bin",
            reader_id, measure or "measure", n,
        )
    return ReaderStats(reader_id, measure, mean, sd, n)


def discretize_measure(value, stats: ReaderStats) -> int:
    """Map a millisecond value to its reader-relative bin 0-5."""
    value = float(value)
    if value < 0:
        raise ValueError(f"measure value must be nonnegative, got {value}")
    if value == 0:
        return 0
    if stats.sd == 0.0:
        return 3
    mean, sd = stats.mean, stats.sd
    if value < mean - sd:
        return 1
    if value < mean - 0.5 * sd:
        return 2
    if value < mean + 0.5 * sd:
        return 3
    if value <= mean + sd:
        return 4
    return 5


def parse_fixation_file(path) -> dict[tuple[str, str], list[FixationEvent]]:
    """Read a fixation TSV into per-(reader, sentence) event streams.

    Line format: ``reader_id<TAB>sentence_id<TAB>word_index<TAB>duration_ms``,
    in stream order; ``#``-prefixed comment lines and blank lines are skipped.
    """
    path = Path(path)
    streams: dict[tuple[str, str], list[FixationEvent]] = {}
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 4 tab-separated fields, got {len(fields)}"
                )
            reader_id, sentence_id, word_s, dur_s = fields
            try:
                word_index = int(word_s)
                duration = int(dur_s)
            except ValueError:
                raise DataFormatError(
                    f"{path}:{lineno}: word_index and duration_ms must be integers, got {line!r}"
                ) from None
            if word_index < 0:
                raise DataFormatError(f"{path}:{lineno}: negative word_index {word_index}")
            if duration <= 0:
                raise DataFormatError(f"{path}:{lineno}: duration_ms must be positive, got {duration}")
            key = (reader_id, sentence_id)
            stream = streams.setdefault(key, [])
            stream.append(FixationEvent(reader_id, sentence_id, word_index, duration, len(stream)))
    if not streams:
        logger.warning("%s: no fixation events found", path)
    return streams


def build_word_gazes(
    streams: dict[tuple[str, str], list[FixationEvent]],
    token_counts: dict[str, int],
) -> tuple[list[WordGaze], dict[tuple[str, str], ReaderStats]]:
    """Compute both measures and their bins for every (reader, sentence, word).

    The word universe per reader is every sentence in ``token_counts``;
    unfixated words get value 0 in both measures. Statistics are per reader
    per measure over the reader's whole corpus. Readers with no non-zero
    values for a measure get degenerate (0, 0) stats: every value is then 0
    and lands in bin 0.
    """
    for (reader_id, sentence_id), events in streams.items():
        if sentence_id not in token_counts:
            raise DataFormatError(
                f"fixations reference unknown sentence {sentence_id!r} (reader {reader_id!r})"
            )
        count = token_counts[sentence_id]
        for ev in events:
            if ev.word_index >= count:
                raise DataFormatError(
                    f"fixation on word {ev.word_index} but sentence {sentence_id!r} "
                    f"has only {count} tokens (reader {reader_id!r})"
                )

    readers = sorted({reader for reader, _ in streams})
    fp: dict[tuple[str, str], dict[int, int]] = {}
    regr: dict[tuple[str, str], dict[int, int]] = {}
    for key, events in streams.items():
        fp[key] = compute_first_pass(events)
        regr[key] = compute_regression(events)

    def values_for(reader: str, table) -> list[int]:
        vals = []
        for sentence_id, count in token_counts.items():
            per_word = table.get((reader, sentence_id), {})
            vals.extend(per_word.get(w, 0) for w in range(count))
        return vals

    stats: dict[tuple[str, str], ReaderStats] = {}
    for reader in readers:
        for measure, table in (("first_pass", fp), ("regression", regr)):
            vals = values_for(reader, table)
            if any(vals):
                stats[(reader, measure)] = reader_stats(vals, reader, measure)
            else:
                logger.warning("reader %r has no non-zero %s values", reader, measure)
                stats[(reader, measure)] = ReaderStats(reader, measure, 0.0, 0.0, 0)

    gazes: list[WordGaze] = []
    for reader in readers:
        for sentence_id, count in token_counts.items():
            fp_words = fp.get((reader, sentence_id), {})
            regr_words = regr.get((reader, sentence_id), {})
            for w in range(count):
                fp_ms = fp_words.get(w, 0)
                regr_ms = regr_words.get(w, 0)
                gazes.append(WordGaze(
                    reader, sentence_id, w, fp_ms, regr_ms,
                    discretize_measure(fp_ms, stats[(reader, "first_pass")]),
                    discretize_measure(regr_ms, stats[(reader, "regression")]),
                ))
    return gazes, stats


def export_gaze_corpus(
    sentences: dict[str, list[str]],
    gazes: list[WordGaze],
    out_dir,
    measures=MEASURES,
) -> list[Path]:
    """Write one token-label file per (reader, measure) under ``out_dir``.

    Labels are the bin digits 0-5; sentence order follows ``sentences``.
    Every (reader, sentence, word) must be covered by ``gazes``.
    """
    for measure in measures:
        if measure not in MEASURES:
            raise ValueError(f"unknown measure {measure!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_position: dict[tuple[str, str, int], WordGaze] = {
        (g.reader_id, g.sentence_id, g.word_index): g for g in gazes
    }
    readers = sorted({g.reader_id for g in gazes})
    missing = []
    for reader in readers:
        for sentence_id, tokens in sentences.items():
            for w in range(len(tokens)):
                if (reader, sentence_id, w) not in by_position:
                    missing.append((reader, sentence_id, w))
    if missing:
        shown = ", ".join(map(str, missing[:10]))
        raise DataFormatError(
            f"missing gaze values for {len(missing)} (reader, sentence, word) positions: {shown}"
        )

    written = []
    for reader in readers:
        for measure in measures:
            rows = []
            for sentence_id, tokens in sentences.items():
                labels = []
                for w in range(len(tokens)):
                    g = by_position[(reader, sentence_id, w)]
                    labels.append(str(g.fp_bin if measure == "first_pass" else g.regr_bin))
                rows.append((tokens, labels))
            path = out_dir / f"{reader}.{measure}.tsv"
            write_labeled_file(path, rows)
            written.append(path)
    return written


def parse_sentences_file(path) -> dict[str, list[str]]:
    """Read ``sentence_id<TAB>space-separated tokens`` lines, order-preserving."""
    path = Path(path)
    sentences: dict[str, list[str]] = {}
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 'sentence_id<TAB>tokens', got {line!r}"
                )
            sentence_id, text = fields
            tokens = text.split()
            if not tokens:
                raise DataFormatError(f"{path}:{lineno}: sentence {sentence_id!r} has no tokens")
            if sentence_id in sentences:
                raise DataFormatError(f"{path}:{lineno}: duplicate sentence id {sentence_id!r}")
            sentences[sentence_id] = tokens
    return sentences
