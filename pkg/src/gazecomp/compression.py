"""Deletion-label derivation from parallel (source, compression) pairs.

A compression is encoded as a per-token KEEP/DEL sequence over the source.
The compression must embed into the source as a subsequence; we take the
leftmost embedding (earliest source positions win ties), matching
case-sensitively first and falling back to a case-insensitive pass when
the exact-case embedding fails. Pairs whose compression cannot be embedded
are rejected, counted, and reported, not fatal to a corpus run.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .conllio import read_labeled_file, write_labeled_file
from .errors import DataFormatError

logger = logging.getLogger(__name__)

KEEP = "KEEP"
DEL = "DEL"
COMPRESSION_LABELS = (KEEP, DEL)


@dataclass(frozen=True)
class SentencePair:
    source: list[str]
    compression: list[str]


@dataclass
class LabeledSentence:
    tokens: list[str]
    labels: dict[str, list[str]] = field(default_factory=dict)

    def __post_init__(self):
        for task, labs in self.labels.items():
            if len(labs) != len(self.tokens):
                raise DataFormatError(
                    f"task {task!r}: {len(labs)} labels for {len(self.tokens)} tokens"
                )


@dataclass(frozen=True)
class CorpusStats:
    sentence_count: int
    mean_sentence_length: float
    type_token_ratio: float
    deletion_rate: float


class AlignmentError(DataFormatError):
    """Compression token with no admissible source match."""


def _leftmost_embedding(source, compression, key) -> list[int] | None:
    """Greedy leftmost embedding of compression into source under ``key``.

    Greedy matching is complete for subsequence embedding and yields the
    lexicographically smallest position vector, which is also a maximal
    (LCS-length) alignment whenever the full compression embeds.
    """
    positions = []
    i = 0
    for token in compression:
        want = key(token)
        while i < len(source) and key(source[i]) != want:
            i += 1
        if i == len(source):
            return None
        positions.append(i)
        i += 1
    return positions


def align_and_label(pair: SentencePair) -> LabeledSentence:
    """Label source tokens KEEP where the compression aligns, DEL elsewhere."""
    if not pair.source or not pair.compression:
        raise DataFormatError("source and compression must both be nonempty")
    positions = _leftmost_embedding(pair.source, pair.compression, key=str)
    if positions is None:
        positions = _leftmost_embedding(pair.source, pair.compression, key=str.lower)
    if positions is None:
        matched = _longest_prefix_embedding(pair.source, pair.compression)
        bad = pair.compression[matched]
        raise AlignmentError(
            f"compression token {bad!r} (index {matched}) does not embed in the source; "
            f"pair rejected"
        )
    keep = set(positions)
    labels = [KEEP if i in keep else DEL for i in range(len(pair.source))]
    return LabeledSentence(list(pair.source), {"compression": labels})


def _longest_prefix_embedding(source, compression) -> int:
    """Index of the first compression token unmatched even case-insensitively."""
    i = 0
    matched = 0
    for token in compression:
        want = token.lower()
        while i < len(source) and source[i].lower() != want:
            i += 1
        if i == len(source):
            break
        matched += 1
        i += 1
    return min(matched, len(compression) - 1)


def corpus_stats(corpus: list[LabeledSentence], task: str = "compression") -> CorpusStats:
    """Sentence count, mean source length, type/token ratio, deletion rate."""
    if not corpus:
        raise DataFormatError("empty corpus")
    total_tokens = 0
    types = set()
    deleted = 0
    for sent in corpus:
        total_tokens += len(sent.tokens)
        types.update(sent.tokens)
        labels = sent.labels.get(task)
        if labels is None:
            raise DataFormatError(f"sentence is missing {task!r} labels")
        deleted += sum(1 for lab in labels if lab == DEL)
    n = len(corpus)
    return CorpusStats(
        sentence_count=n,
        mean_sentence_length=total_tokens / n,
        type_token_ratio=len(types) / total_tokens,
        deletion_rate=deleted / total_tokens,
    )


@dataclass
class CorpusBuildResult:
    sentences: list[LabeledSentence]
    rejected: list[tuple[int, str]]  # (line number, diagnostic)


def parse_parallel_file(path) -> list[tuple[int, SentencePair]]:
    """Read ``source<TAB>compression`` lines; returns (line number, pair)."""
    path = Path(path)
    pairs = []
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 'source<TAB>compression', "
                    f"got {len(fields)} fields"
                )
            source, compression = fields[0].split(), fields[1].split()
            if not source or not compression:
                raise DataFormatError(f"{path}:{lineno}: empty source or compression side")
            pairs.append((lineno, SentencePair(source, compression)))
    if not pairs:
        logger.warning("%s: no sentence pairs found", path)
    return pairs


def label_corpus(pairs: list[tuple[int, SentencePair]]) -> CorpusBuildResult:
    """Align every pair, collecting rejections instead of failing the run."""
    sentences = []
    rejected = []
    for lineno, pair in pairs:
        try:
            sentences.append(align_and_label(pair))
        except AlignmentError as exc:
            rejected.append((lineno, str(exc)))
    if rejected:
        logger.warning("rejected %d of %d pairs", len(rejected), len(pairs))
    return CorpusBuildResult(sentences, rejected)


def parse_labeled_file(path, task: str = "compression",
                       allowed_labels=None) -> list[LabeledSentence]:
    """Read a token-label corpus as sentences labeled under ``task``."""
    path = Path(path)
    sentences = []
    for tokens, labels in read_labeled_file(path):
        if allowed_labels is not None:
            for lab in labels:
                if lab not in allowed_labels:
                    raise DataFormatError(
                        f"{path}: label {lab!r} not in {sorted(allowed_labels)}"
                    )
        sentences.append(LabeledSentence(tokens, {task: labels}))
    return sentences


def write_labeled_corpus(path, corpus: list[LabeledSentence],
                         task: str = "compression") -> None:
    write_labeled_file(path, [(s.tokens, s.labels[task]) for s in corpus])


def keep_projection(sentence: LabeledSentence, task: str = "compression") -> list[str]:
    """Source tokens labeled KEEP, in order (the decoded compression)."""
    return [tok for tok, lab in zip(sentence.tokens, sentence.labels[task]) if lab == KEEP]
