"""Synthetic data generators for the self-test and verification suites.

The trend dataset builds phrase-structured sentences where deletion is a
structural rule (every phrase after the second is dropped) and the
auxiliary task marks phrase boundaries, so boundary supervision is
informative about deletions without spelling them out. Gaze streams,
compression pairs, and plain labeled corpora are generic randomized
fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .compression import DEL, KEEP, LabeledSentence, SentencePair
from .gaze import FixationEvent

AUX_BOUNDARY = "B"
AUX_INSIDE = "I"
AUX_LABELS = (AUX_BOUNDARY, AUX_INSIDE)

_BOUNDARY_WORDS = [f"p{i}" for i in range(6)]
_CONTENT_WORDS = [f"w{i}" for i in range(80)]


def trend_vocabulary() -> list[str]:
    return _BOUNDARY_WORDS + _CONTENT_WORDS


def _phrase_sentence(rng: np.random.Generator, kept_phrases: int = 2):
    n_phrases = int(rng.integers(2, 7))
    tokens: list[str] = []
    comp: list[str] = []
    aux: list[str] = []
    for phrase_idx in range(n_phrases):
        label = KEEP if phrase_idx < kept_phrases else DEL
        head = _BOUNDARY_WORDS[rng.integers(len(_BOUNDARY_WORDS))]
        body_len = int(rng.integers(1, 5))
        body = [_CONTENT_WORDS[rng.integers(len(_CONTENT_WORDS))] for _ in range(body_len)]
        tokens.extend([head] + body)
        comp.extend([label] * (1 + body_len))
        aux.extend([AUX_BOUNDARY] + [AUX_INSIDE] * body_len)
    return tokens, comp, aux


@dataclass
class TrendDataset:
    train: list[LabeledSentence]  # compression labels
    dev: list[LabeledSentence]  # compression labels
    aux: list[LabeledSentence]  # boundary labels under the "ccg" task
    vocab_tokens: list[str]
    aux_labels: list[str]


def boundary_trend_dataset(seed: int, n_train: int = 100, n_dev: int = 200,
                           n_aux: int = 400) -> TrendDataset:
    """Compression corpus plus a disjoint boundary-labeled auxiliary corpus."""
    rng = np.random.default_rng([seed, 0xB0])
    train = []
    for _ in range(n_train):
        tokens, comp, _ = _phrase_sentence(rng)
        train.append(LabeledSentence(tokens, {"compression": comp}))
    dev = []
    for _ in range(n_dev):
        tokens, comp, _ = _phrase_sentence(rng)
        dev.append(LabeledSentence(tokens, {"compression": comp}))
    aux = []
    for _ in range(n_aux):
        tokens, _, bounds = _phrase_sentence(rng)
        aux.append(LabeledSentence(tokens, {"ccg": bounds}))
    return TrendDataset(train, dev, aux, trend_vocabulary(), list(AUX_LABELS))


def random_compression_corpus(n_sentences: int, rng: np.random.Generator,
                              vocab_size: int = 15, min_len: int = 4,
                              max_len: int = 8) -> list[LabeledSentence]:
    """Random sentences with arbitrary KEEP/DEL labels (memorization fodder)."""
    words = [f"t{i}" for i in range(vocab_size)]
    corpus = []
    for _ in range(n_sentences):
        n = int(rng.integers(min_len, max_len + 1))
        tokens = [words[rng.integers(vocab_size)] for _ in range(n)]
        labels = [KEEP if rng.integers(2) else DEL for _ in range(n)]
        corpus.append(LabeledSentence(tokens, {"compression": labels}))
    return corpus


def random_sentence_pairs(n_pairs: int, rng: np.random.Generator,
                          max_len: int = 12, alphabet: str = "abcd") -> list[SentencePair]:
    """Pairs whose compression is a true subsequence of the source."""
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(1, max_len + 1))
        source = [alphabet[rng.integers(len(alphabet))] for _ in range(n)]
        k = int(rng.integers(1, n + 1))
        idx = sorted(rng.choice(n, size=k, replace=False))
        pairs.append(SentencePair(source, [source[i] for i in idx]))
    return pairs


def random_fixation_streams(n_streams: int, rng: np.random.Generator,
                            max_fixations: int = 30, max_words: int = 10):
    """Per-stream lists of FixationEvents with random order and durations."""
    streams = []
    for s in range(n_streams):
        n = int(rng.integers(0, max_fixations + 1))
        events = [
            FixationEvent("r", f"s{s}", int(rng.integers(max_words)),
                          int(rng.integers(1, 1000)), order)
            for order in range(n)
        ]
        streams.append(events)
    return streams
