"""Pre-trained word vectors, the vocabulary, and token-to-vector lookup.

File format: one ``word v1 ... vD`` line per word, space-separated; an
optional leading ``<count> <dim>`` header is detected and skipped. The UNK
row is the arithmetic mean of all loaded vectors unless the file already
provides the UNK token.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Parameter
from .errors import DataFormatError

logger = logging.getLogger(__name__)

UNK = "<unk>"


@dataclass
class Vocabulary:
    index: dict[str, int]  # dense in [0, size)
    embedding_dim: int
    unk_token: str = UNK

    @property
    def size(self) -> int:
        return len(self.index)

    def lookup_index(self, token: str, lowercase_fallback: bool = False) -> int:
        idx = self.index.get(token)
        if idx is None and lowercase_fallback:
            idx = self.index.get(token.lower())
        if idx is None:
            idx = self.index[self.unk_token]
        return idx


@dataclass
class EmbeddingMatrix:
    param: Parameter  # (vocab size, embedding_dim)
    trainable: bool = False


def load_embeddings(path, expected_dim: int | None = None) -> tuple[Vocabulary, EmbeddingMatrix]:
    path = Path(path)
    words: list[str] = []
    index: dict[str, int] = {}
    vectors: list[list[float]] = []
    dim: int | None = None
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split()
            if lineno == 1 and len(fields) == 2 and _all_ints(fields):
                continue  # count/dim header
            word, values = fields[0], fields[1:]
            if not values:
                raise DataFormatError(f"{path}:{lineno}: no vector values for {word!r}")
            if dim is None:
                dim = len(values)
                if expected_dim is not None and dim != expected_dim:
                    raise DataFormatError(
                        f"{path}:{lineno}: vectors are {dim}-dimensional, expected {expected_dim}"
                    )
            elif len(values) != dim:
                raise DataFormatError(
                    f"{path}:{lineno}: {len(values)} values, expected {dim}"
                )
            if word in index:
                logger.warning("%s:%d: duplicate word %r, keeping first", path, lineno, word)
                continue
            try:
                vec = [float(v) for v in values]
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-numeric vector value") from None
            index[word] = len(words)
            words.append(word)
            vectors.append(vec)
    if not vectors:
        raise DataFormatError(f"{path}: no embedding vectors found")

    matrix = np.asarray(vectors, dtype=np.float64)
    if UNK in index:
        logger.info("%s provides its own %s row", path, UNK)
    else:
        index[UNK] = matrix.shape[0]
        matrix = np.vstack([matrix, matrix.mean(axis=0)])
    vocab = Vocabulary(index, matrix.shape[1])
    return vocab, EmbeddingMatrix(Parameter("embeddings", matrix), trainable=False)


def _all_ints(fields) -> bool:
    try:
        [int(f) for f in fields]
        return True
    except ValueError:
        return False


def random_embeddings(tokens, dim: int, rng: np.random.Generator,
                      trainable: bool = True) -> tuple[Vocabulary, EmbeddingMatrix]:
    """Vocabulary over the given tokens with uniform(-0.1, 0.1) vectors."""
    vocab_tokens = sorted(set(tokens) - {UNK})
    index = {tok: i for i, tok in enumerate(vocab_tokens)}
    index[UNK] = len(index)
    matrix = rng.uniform(-0.1, 0.1, size=(len(index), dim))
    vocab = Vocabulary(index, dim)
    return vocab, EmbeddingMatrix(Parameter("embeddings", matrix), trainable=trainable)


def lookup(tokens, vocab: Vocabulary, matrix: EmbeddingMatrix,
           lowercase_fallback: bool = False) -> list[np.ndarray]:
    """Map tokens to column vectors; unknown tokens get the UNK row."""
    out = []
    for token in tokens:
        idx = vocab.lookup_index(token, lowercase_fallback)
        out.append(matrix.param.value[idx].reshape(-1, 1).copy())
    return out
