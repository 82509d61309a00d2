"""Token-label corpus files: one ``token<TAB>label`` line per token, blank
line between sentences. The same envelope carries compression labels, CCG
tags, and gaze bins, so the trainer has a single reader."""

from __future__ import annotations

import logging
from pathlib import Path

from .errors import DataFormatError

logger = logging.getLogger(__name__)

Sentence = tuple[list[str], list[str]]  # (tokens, labels)


def read_labeled_file(path) -> list[Sentence]:
    path = Path(path)
    sentences: list[Sentence] = []
    tokens: list[str] = []
    labels: list[str] = []
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                if tokens:
                    sentences.append((tokens, labels))
                    tokens, labels = [], []
                continue
            fields = line.split("\t")
            if len(fields) != 2 or not fields[0] or not fields[1]:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 'token<TAB>label', got {line!r}"
                )
            tokens.append(fields[0])
            labels.append(fields[1])
    if tokens:
        sentences.append((tokens, labels))
    if not sentences:
        logger.warning("%s: no sentences found", path)
    return sentences


def write_labeled_file(path, sentences) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for tokens, labels in sentences:
            if len(tokens) != len(labels):
                raise DataFormatError(
                    f"{path}: token/label length mismatch ({len(tokens)} vs {len(labels)})"
                )
            for token, label in zip(tokens, labels):
                token, label = str(token), str(label)
                if "\t" in token or "\n" in token or "\t" in label or "\n" in label:
                    raise DataFormatError(
                        f"{path}: token or label contains tab/newline: {token!r}/{label!r}"
                    )
                f.write(f"{token}\t{label}\n")
            f.write("\n")
