"""Assemble training inputs (task corpora, embeddings, model) from a flat
configuration mapping.

Path-valued keys live beside the architecture keys in one config file;
``gaze_train`` accepts comma-separated paths and glob patterns. When the
globbed files carry a ``.first_pass.`` / ``.regression.`` marker in their
name (as written by the gaze exporter), only the configured measure's
files are used.
"""

from __future__ import annotations

import glob
import logging
import zlib
from pathlib import Path

import numpy as np

from .compression import COMPRESSION_LABELS, LabeledSentence, parse_labeled_file
from .embeddings import EmbeddingMatrix, Vocabulary, load_embeddings, random_embeddings
from .errors import ConfigError, DataFormatError
from .model import (
    GAZE_LABELS,
    GAZE_MEASURES,
    TASK_CCG,
    TASK_COMPRESSION,
    TASK_GAZE,
    ArchitectureConfig,
    Model,
    build_model,
)

logger = logging.getLogger(__name__)

PATH_KEYS = frozenset((
    "embeddings", "compression_train", "compression_dev",
    "ccg_train", "gaze_train", "out", "log",
))


def split_config_mapping(mapping: dict[str, str]) -> tuple[dict[str, str], dict[str, str]]:
    """Separate architecture keys from data-path keys; reject unknown keys."""
    arch, paths = {}, {}
    for key, value in mapping.items():
        if key in ArchitectureConfig.ARCH_KEYS:
            arch[key] = value
        elif key in PATH_KEYS:
            paths[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    return arch, paths


def expand_gaze_paths(spec: str, measure: str) -> list[Path]:
    """Expand comma-separated paths/globs, filtering by measure marker."""
    if measure not in GAZE_MEASURES:
        raise ConfigError(f"unknown gaze measure {measure!r}")
    candidates: list[Path] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if any(ch in part for ch in "*?["):
            hits = sorted(glob.glob(part))
            if not hits:
                raise DataFormatError(f"gaze_train pattern {part!r} matched no files")
            candidates.extend(Path(h) for h in hits)
        else:
            candidates.append(Path(part))
    marked = [p for p in candidates
              if any(f".{m}." in p.name for m in GAZE_MEASURES)]
    if marked:
        keep = [p for p in candidates if f".{measure}." in p.name]
        dropped = [p for p in marked if p not in keep]
        if dropped:
            logger.info("ignoring %d gaze files of the other measure", len(dropped))
        unmarked = [p for p in candidates if p not in marked]
        candidates = keep + unmarked
    if not candidates:
        raise DataFormatError(f"gaze_train {spec!r} selected no files for {measure}")
    return candidates


class TrainingSetup:
    def __init__(self, model: Model, task_datasets, dev, out: Path, log: Path):
        self.model = model
        self.task_datasets = task_datasets
        self.dev = dev
        self.out = out
        self.log = log


def load_training_setup(mapping: dict[str, str]) -> TrainingSetup:
    """Build the model and task datasets described by a config mapping."""
    arch_map, path_map = split_config_mapping(mapping)
    config = ArchitectureConfig.from_mapping(arch_map)

    if "compression_train" not in path_map:
        raise ConfigError("config must set compression_train")
    task_datasets: dict[str, list[LabeledSentence]] = {}
    task_datasets[TASK_COMPRESSION] = parse_labeled_file(
        path_map["compression_train"], task=TASK_COMPRESSION,
        allowed_labels=set(COMPRESSION_LABELS),
    )
    if not task_datasets[TASK_COMPRESSION]:
        raise DataFormatError(f"{path_map['compression_train']}: empty training corpus")

    dev = None
    if "compression_dev" in path_map:
        dev = parse_labeled_file(path_map["compression_dev"], task=TASK_COMPRESSION,
                                 allowed_labels=set(COMPRESSION_LABELS))

    label_vocabs: dict[str, list[str]] = {}
    if "ccg_train" in path_map:
        ccg = parse_labeled_file(path_map["ccg_train"], task=TASK_CCG)
        if ccg:
            task_datasets[TASK_CCG] = ccg
            label_vocabs[TASK_CCG] = sorted({lab for s in ccg for lab in s.labels[TASK_CCG]})

    if "gaze_train" in path_map:
        gaze_sents: list[LabeledSentence] = []
        for path in expand_gaze_paths(path_map["gaze_train"], config.gaze_measure):
            gaze_sents.extend(parse_labeled_file(path, task=TASK_GAZE,
                                                 allowed_labels=set(GAZE_LABELS)))
        if gaze_sents:
            task_datasets[TASK_GAZE] = gaze_sents

    vocab, embeddings = _resolve_embeddings(config, path_map, task_datasets, dev)
    model = build_model(config, vocab, embeddings, label_vocabs)
    out = Path(path_map.get("out", "model.bin"))
    log = Path(path_map.get("log", str(out) + ".log"))
    return TrainingSetup(model, task_datasets, dev, out, log)


def _resolve_embeddings(config: ArchitectureConfig, path_map, task_datasets,
                        dev) -> tuple[Vocabulary, EmbeddingMatrix]:
    if "embeddings" in path_map:
        return load_embeddings(path_map["embeddings"], expected_dim=config.embedding_dim)
    tokens: set[str] = set()
    for sentences in task_datasets.values():
        for s in sentences:
            tokens.update(s.tokens)
    if dev:
        for s in dev:
            tokens.update(s.tokens)
    logger.info("no embeddings file configured; using random vectors over "
                "%d corpus types", len(tokens))
    rng = np.random.default_rng([config.seed, zlib.crc32(b"embeddings")])
    return random_embeddings(sorted(tokens), config.embedding_dim, rng,
                             trainable=config.fine_tune_embeddings)
