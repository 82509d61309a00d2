"""Model files: a versioned flat binary of named blocks plus a sidecar
plain-text manifest (``<path>.manifest``) listing names, shapes, the
configuration, and content hashes.

Binary layout (little-endian): magic ``GZCM``, u32 version, u32 block
count, then blocks of ``u16 name-length, name, u8 type, payload`` where
type 0 is text (u32 byte length + UTF-8) and type 1 is a float64 matrix
(u32 rows, u32 cols, row-major data). Identical models serialize to
identical bytes.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .autodiff import Parameter
from .config import parse_kv_text
from .embeddings import EmbeddingMatrix, Vocabulary
from .errors import DataFormatError
from .lstm import GATES, LstmParams
from .model import ArchitectureConfig, Model, TaskSpec

MAGIC = b"GZCM"
VERSION = 1
_TEXT, _MATRIX = 0, 1


def _text_block(name: str, text: str) -> tuple[str, int, bytes]:
    return name, _TEXT, text.encode("utf-8")

def _matrix_block(name: str, value: np.ndarray) -> tuple[str, int, bytes]:
    rows, cols = value.shape
    payload = struct.pack("<II", rows, cols) + np.ascontiguousarray(value).tobytes()
    return name, _MATRIX, payload


def _model_blocks(model: Model) -> list[tuple[str, int, bytes]]:
    tokens = [None] * model.vocab.size
    for tok, idx in model.vocab.index.items():
        if "\n" in tok or "\r" in tok:
            raise DataFormatError(f"vocabulary token contains a newline: {tok!r}")
        tokens[idx] = tok
    if any(t is None for t in tokens):
        raise DataFormatError("vocabulary indices are not dense")
    blocks = [
        _text_block("config", model.config.to_text()),
        _text_block("vocab", "\n".join(tokens)),
        _text_block("embeddings.trainable", "1" if model.embeddings.trainable else "0"),
    ]
    for name in sorted(model.tasks):
        spec = model.tasks[name]
        blocks.append(_text_block(f"task.{name}.labels", "\n".join(spec.label_vocab)))
        blocks.append(_text_block(f"task.{name}.attach", str(spec.attach_layer)))
    for p in sorted(model.parameters(), key=lambda p: p.name):
        blocks.append(_matrix_block(f"param.{p.name}", p.value))
    return blocks


def save_model(model: Model, path) -> Path:
    """Write the model binary and its manifest; returns the binary path."""
    path = Path(path)
    blocks = _model_blocks(model)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(blocks)))
        for name, kind, payload in blocks:
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", kind))
            if kind == _TEXT:
                f.write(struct.pack("<I", len(payload)))
            f.write(payload)
    manifest_path = Path(str(path) + ".manifest")
    manifest_path.write_text(_manifest_text(model, blocks), encoding="utf-8")
    return path


def _manifest_text(model: Model, blocks) -> str:
    lines = [f"gazecomp model format v{VERSION}", "", "[config]"]
    lines.extend(model.config.to_text().rstrip("\n").splitlines())
    vocab_blob = next(p for n, k, p in blocks if n == "vocab")
    lines += [
        "",
        "[vocab]",
        f"size = {model.vocab.size}",
        f"sha256 = {hashlib.sha256(vocab_blob).hexdigest()}",
        "",
        "[tasks]",
    ]
    for name in sorted(model.tasks):
        spec = model.tasks[name]
        label_blob = "\n".join(spec.label_vocab).encode("utf-8")
        lines.append(
            f"{name}: labels={len(spec.label_vocab)} attach={spec.attach_layer} "
            f"labels_sha256={hashlib.sha256(label_blob).hexdigest()}"
        )
    lines += ["", "[parameters]"]
    for p in sorted(model.parameters(), key=lambda p: p.name):
        lines.append(f"{p.name} {p.value.shape[0]} {p.value.shape[1]}")
    return "\n".join(lines) + "\n"


def _read_blocks(path: Path) -> dict[str, tuple[int, bytes]]:
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise DataFormatError(f"{path}: not a model file (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported model format version {version}")
    blocks: dict[str, tuple[int, bytes]] = {}
    off = 12
    try:
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off : off + name_len].decode("utf-8")
            off += name_len
            kind = data[off]
            off += 1
            if kind == _TEXT:
                (blob_len,) = struct.unpack_from("<I", data, off)
                off += 4
                payload = data[off : off + blob_len]
                off += blob_len
            elif kind == _MATRIX:
                rows, cols = struct.unpack_from("<II", data, off)
                blob_len = 8 + rows * cols * 8
                payload = data[off : off + blob_len]
                off += blob_len
            else:
                raise DataFormatError(f"{path}: unknown block type {kind}")
            if len(payload) != blob_len:
                raise DataFormatError(f"{path}: truncated block {name!r}")
            blocks[name] = (kind, payload)
    except struct.error:
        raise DataFormatError(f"{path}: truncated model file") from None
    return blocks


def _text(blocks, name, path) -> str:
    if name not in blocks or blocks[name][0] != _TEXT:
        raise DataFormatError(f"{path}: missing text block {name!r}")
    return blocks[name][1].decode("utf-8")


def _matrix(blocks, name, path) -> np.ndarray:
    if name not in blocks or blocks[name][0] != _MATRIX:
        raise DataFormatError(f"{path}: missing matrix block {name!r}")
    payload = blocks[name][1]
    rows, cols = struct.unpack_from("<II", payload, 0)
    expected = 8 + rows * cols * 8
    if len(payload) != expected:
        raise DataFormatError(f"{path}: matrix block {name!r} has wrong size")
    return np.frombuffer(payload, dtype="<f8", offset=8).reshape(rows, cols).copy()


def load_model(path) -> Model:
    path = Path(path)
    blocks = _read_blocks(path)
    config = ArchitectureConfig.from_mapping(
        parse_kv_text(_text(blocks, "config", path), origin=f"{path}[config]")
    )
    tokens = _text(blocks, "vocab", path).split("\n")
    vocab = Vocabulary({tok: i for i, tok in enumerate(tokens)}, config.embedding_dim)
    if vocab.size != len(tokens):
        raise DataFormatError(f"{path}: duplicate tokens in vocabulary")
    trainable = _text(blocks, "embeddings.trainable", path) == "1"
    emb_value = _matrix(blocks, "param.embeddings", path)
    if emb_value.shape != (vocab.size, config.embedding_dim):
        raise DataFormatError(f"{path}: embedding matrix shape {emb_value.shape} "
                              f"does not match vocab/config")
    embeddings = EmbeddingMatrix(Parameter("embeddings", emb_value), trainable)

    layers = []
    in_width = config.embedding_dim
    for i in range(config.layers):
        pair = []
        for direction in ("fwd", "bwd"):
            prefix = f"layer{i}.{direction}"
            w, u, b = {}, {}, {}
            for gate in GATES:
                w[gate] = _load_param(blocks, f"{prefix}.W_{gate}",
                                      (config.hidden_size, in_width), path)
                u[gate] = _load_param(blocks, f"{prefix}.U_{gate}",
                                      (config.hidden_size, config.hidden_size), path)
                b[gate] = _load_param(blocks, f"{prefix}.b_{gate}",
                                      (config.hidden_size, 1), path)
            pair.append(LstmParams(in_width, config.hidden_size, w, u, b))
        layers.append((pair[0], pair[1]))
        in_width = 2 * config.hidden_size

    tasks = {}
    for name, attach in config.task_layout().items():
        labels = _text(blocks, f"task.{name}.labels", path).split("\n")
        stored_attach = int(_text(blocks, f"task.{name}.attach", path))
        if stored_attach != attach:
            raise DataFormatError(
                f"{path}: task {name!r} attach layer {stored_attach} does not match "
                f"architecture {config.architecture!r} (expected {attach})"
            )
        w = _load_param(blocks, f"task.{name}.W",
                        (len(labels), 2 * config.hidden_size), path)
        b = _load_param(blocks, f"task.{name}.b", (len(labels), 1), path)
        tasks[name] = TaskSpec(name, labels, attach, w, b)
    return Model(config, vocab, embeddings, layers, tasks)


def _load_param(blocks, name: str, shape: tuple[int, int], path) -> Parameter:
    value = _matrix(blocks, f"param.{name}", path)
    if value.shape != shape:
        raise DataFormatError(
            f"{path}: parameter {name!r} has shape {value.shape}, expected {shape}"
        )
    return Parameter(name, value)
