"""The three bi-LSTM architectures, the random-task training loop, and
compression prediction.

All architectures share a three-layer (configurable) bi-LSTM stack over an
embedding layer; they differ only in which prediction heads exist and at
which layer each head attaches:

    baseline    compression and CCG heads at the outer layer
    multitask   compression, CCG, and gaze heads at the outer layer
    cascaded    compression at the outer layer, CCG and gaze at layer 0

Training picks a task uniformly at random, then an instance of that task,
and applies one SGD step whose updates are restricted to the task's head,
the bi-LSTM layers at or below its attachment, and (only when fine-tuning
is enabled) the embeddings. That restriction is what makes the cascaded
wiring leave the upper layers untouched on auxiliary updates.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .autodiff import Parameter, Tape, Tensor, sgd_step
from .compression import COMPRESSION_LABELS, LabeledSentence
from .embeddings import EmbeddingMatrix, Vocabulary
from .errors import ConfigError, NumericError
from .evaluation import token_f1
from .lstm import LstmParams, init_lstm_params, name_keyed_rng, stack_forward

logger = logging.getLogger(__name__)

TASK_COMPRESSION = "compression"
TASK_CCG = "ccg"
TASK_GAZE = "gaze"
GAZE_LABELS = ("0", "1", "2", "3", "4", "5")
ARCHITECTURES = ("baseline", "multitask", "cascaded")
GAZE_MEASURES = ("first_pass", "regression")

# ccg head shape when no supertag inventory is supplied; the head then
# exists (parameter count stays architecture-determined) but is never trained
PLACEHOLDER_CCG_LABELS = ("_0", "_1")


@dataclass
class ArchitectureConfig:
    architecture: str = "baseline"
    layers: int = 3
    hidden_size: int = 50  # per direction
    embedding_dim: int = 50
    gaze_measure: str = "first_pass"
    seed: int = 0
    learning_rate: float = 0.1
    iterations: int = 30
    clip_norm: float | None = None
    fine_tune_embeddings: bool = False
    lowercase_fallback: bool = False

    def validate(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.gaze_measure not in GAZE_MEASURES:
            raise ConfigError(f"unknown gaze_measure {self.gaze_measure!r}")
        for name in ("layers", "hidden_size", "embedding_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive when set")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def task_layout(self) -> dict[str, int]:
        """Task name -> attachment layer index for this architecture."""
        outer = self.layers - 1
        if self.architecture == "baseline":
            return {TASK_COMPRESSION: outer, TASK_CCG: outer}
        if self.architecture == "multitask":
            return {TASK_COMPRESSION: outer, TASK_CCG: outer, TASK_GAZE: outer}
        return {TASK_COMPRESSION: outer, TASK_CCG: 0, TASK_GAZE: 0}

    _BOOL = {"true": True, "false": False, "1": True, "0": False}

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "ArchitectureConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            try:
                if key in ("layers", "hidden_size", "embedding_dim", "seed", "iterations"):
                    kwargs[key] = int(raw)
                elif key == "learning_rate":
                    kwargs[key] = float(raw)
                elif key == "clip_norm":
                    kwargs[key] = None if raw.lower() in ("", "none") else float(raw)
                elif key in ("fine_tune_embeddings", "lowercase_fallback"):
                    kwargs[key] = cls._BOOL[raw.lower()]
                else:
                    kwargs[key] = raw
            except (ValueError, KeyError):
                raise ConfigError(f"bad value {raw!r} for configuration key {key!r}") from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                value = "none"
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    ARCH_KEYS = frozenset((
        "architecture", "layers", "hidden_size", "embedding_dim", "gaze_measure",
        "seed", "learning_rate", "iterations", "clip_norm",
        "fine_tune_embeddings", "lowercase_fallback",
    ))


@dataclass
class TaskSpec:
    name: str
    label_vocab: list[str]
    attach_layer: int
    w: Parameter  # (labels, 2 * hidden)
    b: Parameter  # (labels, 1)
    label_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.label_index = {lab: i for i, lab in enumerate(self.label_vocab)}

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]


class Model:
    def __init__(self, config: ArchitectureConfig, vocab: Vocabulary,
                 embeddings: EmbeddingMatrix,
                 layers: list[tuple[LstmParams, LstmParams]],
                 tasks: dict[str, TaskSpec]) -> None:
        self.config = config
        self.vocab = vocab
        self.embeddings = embeddings
        self.layers = layers
        self.tasks = tasks

    def parameters(self) -> list[Parameter]:
        out = [self.embeddings.param]
        for fwd, bwd in self.layers:
            out.extend(fwd.parameters())
            out.extend(bwd.parameters())
        for name in sorted(self.tasks):
            out.extend(self.tasks[name].parameters())
        return out

    def scope_for_task(self, task_name: str) -> frozenset[str]:
        """Parameter names updated by a training step of this task."""
        spec = self.tasks[task_name]
        names = {spec.w.name, spec.b.name}
        for fwd, bwd in self.layers[: spec.attach_layer + 1]:
            names.update(p.name for p in fwd.parameters())
            names.update(p.name for p in bwd.parameters())
        if self.embeddings.trainable:
            names.add(self.embeddings.param.name)
        return frozenset(names)

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            p.value[...] = snapshot[p.name]


def build_model(config: ArchitectureConfig, vocab: Vocabulary,
                embeddings: EmbeddingMatrix,
                label_vocabs: dict[str, list[str]] | None = None) -> Model:
    """Assemble an architecture with deterministic seed-keyed initialization.

    ``label_vocabs`` may supply the CCG tag inventory (sorted order is
    preserved as given); compression and gaze vocabularies are fixed. The
    embedding trainability follows ``config.fine_tune_embeddings``.
    """
    config.validate()
    label_vocabs = dict(label_vocabs or {})
    if vocab.embedding_dim != config.embedding_dim:
        raise ConfigError(
            f"embeddings are {vocab.embedding_dim}-dimensional but config says "
            f"{config.embedding_dim}"
        )
    if embeddings.param.value.shape != (vocab.size, vocab.embedding_dim):
        raise ConfigError(
            f"embedding matrix shape {embeddings.param.value.shape} does not match "
            f"vocabulary ({vocab.size}, {vocab.embedding_dim})"
        )
    forced = {
        TASK_COMPRESSION: list(COMPRESSION_LABELS),
        TASK_GAZE: list(GAZE_LABELS),
    }
    for name, want in forced.items():
        if name in label_vocabs and list(label_vocabs[name]) != want:
            raise ConfigError(f"label vocabulary of task {name!r} must be {want}")

    rng_for = name_keyed_rng(config.seed)
    embeddings.trainable = config.fine_tune_embeddings

    layers = []
    in_width = config.embedding_dim
    for i in range(config.layers):
        fwd = init_lstm_params(f"layer{i}.fwd", in_width, config.hidden_size, rng_for)
        bwd = init_lstm_params(f"layer{i}.bwd", in_width, config.hidden_size, rng_for)
        layers.append((fwd, bwd))
        in_width = 2 * config.hidden_size

    tasks: dict[str, TaskSpec] = {}
    head_width = 2 * config.hidden_size
    for name, attach in config.task_layout().items():
        if name in forced:
            labels = forced[name]
        else:
            labels = list(label_vocabs.get(name, PLACEHOLDER_CCG_LABELS))
        if len(labels) < 2:
            raise ConfigError(f"task {name!r} needs at least 2 labels, got {labels}")
        w_name, b_name = f"task.{name}.W", f"task.{name}.b"
        w = Parameter(w_name, init_head_weight(rng_for(w_name), len(labels), head_width))
        b = Parameter(b_name, np.zeros((len(labels), 1)))
        tasks[name] = TaskSpec(name, labels, attach, w, b)
    return Model(config, vocab, embeddings, layers, tasks)


def init_head_weight(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-bound, bound, size=(rows, cols))


def _embed_sequence(model: Model, tape: Tape, tokens) -> list[Tensor]:
    cfg = model.config
    indices = [model.vocab.lookup_index(t, cfg.lowercase_fallback) for t in tokens]
    if model.embeddings.trainable:
        leaf = tape.param(model.embeddings.param)
        return [tape.lookup_row(leaf, idx) for idx in indices]
    value = model.embeddings.param.value
    return [tape.const(value[idx].reshape(-1, 1)) for idx in indices]


def _head_logits(tape: Tape, spec: TaskSpec, states: list[Tensor]) -> list[Tensor]:
    w, b = tape.param(spec.w), tape.param(spec.b)
    return [tape.affine(w, h, b) for h in states]


def task_logits(model: Model, tape: Tape, tokens, task_name: str) -> list[Tensor]:
    """Per-token logit columns for one task (stack run only to its layer)."""
    spec = _get_task(model, task_name)
    inputs = _embed_sequence(model, tape, tokens)
    layer_outs = stack_forward(tape, inputs, model.layers[: spec.attach_layer + 1])
    return _head_logits(tape, spec, layer_outs[spec.attach_layer])


def sentence_losses(model: Model, tape: Tape, tokens,
                    gold_by_task: dict[str, list[str]]) -> dict[str, Tensor]:
    """Summed cross-entropy per task over one shared stack evaluation."""
    inputs = _embed_sequence(model, tape, tokens)
    layer_outs = stack_forward(tape, inputs, model.layers)
    losses = {}
    for name, gold in gold_by_task.items():
        spec = _get_task(model, name)
        logits = _head_logits(tape, spec, layer_outs[spec.attach_layer])
        terms = [
            tape.softmax_cross_entropy(lg, spec.label_index[lab])
            for lg, lab in zip(logits, gold)
        ]
        losses[name] = tape.add_n(terms)
    return losses


def _get_task(model: Model, task_name: str) -> TaskSpec:
    spec = model.tasks.get(task_name)
    if spec is None:
        raise ValueError(f"unknown task {task_name!r}; model has {sorted(model.tasks)}")
    return spec


def forward_task(model: Model, tokens, task_name: str) -> np.ndarray:
    """Per-token label distributions, shape (len(tokens), n_labels)."""
    tape = Tape()
    logits = task_logits(model, tape, tokens, task_name)
    rows = []
    for lg in logits:
        z = lg.data[:, 0]
        e = np.exp(z - z.max())
        rows.append(e / e.sum())
    return np.asarray(rows)


def predict_compression(model: Model, tokens) -> list[str]:
    """Argmax KEEP/DEL per token; ties break to the lowest label index."""
    spec = _get_task(model, TASK_COMPRESSION)
    dist = forward_task(model, tokens, TASK_COMPRESSION)
    return [spec.label_vocab[int(np.argmax(row))] for row in dist]


def train_step(model: Model, task_datasets: dict[str, list[LabeledSentence]],
               rng: np.random.Generator) -> tuple[str, float | None]:
    """One random-task SGD update; returns (task name, loss or None if skipped)."""
    names = sorted(task_datasets)
    if not names:
        raise ConfigError("no task datasets given")
    for name in names:
        if not task_datasets[name]:
            raise ConfigError(f"task {name!r} has an empty dataset")
    name = names[rng.integers(len(names))]
    data = task_datasets[name]
    inst = data[rng.integers(len(data))]
    spec = _get_task(model, name)
    gold = inst.labels.get(name)
    if gold is None or len(gold) != len(inst.tokens):
        logger.warning("skipping %s instance with token/label mismatch", name)
        return name, None
    unknown = [lab for lab in gold if lab not in spec.label_index]
    if unknown:
        logger.warning("skipping %s instance with labels outside the task "
                       "vocabulary: %s", name, sorted(set(unknown))[:5])
        return name, None

    tape = Tape()
    logits = task_logits(model, tape, inst.tokens, name)
    terms = [
        tape.softmax_cross_entropy(lg, spec.label_index[lab])
        for lg, lab in zip(logits, gold)
    ]
    loss = tape.add_n(terms)
    loss_value = loss.item()
    if not np.isfinite(loss_value):
        # leave parameters untouched; the caller decides how to abort
        return name, loss_value
    scope = model.scope_for_task(name)
    tape.backward(loss, scope=scope)
    scoped = [p for p in model.parameters() if p.name in scope]
    sgd_step(scoped, model.config.learning_rate, clip_norm=model.config.clip_norm)
    return name, loss_value


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: dict[str, float]
    steps: dict[str, int]
    dev_f1: float | None


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    skipped_steps: int = 0
    best_epoch: int | None = None
    best_dev_f1: float | None = None
    best_params: dict[str, np.ndarray] | None = None
    aborted: bool = False

    def render(self) -> str:
        lines = []
        for rec in self.epochs:
            parts = [f"epoch {rec.epoch}"]
            for task in sorted(rec.mean_loss):
                parts.append(
                    f"{task}: steps={rec.steps[task]} mean_loss={rec.mean_loss[task]!r}"
                )
            if rec.dev_f1 is not None:
                parts.append(f"dev_f1={rec.dev_f1!r}")
            lines.append("\t".join(parts))
        if self.best_epoch is not None:
            lines.append(f"best epoch {self.best_epoch}\tdev_f1={self.best_dev_f1!r}")
        if self.skipped_steps:
            lines.append(f"skipped steps: {self.skipped_steps}")
        if self.aborted:
            lines.append("aborted: non-finite loss; parameters restored to last epoch")
        return "\n".join(lines) + "\n"


class TrainingDiverged(NumericError):
    def __init__(self, message: str, log: TrainLog):
        super().__init__(message)
        self.log = log


def evaluate_compression(model: Model, dev: list[LabeledSentence]) -> float:
    """KEEP-class F1 of compression predictions on a labeled dev set."""
    gold = [s.labels[TASK_COMPRESSION] for s in dev]
    pred = [predict_compression(model, s.tokens) for s in dev]
    return token_f1(gold, pred).f1


def train(model: Model, task_datasets: dict[str, list[LabeledSentence]],
          dev: list[LabeledSentence] | None = None) -> TrainLog:
    """Run the random-task schedule for ``config.iterations`` epochs.

    One epoch is N steps with N the size of the compression training set.
    The model is updated in place; with a dev set, the log also carries the
    best-dev-F1 parameter snapshot. A non-finite loss aborts training with
    the model restored to its state at the end of the previous epoch.
    """
    cfg = model.config
    if not task_datasets.get(TASK_COMPRESSION):
        raise ConfigError("compression training data is required")
    for name in task_datasets:
        _get_task(model, name)
    rng = np.random.default_rng([cfg.seed, zlib.crc32(b"train-schedule")])
    steps_per_epoch = len(task_datasets[TASK_COMPRESSION])
    log = TrainLog()
    last_good = model.snapshot()
    for epoch in range(1, cfg.iterations + 1):
        sums: dict[str, float] = {}
        counts: dict[str, int] = {}
        for _ in range(steps_per_epoch):
            try:
                name, loss = train_step(model, task_datasets, rng)
            except NumericError as exc:
                model.restore(last_good)
                log.aborted = True
                raise TrainingDiverged(
                    f"numeric failure in epoch {epoch}: {exc}; "
                    f"restored parameters from epoch {epoch - 1}", log,
                ) from exc
            if loss is None:
                log.skipped_steps += 1
                continue
            if not np.isfinite(loss):
                model.restore(last_good)
                log.aborted = True
                raise TrainingDiverged(
                    f"non-finite loss in epoch {epoch} on task {name!r}; "
                    f"restored parameters from epoch {epoch - 1}", log,
                )
            sums[name] = sums.get(name, 0.0) + loss
            counts[name] = counts.get(name, 0) + 1
        dev_f1 = evaluate_compression(model, dev) if dev else None
        log.epochs.append(EpochRecord(
            epoch=epoch,
            mean_loss={k: sums[k] / counts[k] for k in sums},
            steps=dict(counts),
            dev_f1=dev_f1,
        ))
        last_good = model.snapshot()
        if dev_f1 is not None and (log.best_dev_f1 is None or dev_f1 > log.best_dev_f1):
            log.best_epoch = epoch
            log.best_dev_f1 = dev_f1
            log.best_params = last_good
    return log


def clone_config(config: ArchitectureConfig, **changes) -> ArchitectureConfig:
    cfg = replace(config, **changes)
    cfg.validate()
    return cfg
