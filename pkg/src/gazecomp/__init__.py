"""Multi-task bi-LSTM sentence compression with eye-tracking reading measures.

A small numpy-based lab: reverse-mode autodiff, stacked bi-LSTMs, gaze
measure extraction and binning, deletion-label derivation, three
multi-task architectures, and token-level evaluation.
"""

from .autodiff import (
    GradCheckResult,
    Parameter,
    Tape,
    Tensor,
    finite_difference_check,
    sgd_step,
    zero_grads,
)
from .compression import (
    DEL,
    KEEP,
    CorpusStats,
    LabeledSentence,
    SentencePair,
    align_and_label,
    corpus_stats,
    keep_projection,
    label_corpus,
    parse_labeled_file,
    parse_parallel_file,
    write_labeled_corpus,
)
from .embeddings import (
    EmbeddingMatrix,
    Vocabulary,
    load_embeddings,
    lookup,
    random_embeddings,
)
from .errors import (
    ConfigError,
    DataFormatError,
    GazecompError,
    NumericError,
    ShapeError,
    TapeError,
)
from .evaluation import EvalReport, summary_metrics, token_f1
from .gaze import (
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
from .lstm import LstmParams, init_lstm_params, lstm_step, run_bilstm_layer, stack_forward
from .model import (
    ArchitectureConfig,
    Model,
    TaskSpec,
    TrainingDiverged,
    TrainLog,
    build_model,
    evaluate_compression,
    forward_task,
    predict_compression,
    train,
    train_step,
)
from .serialize import load_model, save_model

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
