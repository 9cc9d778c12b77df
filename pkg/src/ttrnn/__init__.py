"""Tweet emotion classification with tensor-train compressed recurrent cells.

The package covers the whole path from raw tweets to a trained
classifier: text cleaning and label mapping, vocabulary building and
encoding, dense and tensor-train recurrent cells on a small reverse-mode
autodiff core, exact-fraction evaluation metrics, deterministic
training with early stopping, and a binary model container.  The
``ttrnn`` console script wires it together for batch use.
"""

from .autodiff import Tape, Variable, backward
from .cells import (
    KINDS,
    TENSORIZED,
    CellSpec,
    CellState,
    CellWeights,
    classify,
    init_state,
    init_weights,
    run_sequence,
    step,
    weight_templates,
)
from .errors import (
    ChecksumMismatch,
    ClassTooSmall,
    DuplicateId,
    EmptyAfterEncoding,
    EmptySequence,
    EmptyTestSet,
    FormatVersionMismatch,
    InvalidRank,
    LabelOutOfRange,
    MissingPrediction,
    NotScalar,
    ParseError,
    ShapeMismatch,
    TtrnnError,
    UnknownEmotion,
)
from .metrics import ConfusionCounts, MetricsReport, evaluate, f1, precision, recall
from .modelio import (
    ModelBundle,
    load_matrix_csv,
    load_model,
    load_ttmatrix,
    save_model,
    save_ttmatrix,
)
from .tensor import DenseTensor
from .textpipe import (
    EMOTIONS,
    PAD_ID,
    SENTIMENTS,
    UNK_ID,
    CleanExample,
    EncodedExample,
    RawExample,
    Vocabulary,
    build_vocab,
    clean_example,
    clean_tweet,
    encode,
    filter_by_sentiment_agreement,
    load_clean_jsonl,
    load_dataset,
    load_predictions,
    map_emotion_to_sentiment,
    tokenize,
    write_clean_jsonl,
)
from .training import (
    TrainConfig,
    adam_step,
    benchmark_pair,
    build_cell_spec,
    clip_gradients,
    evaluate_model,
    model_probabilities,
    prepare_dataset,
    sgd_step,
    split_train_test,
    train,
)
from .ttcore import (
    ModeFactorization,
    TTMatrix,
    choose_factorization,
    compression_ratio,
    jacobi_svd,
    param_count,
    random_tt,
    reconstruct,
    tt_matvec,
    tt_matvec_macs,
    tt_svd,
)

__version__ = "0.1.0"

__all__ = [
    "ChecksumMismatch",
    "ClassTooSmall",
    "CleanExample",
    "CellSpec",
    "CellState",
    "CellWeights",
    "ConfusionCounts",
    "DenseTensor",
    "DuplicateId",
    "EMOTIONS",
    "EmptyAfterEncoding",
    "EmptySequence",
    "EmptyTestSet",
    "EncodedExample",
    "FormatVersionMismatch",
    "InvalidRank",
    "KINDS",
    "LabelOutOfRange",
    "MetricsReport",
    "MissingPrediction",
    "ModeFactorization",
    "ModelBundle",
    "NotScalar",
    "PAD_ID",
    "ParseError",
    "RawExample",
    "SENTIMENTS",
    "ShapeMismatch",
    "TENSORIZED",
    "TTMatrix",
    "Tape",
    "TrainConfig",
    "TtrnnError",
    "UNK_ID",
    "UnknownEmotion",
    "Variable",
    "Vocabulary",
    "adam_step",
    "backward",
    "benchmark_pair",
    "build_cell_spec",
    "build_vocab",
    "choose_factorization",
    "classify",
    "clean_example",
    "clean_tweet",
    "clip_gradients",
    "compression_ratio",
    "encode",
    "evaluate",
    "evaluate_model",
    "f1",
    "filter_by_sentiment_agreement",
    "init_state",
    "init_weights",
    "jacobi_svd",
    "load_clean_jsonl",
    "load_dataset",
    "load_matrix_csv",
    "load_model",
    "load_predictions",
    "load_ttmatrix",
    "map_emotion_to_sentiment",
    "model_probabilities",
    "param_count",
    "precision",
    "prepare_dataset",
    "random_tt",
    "recall",
    "reconstruct",
    "run_sequence",
    "save_model",
    "save_ttmatrix",
    "sgd_step",
    "split_train_test",
    "step",
    "tokenize",
    "train",
    "tt_matvec",
    "tt_matvec_macs",
    "tt_svd",
    "weight_templates",
    "write_clean_jsonl",
]
