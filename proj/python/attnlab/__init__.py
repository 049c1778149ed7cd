from ._attnlab import (
    Arch,
    Corpus,
    Document,
    Error,
    Hyperparams,
    IoError,
    Model,
    NonFiniteError,
    ParseError,
    ShapeError,
    VocabularyMismatch,
    enumerate_grid,
    label_matrix,
    load_checkpoint,
    load_corpus,
    load_corpus_like,
    macro_f1,
    micro_f1,
    precision_at_n,
    run_cli,
    train,
)

__all__ = [
    "Arch",
    "Corpus",
    "Document",
    "Error",
    "Hyperparams",
    "IoError",
    "Model",
    "NonFiniteError",
    "ParseError",
    "ShapeError",
    "VocabularyMismatch",
    "enumerate_grid",
    "label_matrix",
    "load_checkpoint",
    "load_corpus",
    "load_corpus_like",
    "macro_f1",
    "micro_f1",
    "precision_at_n",
    "run_cli",
    "train",
]
