"""Training-dynamics difficulty scores and toolkit-format export."""

__version__ = "0.1.0"

from .export import EmbeddingExport, export, write_embedding_file, write_score_csv
from .scores import (
    ScoreTable,
    aum_score,
    canonicalize,
    el2n_score,
    entropy_score,
    forgetting_score,
)
from .trace import TraceError, TrainingTrace, load_trace, save_trace

__all__ = [
    "EmbeddingExport",
    "ScoreTable",
    "TraceError",
    "TrainingTrace",
    "aum_score",
    "canonicalize",
    "el2n_score",
    "entropy_score",
    "export",
    "forgetting_score",
    "load_trace",
    "save_trace",
    "write_embedding_file",
    "write_score_csv",
]
