"""Multi-view contrastive entity typing over knowledge graphs."""

from .ablation import (
    MetricsRow,
    metrics_tsv,
    predict_types,
    run_dropping_sweep,
    run_layer_sweep,
    run_view_ablation,
)
from .config import DATASET_PRESETS, TrainConfig
from .data import (
    Corpus,
    CorpusError,
    CorpusStats,
    EXPECTED_STATS,
    KnowledgeGraph,
    ParseError,
    Vocabulary,
    load_corpus_dir,
    toy_corpus,
)
from .evaluation import RankingReport, aggregate, evaluate_model, filtered_rank
from .model import TypingModel
from .training import (
    Checkpoint,
    TrainingDiverged,
    TrainResult,
    load_checkpoint,
    restore_model,
    save_checkpoint,
    train,
)

__all__ = [
    "Checkpoint",
    "Corpus",
    "CorpusError",
    "CorpusStats",
    "EXPECTED_STATS",
    "KnowledgeGraph",
    "MetricsRow",
    "DATASET_PRESETS",
    "ParseError",
    "RankingReport",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "TypingModel",
    "Vocabulary",
    "aggregate",
    "evaluate_model",
    "filtered_rank",
    "load_checkpoint",
    "load_corpus_dir",
    "metrics_tsv",
    "predict_types",
    "restore_model",
    "run_dropping_sweep",
    "run_layer_sweep",
    "run_view_ablation",
    "save_checkpoint",
    "toy_corpus",
    "train",
]

__version__ = "0.1.0"
