"""Preference-pair fine-tuning for a small passage-scoring cross-encoder."""

from .data import PreferencePair, load_prefs, make_separable_pairs, split_holdout
from .errors import DataError, TrainerError, TrainingError
from .model import TinyCrossEncoder, load_artifact, save_artifact
from .serve import ScoreServer
from .train import (
    TrainConfig,
    TrainResult,
    build_model,
    evaluate_loss,
    mean_reciprocal_rank,
    train,
)

__all__ = [
    "DataError",
    "PreferencePair",
    "ScoreServer",
    "TinyCrossEncoder",
    "TrainConfig",
    "TrainResult",
    "TrainerError",
    "TrainingError",
    "build_model",
    "evaluate_loss",
    "load_artifact",
    "load_prefs",
    "make_separable_pairs",
    "mean_reciprocal_rank",
    "save_artifact",
    "split_holdout",
    "train",
]
