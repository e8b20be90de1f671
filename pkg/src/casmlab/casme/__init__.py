"""Classifier-agnostic saliency training: objectives, classifier pool and training loops."""

from .calibrate import CalibrationResult, calibrate_lambda, probe_coverage
from .objectives import (
    ScoreConfig,
    ScoreTerms,
    masked_class_loss,
    masked_out,
    mixed_class_loss,
    score,
    score_from_mask,
    score_terms,
)
from .pool import ClassifierPool, Thinning
from .train import (
    TrainConfig,
    TrainResult,
    accuracy,
    metrics_csv,
    predict,
    pretrain_classifier,
    restore_training_checkpoint,
    save_training_checkpoint,
    train_baseline,
    train_casme,
)

__all__ = [
    "CalibrationResult",
    "ClassifierPool",
    "ScoreConfig",
    "ScoreTerms",
    "Thinning",
    "TrainConfig",
    "TrainResult",
    "accuracy",
    "calibrate_lambda",
    "masked_class_loss",
    "masked_out",
    "metrics_csv",
    "mixed_class_loss",
    "predict",
    "pretrain_classifier",
    "probe_coverage",
    "restore_training_checkpoint",
    "save_training_checkpoint",
    "score",
    "score_from_mask",
    "score_terms",
    "train_baseline",
    "train_casme",
]
