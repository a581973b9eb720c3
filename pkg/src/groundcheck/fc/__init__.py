from .checkpoint import Checkpoint, CheckpointError
from .config import MODES, FCConfig
from .losses import batched_supcon, box_giou, regression_loss, supcon_loss
from .model import FCModel
from .train import (
    Prediction,
    PredictionError,
    TrainingDiverged,
    evaluate_encoded,
    predict,
    train,
)

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "FCConfig",
    "FCModel",
    "MODES",
    "Prediction",
    "PredictionError",
    "TrainingDiverged",
    "batched_supcon",
    "box_giou",
    "evaluate_encoded",
    "predict",
    "regression_loss",
    "supcon_loss",
    "train",
]
