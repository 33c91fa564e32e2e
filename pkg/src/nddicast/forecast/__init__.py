"""TD-CNN model, training loop and the early/late NDDI workflows."""

from .model import REFERENCE, ModelConfig, TdCnnModel, predict_next_frame
from .training import History, TrainConfig, evaluate_loss, train
from .workflows import (
    Comparison,
    compare_workflows,
    compare_workflows_detailed,
    early_stage_predict,
    evaluate_workflows,
    late_stage_predict,
)

__all__ = [
    "REFERENCE",
    "Comparison",
    "History",
    "ModelConfig",
    "TdCnnModel",
    "TrainConfig",
    "compare_workflows",
    "compare_workflows_detailed",
    "early_stage_predict",
    "evaluate_loss",
    "evaluate_workflows",
    "late_stage_predict",
    "predict_next_frame",
    "train",
]
