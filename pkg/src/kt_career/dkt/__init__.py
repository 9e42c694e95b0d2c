"""Recurrent knowledge tracing: model, losses, training, checkpoints."""

from .model import (
    DktParams,
    KnowledgeStateSequence,
    SequenceBatch,
    backward_batch,
    forward,
    forward_batch,
)
from .losses import (
    LossBreakdown,
    loss_breakdown,
    loss_prediction,
    loss_total,
    output_grad,
    regularizer_r,
    regularizer_w,
)
from .training import (
    EpochRecord,
    TrainConfig,
    TrainResult,
    evaluate_losses,
    next_step_predictions,
    train,
    write_training_log,
)
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import gradient_check, total_loss

__all__ = [
    "DktParams",
    "KnowledgeStateSequence",
    "SequenceBatch",
    "LossBreakdown",
    "TrainConfig",
    "TrainResult",
    "EpochRecord",
    "backward_batch",
    "evaluate_losses",
    "forward",
    "forward_batch",
    "next_step_predictions",
    "gradient_check",
    "load_checkpoint",
    "loss_breakdown",
    "loss_prediction",
    "loss_total",
    "output_grad",
    "regularizer_r",
    "regularizer_w",
    "save_checkpoint",
    "total_loss",
    "train",
    "write_training_log",
]
