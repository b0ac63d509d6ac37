"""Embedding model, optimizer, checkpoints and the training loop."""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import MlpModel
from .optim import AdamState, adam_step
from .training import EpochRecord, FitResult, TrainConfig, fit, train_epoch

__all__ = [
    "MlpModel",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "EpochRecord",
    "FitResult",
    "train_epoch",
    "fit",
]
