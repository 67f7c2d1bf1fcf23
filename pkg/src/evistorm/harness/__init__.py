"""Experiment orchestration: configs, checkpoints, training, evaluation."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import DataConfig, ExperimentConfig, TrainingConfig
from .evaluation import compare, compute_report, evaluate
from .training import TrainResult, build_dataset, pretrain_transfer, train

__all__ = [
    "Checkpoint",
    "DataConfig",
    "ExperimentConfig",
    "TrainingConfig",
    "TrainResult",
    "build_dataset",
    "compare",
    "compute_report",
    "evaluate",
    "load_checkpoint",
    "pretrain_transfer",
    "save_checkpoint",
    "train",
]
