"""Acoustic model with an SSL-representation reconstruction branch, plus the
frame-rate repeater, synthetic corpus tooling, training loop, and metrics."""

from . import align, config, evaluate, features, model, nncore, train
from .config import ModelConfig
from .model import AcousticModel, Batch, LossBreakdown, build_model

__version__ = "0.1.0"

__all__ = [
    "AcousticModel",
    "Batch",
    "LossBreakdown",
    "ModelConfig",
    "align",
    "build_model",
    "config",
    "evaluate",
    "features",
    "model",
    "nncore",
    "train",
]
