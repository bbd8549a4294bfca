"""Degradation classifier: activations, optimizers, residual head, estimator."""

from .activations import sigmoid, softmax
from .estimator import (
    Hyperparams,
    ResidualHeadClassifier,
    SweepRow,
    TrainingHistory,
    label_accuracy,
    lr_sweep,
    momentum_sweep,
    train,
)
from .head import ProbabilityVector, ResidualHead, forward, load_model, save_model
from .optim import OptimizerState, adam_step, sgd_momentum_step

__all__ = [
    "Hyperparams",
    "OptimizerState",
    "ProbabilityVector",
    "ResidualHead",
    "ResidualHeadClassifier",
    "SweepRow",
    "TrainingHistory",
    "adam_step",
    "forward",
    "label_accuracy",
    "load_model",
    "lr_sweep",
    "momentum_sweep",
    "save_model",
    "sgd_momentum_step",
    "sigmoid",
    "softmax",
    "train",
]
