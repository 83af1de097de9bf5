"""Dual-branch temporal encoder for video human mesh recovery.

A transformer branch summarizes a whole feature window while a modulated
graph-convolution branch refines the frames around the target; their outputs
are fused additively and decoded by an iterative parameter regressor into a
synthetic body.  The package is self-contained: float64 autodiff core,
portable seeded randomness, synthetic data, training harness, metrics,
profiler, and a command-line interface.
"""

from .autodiff import Tensor, backward, replay
from .model import DgtrModel, ModelConfig, fuse_and_regress
from .trainer import TrainConfig, evaluate, lr_schedule, restore_model, train

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "backward",
    "replay",
    "DgtrModel",
    "ModelConfig",
    "fuse_and_regress",
    "TrainConfig",
    "evaluate",
    "lr_schedule",
    "restore_model",
    "train",
    "__version__",
]
