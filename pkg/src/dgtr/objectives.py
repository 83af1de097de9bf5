"""Training objectives.

Per-frame supervision combines weighted mean-squared errors on shape
coefficients, joint rotations (compared as rotation matrices so the 6D
parameterization's redundancy is not penalized), 3-D joints, and projected
2-D joints.  A velocity term penalizes the first differences of consecutive
predicted joints against the ground-truth differences, which suppresses
temporal jitter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .body import BODY_IN_DIM, POSE_DIM
from .errors import ContractError


@dataclass
class LossWeights:
    """Weights of the individual loss terms."""

    shape: float = 0.06
    pose: float = 60.0
    joints3d: float = 300.0
    joints2d: float = 300.0
    vel3d: float = 300.0
    vel2d: float = 300.0


@dataclass
class FramePrediction:
    """Differentiable per-frame outputs of the model."""

    params: Tensor    # (157,)
    rotmats: Tensor   # (24, 9)
    joints3d: Tensor  # (24, 3)
    joints2d: Tensor  # (24, 2)
    verts: Tensor     # (431, 3)


@dataclass
class FrameTarget:
    """Ground-truth arrays for one frame."""

    params: np.ndarray    # (157,)
    rotmats: np.ndarray   # (24, 9)
    joints3d: np.ndarray  # (24, 3)
    joints2d: np.ndarray  # (24, 2)


def mse(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error between a tensor and a constant array."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ContractError(f"mse shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - Tensor(target)
    return ad.sum_all(ad.mul(diff, diff)) * (1.0 / target.size)


def supervision_loss(pred: FramePrediction, target: FrameTarget,
                     weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Weighted per-frame loss.

    Returns:
        (total, terms) where ``terms`` maps each unweighted component name to
        its float value for logging.
    """
    shape_term = mse(ad.slice1d(pred.params, POSE_DIM, BODY_IN_DIM),
                     target.params[POSE_DIM:BODY_IN_DIM])
    pose_term = mse(pred.rotmats, target.rotmats)
    j3d_term = mse(pred.joints3d, target.joints3d)
    j2d_term = mse(pred.joints2d, target.joints2d)
    total = (shape_term * weights.shape + pose_term * weights.pose
             + j3d_term * weights.joints3d + j2d_term * weights.joints2d)
    terms = {
        "shape": shape_term.item(),
        "pose": pose_term.item(),
        "joints3d": j3d_term.item(),
        "joints2d": j2d_term.item(),
    }
    return total, terms


def velocity_loss(preds3d: Sequence[Tensor], gts3d: np.ndarray,
                  preds2d: Sequence[Tensor], gts2d: np.ndarray,
                  weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Penalty on first differences of consecutive predicted joints.

    Args:
        preds3d: B tensors of shape (24, 3) for consecutive frames.
        gts3d: Ground-truth joints, shape (B, 24, 3).
        preds2d: B tensors of shape (24, 2).
        gts2d: Ground-truth projections, shape (B, 24, 2).
        weights: Loss weights (vel3d / vel2d entries are used).

    Returns:
        (total, terms) as in ``supervision_loss``.

    Raises:
        ContractError: If fewer than two frames are given or prediction and
            ground-truth frame counts differ.
    """
    n = len(preds3d)
    if n != len(gts3d) or len(preds2d) != len(gts2d) or n != len(preds2d):
        raise ContractError(
            f"velocity_loss frame mismatch: {n} vs {len(gts3d)} (3d), {len(preds2d)} vs {len(gts2d)} (2d)")
    if n < 2:
        raise ContractError(f"velocity_loss needs >= 2 consecutive frames, got {n}")
    scale = 1.0 / (n - 1)
    term3d: Tensor | None = None
    term2d: Tensor | None = None
    for i in range(n - 1):
        d3 = mse(preds3d[i + 1] - preds3d[i], gts3d[i + 1] - gts3d[i])
        d2 = mse(preds2d[i + 1] - preds2d[i], gts2d[i + 1] - gts2d[i])
        term3d = d3 if term3d is None else term3d + d3
        term2d = d2 if term2d is None else term2d + d2
    term3d = term3d * scale
    term2d = term2d * scale
    total = term3d * weights.vel3d + term2d * weights.vel2d
    return total, {"vel3d": term3d.item(), "vel2d": term2d.item()}
