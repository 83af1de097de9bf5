"""Finite-difference verification of the analytic gradients.

The checker rebuilds the loss from scratch around central differences,

    fd = (f(x + eps) - f(x - eps)) / (2 eps),

and compares against the backward pass entry by entry with the scale-aware
relative error |a - b| / max(|a|, |b|, 1).  Large tensors are subsampled
with a seeded stream; the per-operation unit tests cover every entry of
small operands, so the model-level sweep here is a smoke test of the wiring
rather than the only line of defense.

``corrupt`` deliberately biases one tensor's analytic gradient before the
comparison; it exists so the command-line checker can demonstrate that a
wrong backward formula is actually caught.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Tensor, backward
from .body import PARAM_DIM, POSE_DIM, neutral_params, project_weak_perspective_np, \
    rot6d_to_rotmat_np, synth_forward_np
from .errors import ConfigError
from .model import DgtrModel, ModelConfig, fuse_and_regress
from .objectives import FrameTarget, LossWeights, supervision_loss
from .rng import TAG_GRADCHECK, Stream, substream


def relative_error(a: float, b: float) -> float:
    """|a - b| scaled by max(|a|, |b|, 1)."""
    return abs(a - b) / max(abs(a), abs(b), 1.0)


@dataclass
class CheckRow:
    """Result of checking one parameter tensor."""

    name: str
    entries: int
    max_rel_err: float
    ok: bool


def fd_entry(loss_builder: Callable[[], Tensor], tensor: Tensor,
             flat_index: int, eps: float) -> float:
    """Central-difference derivative of the loss w.r.t. one tensor entry."""
    original = tensor.data.flat[flat_index]
    tensor.data.flat[flat_index] = original + eps
    f_plus = loss_builder().item()
    tensor.data.flat[flat_index] = original - eps
    f_minus = loss_builder().item()
    tensor.data.flat[flat_index] = original
    return (f_plus - f_minus) / (2.0 * eps)


def check_loss_gradients(loss_builder: Callable[[], Tensor], params: dict[str, Tensor],
                         eps: float = 1e-4, threshold: float = 1e-4,
                         entry_cap: int = 64, seed: int = 0,
                         corrupt: str | None = None) -> list[CheckRow]:
    """Compare analytic and finite-difference gradients tensor by tensor.

    Args:
        loss_builder: Zero-argument callable returning a fresh scalar loss
            built from the current parameter values.
        params: Named parameter tensors to check.
        eps: Central-difference step.
        threshold: Maximum allowed relative error.
        entry_cap: Entries checked per tensor (seeded subsample above this).
        seed: Seed of the subsampling stream.
        corrupt: Optional tensor name whose analytic gradient is biased by
            +1 before comparison (must then fail).

    Returns:
        One CheckRow per parameter, in table order.
    """
    if corrupt is not None and corrupt not in params:
        raise ConfigError(f"gradcheck: unknown tensor '{corrupt}'")
    loss = loss_builder()
    for t in params.values():
        t.zero_grad()
    backward(loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.items()}
    if corrupt is not None:
        analytic[corrupt] = analytic[corrupt] + 1.0

    stream = Stream(substream(seed, TAG_GRADCHECK, 0))
    rows = []
    for name, tensor in params.items():
        size = tensor.data.size
        if size <= entry_cap:
            indices = np.arange(size)
        else:
            draws = np.floor(stream.uniform(entry_cap) * size).astype(np.int64)
            indices = np.unique(draws)
        max_rel = 0.0
        for i in indices:
            fd = fd_entry(loss_builder, tensor, int(i), eps)
            max_rel = max(max_rel, relative_error(float(analytic[name].flat[i]), fd))
        rows.append(CheckRow(name, len(indices), max_rel, max_rel < threshold))
    return rows


def probe_model_config() -> ModelConfig:
    """A shrunken model for finite-difference sweeps (same wiring, small dims)."""
    return ModelConfig.create(
        feature_dim=32, seq_len=8,
        gma_layers=2, gma_heads=4, gma_dim=32, gma_ffn_dim=64,
        ldr_window=3, ldr_kernel=3, ldr_hidden=32, ldr_ffn_dim=64,
        reg_hidden=64, reg_iters=2,
    )


def model_probe(seed: int, cfg: ModelConfig | None = None) -> tuple[Callable[[], Tensor], DgtrModel]:
    """A ready-made loss builder over a random window and random target.

    Returns:
        (loss_builder, model); the builder closes over the model's live
        parameter tensors, so editing their data changes later losses.
    """
    if cfg is None:
        cfg = probe_model_config()
    model = DgtrModel(cfg, seed=seed)
    stream = Stream(substream(seed, TAG_GRADCHECK, 1))
    window = 0.5 * stream.normal(cfg.seq_len * cfg.feature_dim).reshape(cfg.seq_len, cfg.feature_dim)

    target_params = neutral_params() + 0.3 * stream.normal(PARAM_DIM)
    target_params[PARAM_DIM - 3] = 1.0 + 0.1 * stream.uniform(1)[0]  # keep the camera scale positive
    joints, _ = synth_forward_np(target_params, model.body)
    target = FrameTarget(
        params=target_params,
        rotmats=rot6d_to_rotmat_np(target_params[:POSE_DIM]),
        joints3d=joints,
        joints2d=project_weak_perspective_np(joints, target_params[PARAM_DIM - 3:]),
    )
    weights = LossWeights()

    def loss_builder() -> Tensor:
        pred = fuse_and_regress(Tensor(window), model)
        total, _ = supervision_loss(pred, target, weights)
        return total

    return loss_builder, model
