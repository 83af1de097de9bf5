"""Full mesh-recovery model: two temporal branches fused into one regressor.

For every window of T frames the model produces body parameters for the
middle frame.  The global branch (transformer over all T frames) and the
local branch (modulated GCN over the few frames around the middle) each emit
a feature-width vector; the two are summed and fed to the iterative
regressor, whose parameters drive the synthetic body and the
weak-perspective projection.

Disabling a branch replaces its output with a zero vector, so the fusion is
exactly additive and single-branch ablations reuse the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import body as body_mod
from . import gma as gma_mod
from . import ldr as ldr_mod
from .autodiff import Tensor
from .body import RegressorConfig, SyntheticBody
from .errors import ConfigError, ShapeError
from .gma import GmaConfig
from .initializers import ParamBuilder
from .ldr import LdrConfig
from .objectives import FramePrediction


@dataclass
class ModelConfig:
    """Assembled model configuration.

    The branch sub-configs share ``feature_dim`` and ``seq_len``; use
    ``create`` to build a consistent instance from flat values.
    """

    feature_dim: int = 2048
    seq_len: int = 16
    use_gma: bool = True
    use_ldr: bool = True
    gma: GmaConfig = field(default_factory=GmaConfig)
    ldr: LdrConfig = field(default_factory=LdrConfig)
    reg: RegressorConfig = field(default_factory=RegressorConfig)

    @classmethod
    def create(cls, feature_dim: int = 2048, seq_len: int = 16,
               use_gma: bool = True, use_ldr: bool = True,
               gma_layers: int = 2, gma_heads: int = 8, gma_dim: int = 512,
               gma_ffn_dim: int = 1024,
               ldr_window: int = 3, ldr_kernel: int = 3, ldr_hidden: int = 512,
               ldr_ffn_dim: int = 1024, ldr_blocks: int = 1, ldr_residual: bool = False,
               reg_hidden: int = 1024, reg_iters: int = 3) -> "ModelConfig":
        return cls(
            feature_dim=feature_dim,
            seq_len=seq_len,
            use_gma=use_gma,
            use_ldr=use_ldr,
            gma=GmaConfig(seq_len=seq_len, input_dim=feature_dim, model_dim=gma_dim,
                          num_heads=gma_heads, num_layers=gma_layers, ffn_dim=gma_ffn_dim),
            ldr=LdrConfig(window=ldr_window, input_dim=feature_dim, hidden_dim=ldr_hidden,
                          kernel_size=ldr_kernel, num_blocks=ldr_blocks, ffn_dim=ldr_ffn_dim,
                          residual=ldr_residual),
            reg=RegressorConfig(feature_dim=feature_dim, hidden_dim=reg_hidden,
                                num_iters=reg_iters),
        )

    def validate(self) -> None:
        if not (self.use_gma or self.use_ldr):
            raise ConfigError("model: at least one of the two branches must be enabled")
        if self.seq_len < 2:
            raise ConfigError(f"model: seq_len must be >= 2, got {self.seq_len}")
        if self.gma.input_dim != self.feature_dim or self.ldr.input_dim != self.feature_dim \
                or self.reg.feature_dim != self.feature_dim:
            raise ConfigError("model: branch input widths must equal feature_dim")
        if self.gma.seq_len != self.seq_len:
            raise ConfigError("model: gma.seq_len must equal model seq_len")
        if self.use_gma:
            self.gma.validate()
        if self.use_ldr:
            self.ldr.validate()


def local_window_indices(seq_len: int, window: int) -> list[int]:
    """Indices of the frames the local branch sees, clamped to the window.

    Centered on ``seq_len // 2``; out-of-range neighbors repeat the edge
    frame (only relevant for very short windows).
    """
    mid = seq_len // 2
    half = window // 2
    return [min(max(mid + o, 0), seq_len - 1) for o in range(-half, half + 1)]


class DgtrModel:
    """Parameter container plus the per-window forward pass.

    Args:
        cfg: Model configuration (validated here).
        seed: Initialization seed (ignored when ``params`` is given).
        params: Pre-built parameter table (e.g. from a checkpoint).
        body: Synthetic body tables; the shipped asset when omitted.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 params: dict[str, Tensor] | None = None,
                 body: SyntheticBody | None = None):
        cfg.validate()
        self.cfg = cfg
        if body is None:
            from .data_synth import default_body
            body = default_body()
        self.body = body
        if params is None:
            builder = ParamBuilder(seed)
            if cfg.use_gma:
                gma_mod.build_params(builder, cfg.gma)
            if cfg.use_ldr:
                ldr_mod.build_params(builder, cfg.ldr)
            body_mod.build_regressor_params(builder, cfg.reg)
            params = builder.params
        self.params = params

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def num_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def forward_window(self, window: np.ndarray) -> FramePrediction:
        """Full prediction for the middle frame of one feature window."""
        features = Tensor(np.asarray(window, dtype=np.float64))
        return fuse_and_regress(features, self)


def fuse_and_regress(features: Tensor, model: DgtrModel) -> FramePrediction:
    """Run both branches on a window, fuse additively, and decode the body.

    Args:
        features: Window features, shape (seq_len, feature_dim).
        model: The model providing parameters and configuration.

    Returns:
        FramePrediction for the window's middle frame.
    """
    cfg = model.cfg
    if features.shape != (cfg.seq_len, cfg.feature_dim):
        raise ShapeError(
            f"expected a window of shape {(cfg.seq_len, cfg.feature_dim)}, got {features.shape}")
    zero = Tensor(np.zeros(cfg.feature_dim))
    if cfg.use_gma:
        global_feat = gma_mod.forward(features, model.params, cfg.gma)
    else:
        global_feat = zero
    if cfg.use_ldr:
        local = ad.take_rows(features, local_window_indices(cfg.seq_len, cfg.ldr.window))
        local_feat = ldr_mod.forward(local, model.params, cfg.ldr)
    else:
        local_feat = zero
    fused = global_feat + local_feat
    params157 = body_mod.regress_params(fused, model.params, cfg.reg)
    rotmats = body_mod.rot6d_to_rotmat(ad.slice1d(params157, 0, body_mod.POSE_DIM))
    joints3d, verts = body_mod.synth_forward(params157, model.body)
    cam = ad.slice1d(params157, body_mod.BODY_IN_DIM, body_mod.PARAM_DIM)
    joints2d = body_mod.project_weak_perspective(joints3d, cam)
    return FramePrediction(params=params157, rotmats=rotmats, joints3d=joints3d,
                           joints2d=joints2d, verts=verts)
