"""Global motion aggregation branch.

A stack of pre-norm transformer encoder layers over the whole feature window.
The input features are projected to the model width, a learnable positional
embedding is added, and after the last layer the middle row (frame T//2,
0-based) is projected back to feature width.  The result summarizes the whole
window from the target frame's point of view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .initializers import ParamBuilder

POS_EMBED_STD = 0.02


@dataclass
class GmaConfig:
    """Hyperparameters of the global branch.

    Attributes:
        seq_len: Window length T (frames fed to the transformer).
        input_dim: Width of the per-frame image features.
        model_dim: Transformer width d.
        num_heads: Attention heads per layer; must divide model_dim.
        num_layers: Number of encoder layers.
        ffn_dim: Hidden width of the position-wise feed-forward block.
    """

    seq_len: int = 16
    input_dim: int = 2048
    model_dim: int = 512
    num_heads: int = 8
    num_layers: int = 2
    ffn_dim: int = 1024

    def validate(self) -> None:
        if self.seq_len < 2:
            raise ConfigError(f"gma: seq_len must be >= 2, got {self.seq_len}")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(
                f"gma: model_dim {self.model_dim} not divisible by num_heads {self.num_heads}")
        if min(self.input_dim, self.model_dim, self.num_heads, self.num_layers, self.ffn_dim) < 1:
            raise ConfigError("gma: all dimensions must be positive")


def build_params(builder: ParamBuilder, cfg: GmaConfig) -> None:
    """Register all parameters of the branch under the ``gma.`` prefix."""
    cfg.validate()
    d, c = cfg.model_dim, cfg.input_dim
    builder.glorot("gma.in_proj.weight", (c, d))
    builder.zeros("gma.in_proj.bias", (d,))
    builder.normal("gma.pos_embed", (cfg.seq_len, d), POS_EMBED_STD)
    for i in range(cfg.num_layers):
        p = f"gma.layer{i}"
        builder.ones(f"{p}.ln1.gain", (d,))
        builder.zeros(f"{p}.ln1.bias", (d,))
        for nm in ("wq", "wk", "wv", "wo"):
            builder.glorot(f"{p}.attn.{nm}", (d, d))
        for nm in ("bq", "bk", "bv", "bo"):
            builder.zeros(f"{p}.attn.{nm}", (d,))
        builder.ones(f"{p}.ln2.gain", (d,))
        builder.zeros(f"{p}.ln2.bias", (d,))
        builder.glorot(f"{p}.ffn.w1", (d, cfg.ffn_dim))
        builder.zeros(f"{p}.ffn.b1", (cfg.ffn_dim,))
        builder.glorot(f"{p}.ffn.w2", (cfg.ffn_dim, d))
        builder.zeros(f"{p}.ffn.b2", (d,))
    builder.glorot("gma.out_proj.weight", (d, c))
    builder.zeros("gma.out_proj.bias", (c,))


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """Softmax(q kᵀ / sqrt(d_h)) v for a single head.

    Args:
        q, k, v: Matrices of shape (T, d_h).

    Returns:
        Tensor of shape (T, d_h).
    """
    if q.shape != k.shape or k.shape != v.shape or len(q.shape) != 2:
        raise ShapeError(f"attention operands must share a (T, d_h) shape, got {q.shape}, {k.shape}, {v.shape}")
    d_h = q.shape[1]
    scores = ad.matmul(q, ad.transpose(k)) * (1.0 / np.sqrt(d_h))
    return ad.matmul(ad.softmax_rows(scores), v)


def _multi_head(h: Tensor, params: dict[str, Tensor], prefix: str, num_heads: int) -> Tensor:
    q = ad.matmul(h, params[f"{prefix}.wq"]) + params[f"{prefix}.bq"]
    k = ad.matmul(h, params[f"{prefix}.wk"]) + params[f"{prefix}.bk"]
    v = ad.matmul(h, params[f"{prefix}.wv"]) + params[f"{prefix}.bv"]
    d_h = q.shape[1] // num_heads
    heads = []
    for i in range(num_heads):
        lo, hi = i * d_h, (i + 1) * d_h
        heads.append(scaled_dot_attention(
            ad.slice_cols(q, lo, hi), ad.slice_cols(k, lo, hi), ad.slice_cols(v, lo, hi)))
    merged = ad.concat_cols(heads)
    return ad.matmul(merged, params[f"{prefix}.wo"]) + params[f"{prefix}.bo"]


def forward(features: Tensor, params: dict[str, Tensor], cfg: GmaConfig) -> Tensor:
    """Run the branch on one window.

    Args:
        features: Window features, shape (seq_len, input_dim).
        params: Parameter table produced by ``build_params``.
        cfg: Branch configuration.

    Returns:
        Mid-frame summary vector of shape (input_dim,).
    """
    if features.shape != (cfg.seq_len, cfg.input_dim):
        raise ShapeError(
            f"gma: expected features of shape {(cfg.seq_len, cfg.input_dim)}, got {features.shape}")
    x = ad.matmul(features, params["gma.in_proj.weight"]) + params["gma.in_proj.bias"]
    x = x + params["gma.pos_embed"]
    for i in range(cfg.num_layers):
        p = f"gma.layer{i}"
        h = ad.layer_norm(x, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])
        x = x + _multi_head(h, params, f"{p}.attn", cfg.num_heads)
        h = ad.layer_norm(x, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])
        f = ad.matmul(ad.gelu(ad.matmul(h, params[f"{p}.ffn.w1"]) + params[f"{p}.ffn.b1"]),
                      params[f"{p}.ffn.w2"]) + params[f"{p}.ffn.b2"]
        x = x + f
    mid = ad.take_row(x, cfg.seq_len // 2)
    return ad.matmul(mid, params["gma.out_proj.weight"]) + params["gma.out_proj.bias"]
