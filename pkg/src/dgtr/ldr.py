"""Local detail refinement branch.

Operates on a short window of frames centered on the target frame.  A
temporal convolution compresses the features, a learnable positional
embedding is added, and one or more modulated graph-convolution blocks mix
the frames through a fully learnable adjacency.  The middle row is projected
back to feature width.

The modulated GCN treats the window's frames as graph nodes.  Its adjacency
starts from an all-ones matrix plus a learnable (zero-initialized) delta, is
symmetrically normalized with absolute-value row sums, and every node's
transformed features are gated by a per-node modulation vector:

    t_j   = (x_j W) * mod_j
    A     = 1 + delta
    D_jj  = sum_k |A_jk| + 1e-6
    Y     = sigmoid(D^-1/2 A D^-1/2  T)

At initialization delta is zero, so the normalized adjacency is exactly the
all-ones matrix scaled by 1/window (up to the 1e-6 guard in D).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError
from .initializers import ParamBuilder

POS_EMBED_STD = 0.02
DEGREE_EPS = 1e-6


@dataclass
class LdrConfig:
    """Hyperparameters of the local branch.

    Attributes:
        window: Number of frames seen by the branch (odd).
        input_dim: Width of the per-frame image features.
        hidden_dim: Width after the temporal convolution.
        kernel_size: Temporal convolution width (odd).
        num_blocks: Number of GCN blocks stacked after the embedding.
        ffn_dim: Hidden width of the feed-forward block.
        residual: Whether to add the block input back onto the GCN output
            before normalization (off by default).
    """

    window: int = 3
    input_dim: int = 2048
    hidden_dim: int = 512
    kernel_size: int = 3
    num_blocks: int = 1
    ffn_dim: int = 1024
    residual: bool = False

    def validate(self) -> None:
        if self.window < 2 or self.window % 2 == 0:
            raise ConfigError(f"ldr: window must be odd and >= 3, got {self.window}")
        if self.kernel_size % 2 == 0:
            raise ConfigError(f"ldr: kernel_size must be odd, got {self.kernel_size}")
        if min(self.input_dim, self.hidden_dim, self.num_blocks, self.ffn_dim) < 1:
            raise ConfigError("ldr: all dimensions must be positive")


def build_params(builder: ParamBuilder, cfg: LdrConfig) -> None:
    """Register all parameters of the branch under the ``ldr.`` prefix."""
    cfg.validate()
    w, h = cfg.window, cfg.hidden_dim
    builder.glorot("ldr.conv.kernel", (cfg.kernel_size, cfg.input_dim, h),
                   fan_in=cfg.kernel_size * cfg.input_dim, fan_out=h)
    builder.zeros("ldr.conv.bias", (h,))
    builder.normal("ldr.pos_embed", (w, h), POS_EMBED_STD)
    for i in range(cfg.num_blocks):
        p = f"ldr.block{i}"
        builder.glorot(f"{p}.mgcn.weight", (h, h))
        builder.ones(f"{p}.mgcn.mod", (w, h))
        builder.zeros(f"{p}.mgcn.adj_delta", (w, w))
        builder.ones(f"{p}.ln1.gain", (h,))
        builder.zeros(f"{p}.ln1.bias", (h,))
        builder.glorot(f"{p}.ffn.w1", (h, cfg.ffn_dim))
        builder.zeros(f"{p}.ffn.b1", (cfg.ffn_dim,))
        builder.glorot(f"{p}.ffn.w2", (cfg.ffn_dim, h))
        builder.zeros(f"{p}.ffn.b2", (h,))
        builder.ones(f"{p}.ln2.gain", (h,))
        builder.zeros(f"{p}.ln2.bias", (h,))
    builder.glorot("ldr.out_proj.weight", (h, cfg.input_dim))
    builder.zeros("ldr.out_proj.bias", (cfg.input_dim,))


def modulated_gcn(x: Tensor, weight: Tensor, mod: Tensor, adj_delta: Tensor) -> Tensor:
    """One modulated graph convolution over window-node features.

    Args:
        x: Node features, shape (window, hidden).
        weight: Shared feature transform, shape (hidden, hidden).
        mod: Per-node modulation vectors, shape (window, hidden).
        adj_delta: Learnable adjacency offset, shape (window, window);
            the effective adjacency is ``1 + adj_delta``.

    Returns:
        Tensor of shape (window, hidden).
    """
    w = x.shape[0]
    if adj_delta.shape != (w, w) or mod.shape != x.shape:
        raise ShapeError(
            f"mgcn: inconsistent shapes x={x.shape} mod={mod.shape} adj_delta={adj_delta.shape}")
    t = ad.mul(ad.matmul(x, weight), mod)
    adj = adj_delta + 1.0
    degree = ad.sum_axis(ad.absval(adj), axis=1, keepdims=True) + DEGREE_EPS  # (w, 1)
    dinv = ad.power(degree, -0.5)
    adj_hat = ad.mul(ad.mul(adj, dinv), ad.reshape(dinv, (1, w)))
    return ad.sigmoid(ad.matmul(adj_hat, t))


def forward(features: Tensor, params: dict[str, Tensor], cfg: LdrConfig) -> Tensor:
    """Run the branch on one local window.

    Args:
        features: Local window features, shape (window, input_dim).
        params: Parameter table produced by ``build_params``.
        cfg: Branch configuration.

    Returns:
        Mid-frame refinement vector of shape (input_dim,).
    """
    if features.shape != (cfg.window, cfg.input_dim):
        raise ShapeError(
            f"ldr: expected features of shape {(cfg.window, cfg.input_dim)}, got {features.shape}")
    x = ad.conv1d(features, params["ldr.conv.kernel"], params["ldr.conv.bias"])
    x = x + params["ldr.pos_embed"]
    for i in range(cfg.num_blocks):
        p = f"ldr.block{i}"
        y = modulated_gcn(x, params[f"{p}.mgcn.weight"], params[f"{p}.mgcn.mod"],
                          params[f"{p}.mgcn.adj_delta"])
        if cfg.residual:
            y = y + x
        m = ad.layer_norm(y, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])
        f = ad.matmul(ad.gelu(ad.matmul(m, params[f"{p}.ffn.w1"]) + params[f"{p}.ffn.b1"]),
                      params[f"{p}.ffn.w2"]) + params[f"{p}.ffn.b2"]
        x = ad.layer_norm(f + m, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])
    mid = ad.take_row(x, cfg.window // 2)
    return ad.matmul(mid, params["ldr.out_proj.weight"]) + params["ldr.out_proj.bias"]
