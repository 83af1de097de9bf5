"""Closed-form parameter and FLOP accounting.

Costs are computed from the configuration alone (nothing is executed) for
one target-frame reconstruction, i.e. a single window forward pass.

Counting conventions (fixed; tests pin them):
    * One multiply-accumulate = 2 FLOPs, so x[m,k] @ W[k,n] costs 2*m*k*n
      and adding a bias costs m*n.
    * The attention score product QK^T costs 2*T^2*d summed over heads, and
      likewise for the attention-weighted value product AV.
    * Score scaling (1/sqrt(d_h)) is one multiply per score entry
      (heads*T^2) and softmax is one FLOP per score entry (heads*T^2).
    * Layer normalization is 8 FLOPs per normalized element.
    * Pointwise nonlinearities (GELU, sigmoid, |.|) are 1 FLOP per element,
      residual or embedding adds 1 FLOP per element.
    * Temporal convolution costs 2*T*k*C_in*C_out plus T*C_out for the bias.
    * The adjacency normalization of the modulated GCN costs 5*W^2 + W
      (build, absolute values, row sums, epsilon, inverse square root, and
      the two-sided scaling).
    * The fixed body decode (linear joints/vertices plus weak-perspective
      projection) is included as a parameter-free row; the 6D-to-rotation
      conversion belongs to the loss, not to reconstruction, and is not
      counted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .body import BODY_IN_DIM, NUM_JOINTS, NUM_VERTS, PARAM_DIM, RegressorConfig
from .gma import GmaConfig
from .ldr import LdrConfig
from .model import ModelConfig


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def gma_param_count(cfg: GmaConfig) -> int:
    d, c, f = cfg.model_dim, cfg.input_dim, cfg.ffn_dim
    in_proj = c * d + d
    pos = cfg.seq_len * d
    per_layer = (2 * d                      # ln1
                 + 4 * d * d + 4 * d        # attention projections
                 + 2 * d                    # ln2
                 + d * f + f + f * d + d)   # feed-forward
    out_proj = d * c + c
    return in_proj + pos + cfg.num_layers * per_layer + out_proj


def ldr_param_count(cfg: LdrConfig) -> int:
    h, c, w, f = cfg.hidden_dim, cfg.input_dim, cfg.window, cfg.ffn_dim
    conv = cfg.kernel_size * c * h + h
    pos = w * h
    per_block = (h * h + w * h + w * w      # mgcn: weight, modulation, adjacency
                 + 2 * h                    # ln1
                 + h * f + f + f * h + h    # feed-forward
                 + 2 * h)                   # ln2
    out_proj = h * c + c
    return conv + pos + cfg.num_blocks * per_block + out_proj


def regressor_param_count(cfg: RegressorConfig) -> int:
    in_dim = cfg.feature_dim + PARAM_DIM
    return (in_dim * cfg.hidden_dim + cfg.hidden_dim
            + cfg.hidden_dim * PARAM_DIM + PARAM_DIM
            + PARAM_DIM)  # learnable initial estimate


# ---------------------------------------------------------------------------
# FLOPs (one window forward)
# ---------------------------------------------------------------------------

def gma_flop_count(cfg: GmaConfig) -> int:
    t, d, c, f, heads = cfg.seq_len, cfg.model_dim, cfg.input_dim, cfg.ffn_dim, cfg.num_heads
    total = 2 * t * c * d + t * d   # input projection + bias
    total += t * d                  # positional embedding add
    per_layer = (8 * t * d                       # ln1
                 + 4 * (2 * t * d * d + t * d)   # q, k, v, o projections
                 + 2 * t * t * d                 # QK^T over all heads
                 + heads * t * t                 # score scaling
                 + heads * t * t                 # softmax
                 + 2 * t * t * d                 # AV over all heads
                 + t * d                         # residual
                 + 8 * t * d                     # ln2
                 + 2 * t * d * f + t * f         # ffn expand + bias
                 + t * f                         # gelu
                 + 2 * t * f * d + t * d         # ffn contract + bias
                 + t * d)                        # residual
    total += cfg.num_layers * per_layer
    total += 2 * d * c + c          # output projection of the middle row
    return total


def ldr_flop_count(cfg: LdrConfig) -> int:
    w, h, c, f, k = cfg.window, cfg.hidden_dim, cfg.input_dim, cfg.ffn_dim, cfg.kernel_size
    total = 2 * w * k * c * h + w * h   # temporal convolution + bias
    total += w * h                      # positional embedding add
    per_block = (2 * w * h * h          # node transform XW
                 + w * h                # modulation gate
                 + 5 * w * w + w        # adjacency normalization
                 + 2 * w * w * h        # normalized adjacency times features
                 + w * h                # sigmoid
                 + 8 * w * h            # ln1
                 + 2 * w * h * f + w * f  # ffn expand + bias
                 + w * f                  # gelu
                 + 2 * w * f * h + w * h  # ffn contract + bias
                 + w * h                  # residual onto m
                 + 8 * w * h)             # ln2
    if cfg.residual:
        per_block += w * h
    total += cfg.num_blocks * per_block
    total += 2 * h * c + c              # output projection of the middle row
    return total


def regressor_flop_count(cfg: RegressorConfig) -> int:
    in_dim = cfg.feature_dim + PARAM_DIM
    per_iter = (2 * in_dim * cfg.hidden_dim + cfg.hidden_dim   # hidden + bias
                + cfg.hidden_dim                               # gelu
                + 2 * cfg.hidden_dim * PARAM_DIM + PARAM_DIM   # output + bias
                + PARAM_DIM)                                   # estimate update
    return cfg.num_iters * per_iter


def fusion_flop_count(cfg: ModelConfig) -> int:
    """The single add merging the two branch outputs."""
    return cfg.feature_dim


def body_flop_count() -> int:
    joints = 2 * 3 * NUM_JOINTS * BODY_IN_DIM + 3 * NUM_JOINTS
    verts = 2 * 3 * NUM_VERTS * BODY_IN_DIM + 3 * NUM_VERTS
    projection = 4 * NUM_JOINTS
    return joints + verts + projection


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class CostRow:
    component: str
    params: int
    flops: int


@dataclass
class CostTable:
    rows: list[CostRow]

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.rows)

    def to_csv(self, header_lines: list[str] | None = None) -> str:
        lines = [f"# {h}" for h in (header_lines or [])]
        lines.append("component,params,flops")
        for r in self.rows:
            lines.append(f"{r.component},{r.params},{r.flops}")
        lines.append(f"total,{self.total_params},{self.total_flops}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        rows = [(r.component, r.params, r.flops) for r in self.rows]
        rows.append(("total", self.total_params, self.total_flops))
        width = max(len(name) for name, _, _ in rows)
        lines = [f"{'component':<{width}}  {'params':>12}  {'flops':>14}"]
        for name, params, flops in rows:
            lines.append(f"{name:<{width}}  {params:>12,}  {flops:>14,}")
        return "\n".join(lines) + "\n"


def cost_table(cfg: ModelConfig) -> CostTable:
    """Per-component parameter and FLOP counts for one reconstruction."""
    cfg.validate()
    rows = []
    if cfg.use_gma:
        rows.append(CostRow("gma", gma_param_count(cfg.gma), gma_flop_count(cfg.gma)))
    if cfg.use_ldr:
        rows.append(CostRow("ldr", ldr_param_count(cfg.ldr), ldr_flop_count(cfg.ldr)))
    if cfg.use_gma and cfg.use_ldr:
        rows.append(CostRow("fusion", 0, fusion_flop_count(cfg)))
    rows.append(CostRow("regressor", regressor_param_count(cfg.reg),
                        regressor_flop_count(cfg.reg)))
    rows.append(CostRow("body", 0, body_flop_count()))
    return CostTable(rows)
