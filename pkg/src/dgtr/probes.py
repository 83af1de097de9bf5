"""Behavioral probes: receptive field and temporal-discontinuity response.

These are diagnostic experiments run on a live model:

  * The receptive-field probe perturbs one frame of a window at a time and
    measures how much each branch's output moves.  The local branch must be
    bitwise indifferent to frames outside its window; the global branch
    should respond to every frame.
  * The stitched probe feeds a sequence made of two static poses butted
    together and tracks per-frame output changes around the single-frame
    input seam; a temporal model spreads the transition over several frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gma as gma_mod
from . import ldr as ldr_mod
from .autodiff import Tensor
from .data_synth import SequenceSample, gen_stitched
from .errors import ConfigError
from .model import DgtrModel, local_window_indices
from .rng import TAG_PROBE, Stream, substream
from .trainer import predict_sequence


@dataclass
class PerturbResult:
    """Branch responses to a single-frame input perturbation."""

    frame: int
    gma_delta: float        # L2 change of the global branch output (NaN if disabled)
    ldr_delta: float        # L2 change of the local branch output (NaN if disabled)
    ldr_bitwise_equal: bool  # exact equality of the local branch output


def _branch_outputs(model: DgtrModel, window: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
    cfg = model.cfg
    features = Tensor(window)
    g = gma_mod.forward(features, model.params, cfg.gma).data if cfg.use_gma else None
    l = None
    if cfg.use_ldr:
        rows = local_window_indices(cfg.seq_len, cfg.ldr.window)
        l = ldr_mod.forward(Tensor(window[rows]), model.params, cfg.ldr).data
    return g, l


def perturb_frame(model: DgtrModel, window: np.ndarray, frame: int,
                  delta: np.ndarray) -> PerturbResult:
    """Measure both branches' response to adding ``delta`` to one frame."""
    g0, l0 = _branch_outputs(model, window)
    perturbed = window.copy()
    perturbed[frame] += delta
    g1, l1 = _branch_outputs(model, perturbed)
    gd = float(np.linalg.norm(g1 - g0)) if g0 is not None else float("nan")
    ld = float(np.linalg.norm(l1 - l0)) if l0 is not None else float("nan")
    bitwise = bool(np.array_equal(l0, l1)) if l0 is not None else True
    return PerturbResult(frame, gd, ld, bitwise)


def receptive_field_probe(model: DgtrModel, seed: int = 0) -> list[PerturbResult]:
    """Perturb every frame of one random window in turn."""
    cfg = model.cfg
    stream = Stream(substream(seed, TAG_PROBE, 0))
    window = 0.5 * stream.normal(cfg.seq_len * cfg.feature_dim).reshape(cfg.seq_len, cfg.feature_dim)
    delta = stream.normal(cfg.feature_dim)
    return [perturb_frame(model, window, t, delta) for t in range(cfg.seq_len)]


@dataclass
class StitchResult:
    """Per-transition deltas for a stitched two-pose sequence."""

    input_delta: np.ndarray    # (2*reps - 1,) feature-space ||f[t+1] - f[t]||
    output_delta: np.ndarray   # (2*reps - 1,) joint-space   ||J[t+1] - J[t]||
    seam: int                  # transition index of the input discontinuity

    def input_transitions(self) -> list[int]:
        """Indices with a nonzero input change (should be exactly [seam])."""
        return [int(i) for i in np.nonzero(self.input_delta > 0)[0]]

    def wide_output_transitions(self, fraction: float = 0.1) -> list[int]:
        """Transition indices whose output change exceeds ``fraction`` of the peak."""
        peak = self.output_delta.max()
        if peak == 0:
            return []
        return [int(i) for i in np.nonzero(self.output_delta > fraction * peak)[0]]

    def to_csv(self, header_lines: list[str] | None = None) -> str:
        lines = [f"# {h}" for h in (header_lines or [])]
        lines.append("transition,input_delta,output_delta")
        for i, (di, do) in enumerate(zip(self.input_delta, self.output_delta)):
            lines.append(f"{i},{di:.9g},{do:.9g}")
        return "\n".join(lines) + "\n"


def stitched_probe(model: DgtrModel, seed: int = 0, reps: int = 30) -> StitchResult:
    """Run the model over a stitched sequence and collect per-frame deltas.

    Raises:
        ConfigError: If ``reps`` is too small for the model's window.
    """
    if reps < 2:
        raise ConfigError(f"stitch probe: reps must be >= 2, got {reps}")
    feats, params = gen_stitched(seed, reps=reps, seq_len=model.cfg.seq_len,
                                 feature_dim=model.cfg.feature_dim)
    sample = SequenceSample("stitched", feats, params, _body=model.body)
    joints, _ = predict_sequence(model, sample)
    input_delta = np.linalg.norm(np.diff(feats, axis=0), axis=1)
    output_delta = np.linalg.norm(np.diff(joints, axis=0), axis=(1, 2))
    return StitchResult(input_delta=input_delta, output_delta=output_delta, seam=reps - 1)
