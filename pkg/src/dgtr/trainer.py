"""Optimization, checkpointing, and evaluation.

Training draws batches of consecutive target frames from one sequence at a
time, reconstructs each frame from its own edge-clamped window, and combines
per-frame supervision with a velocity penalty across the batch.  The
optimizer is bias-corrected Adam in float64 with a linear-warmup /
cosine-decay schedule.

Checkpoint format (little-endian):

    b"DGTRCKPT" | version u32
    | echo_len u32 | config echo (utf-8, canonical key = value lines)
    | num_tensors u32
    | per tensor: name_len u32 | name utf-8 | ndim u32 | dims u32...
                  | float32 payload (row-major)
    | step u32

Tensor payloads are float32; fresh models round their initialization through
float32 so save -> load -> forward is bit-identical for them.  Parameters
that have been trained in float64 lose sub-float32 bits on save.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, backward
from .data_synth import SequenceSample, SyntheticDataSpec
from .errors import ConfigError, ContractError, FormatError, NumericError
from .metrics import MetricReport, SequenceMetrics, accel_error, mpjpe, mpvpe, pa_mpjpe
from .model import DgtrModel, ModelConfig
from .objectives import FrameTarget, LossWeights, supervision_loss, velocity_loss
from .rng import TAG_BATCH, Stream, substream

CKPT_MAGIC = b"DGTRCKPT"
CKPT_VERSION = 1


# ---------------------------------------------------------------------------
# Learning-rate schedule
# ---------------------------------------------------------------------------

def lr_schedule(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup to ``base_lr`` followed by cosine decay to zero.

    lr(step) = base_lr * (step + 1) / warmup_steps          for step < warmup
             = base_lr * 0.5 * (1 + cos(pi * p))            otherwise,
               p = (step - warmup) / (total - warmup)

    The two pieces agree at the boundary (both equal base_lr) and the decay
    reaches exactly zero at ``step == total_steps``.

    Raises:
        ConfigError: If warmup_steps >= total_steps or step is outside
            [0, total_steps].
    """
    if warmup_steps < 0 or warmup_steps >= total_steps:
        raise ConfigError(
            f"schedule: warmup_steps must satisfy 0 <= warmup < total, got {warmup_steps} / {total_steps}")
    if not 0 <= step <= total_steps:
        raise ConfigError(f"schedule: step {step} outside [0, {total_steps}]")
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    progress = (step - warmup_steps) / (total_steps - warmup_steps)
    return base_lr * 0.5 * (1.0 + np.cos(np.pi * progress))


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

class Adam:
    """Bias-corrected Adam over a named parameter table (float64 state).

    A parameter whose gradient is absent or zero keeps its value on the
    first step; a NaN gradient aborts with the offending tensor's name.
    """

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, lr: float) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1 ** self.step_count
        bc2 = 1.0 - self.beta2 ** self.step_count
        for name, p in self.params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if np.isnan(grad).any():
                raise NumericError(f"NaN gradient in parameter '{name}'")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path: str, params: dict[str, Tensor], config_echo: str, step: int) -> None:
    """Serialize a parameter table (float32 payloads) plus the config echo."""
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(np.array([CKPT_VERSION], dtype="<u4").tobytes())
        echo = config_echo.encode("utf-8")
        fh.write(np.array([len(echo)], dtype="<u4").tobytes())
        fh.write(echo)
        fh.write(np.array([len(params)], dtype="<u4").tobytes())
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            fh.write(np.array([len(encoded)], dtype="<u4").tobytes())
            fh.write(encoded)
            dims = tensor.data.shape
            fh.write(np.array([len(dims)] + list(dims), dtype="<u4").tobytes())
            fh.write(tensor.data.astype("<f4").tobytes())
        fh.write(np.array([step], dtype="<u4").tobytes())


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], str, int]:
    """Read a checkpoint; returns (arrays, config echo, step).

    Raises:
        FormatError: On bad magic, version, or truncation.
    """
    with open(path, "rb") as fh:
        raw = fh.read()

    offset = 0

    def take(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(raw):
            raise FormatError(f"{path}: truncated checkpoint")
        chunk = raw[offset:offset + n]
        offset += n
        return chunk

    def take_u32() -> int:
        return int(np.frombuffer(take(4), dtype="<u4")[0])

    if take(8) != CKPT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    version = take_u32()
    if version != CKPT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    echo = take(take_u32()).decode("utf-8")
    count = take_u32()
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = take(take_u32()).decode("utf-8")
        ndim = take_u32()
        dims = tuple(take_u32() for _ in range(ndim))
        size = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(take(4 * size), dtype="<f4").astype(np.float64).reshape(dims)
        arrays[name] = data
    step = take_u32()
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} unexpected trailing bytes")
    return arrays, echo, step


def restore_model(path: str) -> tuple[DgtrModel, "TrainConfig", int]:
    """Rebuild a model (and its training config) from a checkpoint."""
    from .configio import build_train_config, parse_config_text

    arrays, echo, step = load_checkpoint(path)
    cfg = build_train_config(parse_config_text(echo))
    model = DgtrModel(cfg.model, seed=cfg.seed)
    if set(model.params) != set(arrays):
        missing = set(model.params) ^ set(arrays)
        raise FormatError(f"{path}: parameter names do not match the config echo: {sorted(missing)}")
    for name, tensor in model.params.items():
        if arrays[name].shape != tensor.data.shape:
            raise FormatError(
                f"{path}: shape mismatch for '{name}': {arrays[name].shape} vs {tensor.data.shape}")
        tensor.data = arrays[name]
    return model, cfg, step


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    """Everything needed to reproduce a run (see configio for the file keys)."""

    data: SyntheticDataSpec = field(default_factory=SyntheticDataSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    batch: int = 8
    base_lr: float = 1e-4
    warmup_steps: int = 10
    epochs: int = 5
    steps: int = 0   # > 0 overrides epochs
    echo: str = ""   # canonical key = value rendering of the source config


@dataclass
class TrainResult:
    checkpoint_path: str
    log_rows: list[dict]
    total_steps: int
    final_loss: float


def window_indices(center: int, seq_len: int, length: int) -> np.ndarray:
    """Edge-clamped indices of the window whose middle frame is ``center``."""
    idx = np.arange(seq_len) - seq_len // 2 + center
    return np.clip(idx, 0, length - 1)


def frame_target(sample: SequenceSample, t: int) -> FrameTarget:
    return FrameTarget(params=sample.params[t], rotmats=sample.rotmats[t],
                       joints3d=sample.joints3d[t], joints2d=sample.joints2d[t])


def train_step(model: DgtrModel, sample: SequenceSample, targets: list[int],
               weights: LossWeights) -> tuple[Tensor, dict[str, float]]:
    """Forward/loss for a batch of consecutive target frames of one sequence.

    Returns the scalar loss tensor (not yet backpropagated) and a dict of
    unweighted term values for logging.
    """
    length = len(sample)
    seq_len = model.cfg.seq_len
    sup_total: Tensor | None = None
    terms_sum: dict[str, float] = {}
    preds3d, preds2d = [], []
    for t in targets:
        idx = window_indices(t, seq_len, length)
        pred = model.forward_window(sample.features[idx])
        sup, terms = supervision_loss(pred, frame_target(sample, t), weights)
        sup_total = sup if sup_total is None else sup_total + sup
        for k, v in terms.items():
            terms_sum[k] = terms_sum.get(k, 0.0) + v
        preds3d.append(pred.joints3d)
        preds2d.append(pred.joints2d)
    loss = sup_total * (1.0 / len(targets))
    log = {k: v / len(targets) for k, v in terms_sum.items()}
    if len(targets) >= 2:
        vel, vel_terms = velocity_loss(preds3d, sample.joints3d[targets],
                                       preds2d, sample.joints2d[targets], weights)
        loss = loss + vel
        log.update(vel_terms)
    else:
        log.update({"vel3d": 0.0, "vel2d": 0.0})
    return loss, log


def train(cfg: TrainConfig, dataset: list[SequenceSample], out_dir: str,
          log_every: int = 10) -> TrainResult:
    """Run the optimization loop; writes a checkpoint and a CSV log.

    The checkpoint is refreshed at every epoch boundary, so a NaN loss later
    in the run aborts while keeping the last epoch's parameters on disk.

    Raises:
        NumericError: On NaN loss or NaN gradients (after the abort the last
            written checkpoint remains valid).
    """
    if not dataset:
        raise ConfigError("train: empty dataset")
    cfg.model.validate()
    model = DgtrModel(cfg.model, seed=cfg.seed)
    optimizer = Adam(model.params)
    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.dgtrckpt")

    frames_total = sum(len(s) for s in dataset)
    steps_per_epoch = max(1, -(-frames_total // cfg.batch))
    total_steps = cfg.steps if cfg.steps > 0 else cfg.epochs * steps_per_epoch
    if total_steps < 1:
        raise ConfigError("train: total step count must be >= 1")

    picker = Stream(substream(cfg.seed, TAG_BATCH, 0))
    log_rows: list[dict] = []
    final_loss = float("nan")
    for step in range(total_steps):
        lr = lr_schedule(step, total_steps, cfg.warmup_steps, cfg.base_lr)
        draws = picker.u64(2)
        sample = dataset[int(draws[0] % len(dataset))]
        batch = min(cfg.batch, len(sample))
        start = int(draws[1] % (len(sample) - batch + 1))
        targets = list(range(start, start + batch))

        model.zero_grad()
        loss, terms = train_step(model, sample, targets, cfg.weights)
        final_loss = loss.item()
        if np.isnan(final_loss):
            raise NumericError(
                f"training diverged at step {step} (NaN loss); last checkpoint: {ckpt_path}")
        backward(loss)
        optimizer.step(lr)

        row = {"step": step, "lr": lr, "loss": final_loss}
        row.update(terms)
        log_rows.append(row)
        if (step + 1) % steps_per_epoch == 0:
            save_checkpoint(ckpt_path, model.params, cfg.echo, step + 1)

    save_checkpoint(ckpt_path, model.params, cfg.echo, total_steps)
    _write_log(os.path.join(out_dir, "train_log.csv"), log_rows, cfg.echo)
    return TrainResult(checkpoint_path=ckpt_path, log_rows=log_rows,
                       total_steps=total_steps, final_loss=final_loss)


def _write_log(path: str, rows: list[dict], echo: str) -> None:
    columns = ["step", "lr", "loss", "shape", "pose", "joints3d", "joints2d", "vel3d", "vel2d"]
    lines = [f"# {line}" for line in echo.splitlines()]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(f"{row[c]:.9g}" if c != "step" else str(row[c]) for c in columns))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def predict_sequence(model: DgtrModel, sample: SequenceSample) -> tuple[np.ndarray, np.ndarray]:
    """Joints and vertices for every frame of a sequence.

    Every frame is reconstructed as the center of its own edge-clamped
    window, so the output covers all ``len(sample)`` frames.
    """
    joints, verts = [], []
    for t in range(len(sample)):
        idx = window_indices(t, model.cfg.seq_len, len(sample))
        pred = model.forward_window(sample.features[idx])
        joints.append(pred.joints3d.data)
        verts.append(pred.verts.data)
    return np.stack(joints), np.stack(verts)


def evaluate(model: DgtrModel, dataset: list[SequenceSample], fps: float | None = None,
             gt_as_pred: bool = False) -> MetricReport:
    """Metric report over a dataset.

    Sequences shorter than the model's window are skipped with a warning.
    Acceleration error is NaN for sequences of fewer than three frames and,
    when ``fps`` is given, is reported per second^2 instead of per frame^2.

    Args:
        gt_as_pred: Score the ground truth against itself (pipeline fixture).

    Raises:
        ContractError: If every sequence was skipped.
    """
    report = MetricReport()
    for sample in dataset:
        if len(sample) < model.cfg.seq_len:
            warnings.warn(
                f"skipping sequence '{sample.name}': {len(sample)} frames < window {model.cfg.seq_len}")
            continue
        if gt_as_pred:
            joints, verts = sample.joints3d.copy(), sample.verts.copy()
        else:
            joints, verts = predict_sequence(model, sample)
        pa = float(np.mean([pa_mpjpe(joints[t], sample.joints3d[t]) for t in range(len(sample))]))
        acc = (accel_error(joints, sample.joints3d, fps=fps)
               if len(sample) >= 3 else float("nan"))
        report.add(sample.name, SequenceMetrics(
            mpjpe=mpjpe(joints, sample.joints3d),
            pa_mpjpe=pa,
            mpvpe=mpvpe(verts, sample.verts),
            accel_err=acc,
        ))
    if not report.per_sequence:
        raise ContractError("evaluation skipped every sequence (all shorter than the window)")
    return report
