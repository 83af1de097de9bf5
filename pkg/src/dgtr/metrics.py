"""Evaluation metrics for recovered meshes.

All functions here are plain numpy and are never differentiated; they share
no code with the training objectives so they can serve as independent
checks.  Positions are reported in the data's native units (the synthetic
body is unitless); acceleration error is per frame^2 unless a frame rate is
supplied, in which case it is per second^2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, ContractError, ShapeError


def _check_pair(pred: np.ndarray, gt: np.ndarray, min_ndim: int = 2) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim < min_ndim or pred.shape[-1] != 3:
        raise ShapeError(f"expected (..., 3) point arrays, got shape {pred.shape}")
    return pred, gt


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean Euclidean distance between corresponding points.

    Args:
        pred, gt: Arrays of shape (..., n, 3).

    Returns:
        Mean over all points of the per-point L2 error.
    """
    pred, gt = _check_pair(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def mpvpe(pred_verts: np.ndarray, gt_verts: np.ndarray) -> float:
    """Mean per-vertex position error (same formula as ``mpjpe``)."""
    return mpjpe(pred_verts, gt_verts)


def similarity_transform(pred: np.ndarray, gt: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Best similarity (s, R, t) mapping pred onto gt in the least-squares sense.

    Solves min over s > 0, rotation R, translation t of
    sum_i || s R pred_i + t - gt_i ||^2  (orthogonal Procrustes with scale;
    the SVD sign trick keeps R a proper rotation).

    Args:
        pred, gt: Point clouds of shape (n, 3), n >= 3.

    Returns:
        Tuple (scale, rotation (3, 3), translation (3,)).

    Raises:
        AlignmentError: If either cloud has zero variance.
    """
    pred, gt = _check_pair(pred, gt)
    if pred.ndim != 2:
        raise ShapeError(f"alignment expects (n, 3) clouds, got shape {pred.shape}")
    n = pred.shape[0]
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    x = pred - mu_p
    g = gt - mu_g
    var_p = (x ** 2).sum() / n
    var_g = (g ** 2).sum() / n
    if var_p == 0.0 or var_g == 0.0:
        raise AlignmentError("cannot align point clouds with zero variance")
    cov = x.T @ g / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.sign(np.linalg.det(vt.T @ u.T))
    corr = np.ones(3)
    corr[-1] = sign if sign != 0 else 1.0
    rot = vt.T @ np.diag(corr) @ u.T
    scale = float((d * corr).sum() / var_p)
    trans = mu_g - scale * rot @ mu_p
    return scale, rot, trans


def procrustes_align(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Return pred mapped onto gt by the best similarity transform."""
    scale, rot, trans = similarity_transform(pred, gt)
    return scale * np.asarray(pred, dtype=np.float64) @ rot.T + trans


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """MPJPE after Procrustes alignment of pred onto gt."""
    return mpjpe(procrustes_align(pred, gt), gt)


def accel_error(pred: np.ndarray, gt: np.ndarray, fps: float | None = None) -> float:
    """Mean difference of second-order finite differences.

    a_t = x_{t+1} - 2 x_t + x_{t-1} is computed per joint for both
    trajectories; the metric is the mean L2 norm of their difference over
    the T-2 interior frames.  If ``fps`` is given the result is multiplied
    by fps^2 (per-second^2 units); otherwise it is per-frame^2.

    Args:
        pred, gt: Trajectories of shape (T, n, 3) with T >= 3.

    Raises:
        ContractError: If fewer than three frames are supplied.
    """
    pred, gt = _check_pair(pred, gt, min_ndim=3)
    if pred.shape[0] < 3:
        raise ContractError(f"acceleration error needs >= 3 frames, got {pred.shape[0]}")
    accel_p = pred[2:] - 2.0 * pred[1:-1] + pred[:-2]
    accel_g = gt[2:] - 2.0 * gt[1:-1] + gt[:-2]
    err = float(np.linalg.norm(accel_p - accel_g, axis=-1).mean())
    if fps is not None:
        err *= float(fps) ** 2
    return err


@dataclass
class SequenceMetrics:
    """Metric values for one sequence (NaN where undefined)."""

    mpjpe: float
    pa_mpjpe: float
    mpvpe: float
    accel_err: float

    def row(self) -> list[float]:
        return [self.mpjpe, self.pa_mpjpe, self.mpvpe, self.accel_err]


@dataclass
class MetricReport:
    """Per-sequence metrics plus their mean."""

    names: list[str] = field(default_factory=list)
    per_sequence: list[SequenceMetrics] = field(default_factory=list)

    def add(self, name: str, m: SequenceMetrics) -> None:
        self.names.append(name)
        self.per_sequence.append(m)

    def aggregate(self) -> SequenceMetrics:
        if not self.per_sequence:
            raise ContractError("cannot aggregate an empty metric report")
        table = np.array([m.row() for m in self.per_sequence])
        # A column that is NaN for every sequence stays NaN in the mean.
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            means = np.nanmean(table, axis=0)
        return SequenceMetrics(*(float(v) for v in means))

    def to_csv(self, header_lines: list[str] | None = None) -> str:
        """Render as CSV; ``header_lines`` are emitted as '#' comments."""
        lines = [f"# {h}" for h in (header_lines or [])]
        lines.append("sequence,mpjpe,pa_mpjpe,mpvpe,accel_err")
        fmt = lambda v: "" if np.isnan(v) else f"{v:.9g}"
        for name, m in zip(self.names, self.per_sequence):
            lines.append(",".join([name] + [fmt(v) for v in m.row()]))
        agg = self.aggregate()
        lines.append(",".join(["mean"] + [fmt(v) for v in agg.row()]))
        return "\n".join(lines) + "\n"
