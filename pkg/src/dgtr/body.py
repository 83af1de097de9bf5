"""Synthetic articulated body model, projection, and parameter regressor.

The mesh-recovery head predicts a 157-dimensional parameter vector per frame:

    [0:144)    pose -- 24 joint rotations in the 6D representation
    [144:154)  shape coefficients
    [154:157)  weak-perspective camera (scale, tx, ty)

A real body model is replaced by a fixed linear stand-in: joints and vertices
are affine functions of the 154 pose+shape entries, with weights drawn once
from a seeded stream and shipped as a binary asset.  This keeps every
geometric contract (shapes, projection, differentiability) while staying
self-contained.

The regressor follows the iterative-error-feedback pattern: starting from a
learnable neutral parameter vector, a two-layer MLP repeatedly maps
[features; current estimate] to a parameter update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import CameraError, FormatError, ShapeError
from .initializers import ParamBuilder
from .rng import TAG_BODY, Stream, substream

NUM_JOINTS = 24
NUM_SHAPE = 10
POSE_DIM = 6 * NUM_JOINTS        # 144
CAM_DIM = 3
PARAM_DIM = POSE_DIM + NUM_SHAPE + CAM_DIM  # 157
BODY_IN_DIM = POSE_DIM + NUM_SHAPE          # 154
NUM_VERTS = 431

_NORM_EPS = 1e-8

BODY_MAGIC = b"DGTRBODY"
BODY_VERSION = 1


def neutral_params() -> np.ndarray:
    """The rest configuration: identity rotations, zero shape, unit camera."""
    p = np.zeros(PARAM_DIM)
    p[0:POSE_DIM:6] = 1.0   # each joint's 6D block is [1, 0, 0, 0, 1, 0]
    p[4:POSE_DIM:6] = 1.0
    p[POSE_DIM + NUM_SHAPE] = 1.0  # camera scale
    return p


def _cross_rows(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise 3-D cross product of two (n, 3) matrices."""
    ax, ay, az = (ad.slice_cols(a, i, i + 1) for i in range(3))
    bx, by, bz = (ad.slice_cols(b, i, i + 1) for i in range(3))
    return ad.concat_cols([
        ad.mul(ay, bz) - ad.mul(az, by),
        ad.mul(az, bx) - ad.mul(ax, bz),
        ad.mul(ax, by) - ad.mul(ay, bx),
    ])


def _normalize_rows(x: Tensor) -> Tensor:
    sq = ad.sum_axis(ad.mul(x, x), axis=1, keepdims=True) + _NORM_EPS
    return ad.mul(x, ad.power(sq, -0.5))


def rot6d_to_rotmat(pose: Tensor) -> Tensor:
    """Map 6D rotation parameters to rotation matrices via Gram-Schmidt.

    Args:
        pose: Flat pose vector of shape (144,) -- 24 blocks of 6.

    Returns:
        Tensor of shape (24, 9): per joint the three orthonormal basis
        vectors b1, b2, b3 = b1 x b2 concatenated (the rotation matrix whose
        columns are b1, b2, b3, flattened in that order).
    """
    if pose.shape != (POSE_DIM,):
        raise ShapeError(f"rot6d_to_rotmat expects shape ({POSE_DIM},), got {pose.shape}")
    blocks = ad.reshape(pose, (NUM_JOINTS, 6))
    a1 = ad.slice_cols(blocks, 0, 3)
    a2 = ad.slice_cols(blocks, 3, 6)
    b1 = _normalize_rows(a1)
    proj = ad.sum_axis(ad.mul(b1, a2), axis=1, keepdims=True)
    b2 = _normalize_rows(a2 - ad.mul(b1, proj))
    b3 = _cross_rows(b1, b2)
    return ad.concat_cols([b1, b2, b3])


def rot6d_to_rotmat_np(pose: np.ndarray) -> np.ndarray:
    """Numpy convenience wrapper around ``rot6d_to_rotmat``."""
    return rot6d_to_rotmat(Tensor(np.asarray(pose, dtype=np.float64))).data


@dataclass
class SyntheticBody:
    """Fixed linear body: point = W @ [pose; shape] + rest offset."""

    w_joints: np.ndarray   # (3 * NUM_JOINTS, BODY_IN_DIM)
    rest_joints: np.ndarray  # (3 * NUM_JOINTS,)
    w_verts: np.ndarray    # (3 * NUM_VERTS, BODY_IN_DIM)
    rest_verts: np.ndarray   # (3 * NUM_VERTS,)
    seed: int


def build_body(seed: int) -> SyntheticBody:
    """Construct the stand-in body deterministically from a seed.

    Weight entries are scaled by 1/sqrt(BODY_IN_DIM) so point coordinates
    stay O(1) for O(1) parameters; rest offsets have std 0.2.  All values
    are rounded through float32 to match the on-disk format.
    """
    def draw(tag: int, n: int, scale: float) -> np.ndarray:
        stream = Stream(substream(seed, TAG_BODY, tag))
        return stream.normal_f32(n) * np.float64(np.float32(scale))

    scale = 1.0 / np.sqrt(BODY_IN_DIM)
    wj = draw(0, 3 * NUM_JOINTS * BODY_IN_DIM, scale).reshape(3 * NUM_JOINTS, BODY_IN_DIM)
    rj = draw(1, 3 * NUM_JOINTS, 0.2)
    wv = draw(2, 3 * NUM_VERTS * BODY_IN_DIM, scale).reshape(3 * NUM_VERTS, BODY_IN_DIM)
    rv = draw(3, 3 * NUM_VERTS, 0.2)
    f32 = lambda a: a.astype(np.float32).astype(np.float64)
    return SyntheticBody(f32(wj), f32(rj), f32(wv), f32(rv), seed)


def write_body_file(path: str, body: SyntheticBody) -> None:
    """Serialize a body to the DGTRBODY format (float32 little-endian)."""
    with open(path, "wb") as fh:
        fh.write(BODY_MAGIC)
        header = np.array([BODY_VERSION, body.seed & 0xFFFFFFFF, NUM_JOINTS, NUM_VERTS, BODY_IN_DIM],
                          dtype="<u4")
        fh.write(header.tobytes())
        for arr in (body.w_joints, body.rest_joints, body.w_verts, body.rest_verts):
            fh.write(arr.astype("<f4").tobytes())


def read_body_file(path: str) -> SyntheticBody:
    """Load a DGTRBODY file; validates magic, version, and payload size."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != BODY_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:8]!r}")
    header = np.frombuffer(raw[8:28], dtype="<u4")
    version, seed, n_joints, n_verts, in_dim = (int(v) for v in header)
    if version != BODY_VERSION:
        raise FormatError(f"{path}: unsupported body version {version}")
    if (n_joints, n_verts, in_dim) != (NUM_JOINTS, NUM_VERTS, BODY_IN_DIM):
        raise FormatError(f"{path}: unexpected dimensions {(n_joints, n_verts, in_dim)}")
    counts = [3 * NUM_JOINTS * in_dim, 3 * NUM_JOINTS, 3 * NUM_VERTS * in_dim, 3 * NUM_VERTS]
    expected = 28 + 4 * sum(counts)
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    offset = 28
    arrays = []
    for count in counts:
        arrays.append(np.frombuffer(raw, dtype="<f4", count=count, offset=offset).astype(np.float64))
        offset += 4 * count
    wj, rj, wv, rv = arrays
    return SyntheticBody(wj.reshape(3 * NUM_JOINTS, BODY_IN_DIM), rj,
                         wv.reshape(3 * NUM_VERTS, BODY_IN_DIM), rv, seed)


def synth_forward(params: Tensor, body: SyntheticBody) -> tuple[Tensor, Tensor]:
    """Evaluate the linear body at a parameter vector.

    Args:
        params: Full parameter vector, shape (157,); the camera entries are
            ignored here.
        body: The fixed body tables.

    Returns:
        (joints, vertices) tensors of shapes (24, 3) and (431, 3).
    """
    if params.shape != (PARAM_DIM,):
        raise ShapeError(f"synth_forward expects shape ({PARAM_DIM},), got {params.shape}")
    pb = ad.slice1d(params, 0, BODY_IN_DIM)
    joints = ad.reshape(ad.matmul(Tensor(body.w_joints), pb) + Tensor(body.rest_joints),
                        (NUM_JOINTS, 3))
    verts = ad.reshape(ad.matmul(Tensor(body.w_verts), pb) + Tensor(body.rest_verts),
                       (NUM_VERTS, 3))
    return joints, verts


def synth_forward_np(params: np.ndarray, body: SyntheticBody) -> tuple[np.ndarray, np.ndarray]:
    """Numpy twin of ``synth_forward`` for ground-truth generation."""
    pb = np.asarray(params, dtype=np.float64)[:BODY_IN_DIM]
    joints = (body.w_joints @ pb + body.rest_joints).reshape(NUM_JOINTS, 3)
    verts = (body.w_verts @ pb + body.rest_verts).reshape(NUM_VERTS, 3)
    return joints, verts


def project_weak_perspective(points: Tensor, cam: Tensor) -> Tensor:
    """Weak-perspective projection (x, y) = s * (X, Y) + (tx, ty).

    Args:
        points: 3-D points, shape (n, 3).
        cam: Camera vector (s, tx, ty), shape (3,).

    Raises:
        CameraError: If the scale s is not strictly positive.
    """
    if len(points.shape) != 2 or points.shape[1] != 3:
        raise ShapeError(f"project expects (n, 3) points, got {points.shape}")
    if cam.shape != (CAM_DIM,):
        raise ShapeError(f"project expects a camera of shape ({CAM_DIM},), got {cam.shape}")
    if cam.data[0] <= 0.0:
        raise CameraError(f"camera scale must be positive, got {cam.data[0]!r}")
    s = ad.slice1d(cam, 0, 1)
    t = ad.reshape(ad.slice1d(cam, 1, 3), (1, 2))
    return ad.mul(ad.slice_cols(points, 0, 2), s) + t


def project_weak_perspective_np(points: np.ndarray, cam: np.ndarray) -> np.ndarray:
    """Numpy twin of ``project_weak_perspective``."""
    if cam[0] <= 0.0:
        raise CameraError(f"camera scale must be positive, got {cam[0]!r}")
    return points[:, :2] * cam[0] + cam[1:3]


@dataclass
class RegressorConfig:
    """Iterative parameter-regressor head.

    Attributes:
        feature_dim: Width of the fused branch features.
        hidden_dim: Width of the single hidden layer.
        num_iters: Number of refinement iterations.
    """

    feature_dim: int = 2048
    hidden_dim: int = 1024
    num_iters: int = 3


def build_regressor_params(builder: ParamBuilder, cfg: RegressorConfig) -> None:
    """Register the regressor parameters under the ``reg.`` prefix.

    The output layer is down-scaled (factor 0.01) so early updates stay close
    to the learnable neutral initialization.
    """
    in_dim = cfg.feature_dim + PARAM_DIM
    builder.glorot("reg.fc.weight", (in_dim, cfg.hidden_dim))
    builder.zeros("reg.fc.bias", (cfg.hidden_dim,))
    builder.glorot("reg.out.weight", (cfg.hidden_dim, PARAM_DIM), scale=0.01)
    builder.zeros("reg.out.bias", (PARAM_DIM,))
    builder.constant("reg.init", neutral_params())


def regress_params(features: Tensor, params: dict[str, Tensor], cfg: RegressorConfig) -> Tensor:
    """Iteratively refine body parameters from fused features.

    Args:
        features: Fused feature vector, shape (feature_dim,).
        params: Parameter table containing the ``reg.`` tensors.
        cfg: Regressor configuration.

    Returns:
        Parameter vector of shape (157,).
    """
    if features.shape != (cfg.feature_dim,):
        raise ShapeError(f"regressor expects features of shape ({cfg.feature_dim},), got {features.shape}")
    estimate = params["reg.init"]
    for _ in range(cfg.num_iters):
        x = ad.cat1d(features, estimate)
        h = ad.gelu(ad.matmul(x, params["reg.fc.weight"]) + params["reg.fc.bias"])
        delta = ad.matmul(h, params["reg.out.weight"]) + params["reg.out.bias"]
        estimate = estimate + delta
    return estimate
