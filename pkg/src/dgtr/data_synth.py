"""Synthetic sequence generation and feature-file serialization.

Real image features are replaced by a fixed linear embedding of the body
parameters: for each frame, features = E @ params + sigma * noise, where E
is a seeded (feature_dim x 157) matrix shipped as a package asset.  Pose
trajectories are band-limited sinusoids around the neutral pose (one
frequency, phase, and amplitude per rotation channel), shape coefficients
are constant per sequence, and the weak-perspective camera is fixed per
sequence with a strictly positive scale.

Because the features determine the body parameters up to noise, a trained
network can recover the underlying motion, which gives the training and
probe machinery a realistic but fully deterministic target.

File format (all integers and floats little-endian):

    features:  b"DGTRFEAT" | version u32 | T u32 | C u32 | T*C float32 (row-major)
    optional ground truth appended after the payload:
               b"DGTRGT01" | T*157 float32 (row-major)

Features and parameters are rounded through float32 at generation time so
that in-memory datasets and file round-trips are bit-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .body import (BODY_IN_DIM, NUM_SHAPE, PARAM_DIM, POSE_DIM, SyntheticBody,
                   neutral_params, project_weak_perspective_np, read_body_file,
                   rot6d_to_rotmat_np, synth_forward_np)
from .errors import ConfigError, FormatError
from .rng import (TAG_DATA_CAMERA, TAG_DATA_NOISE, TAG_DATA_POSE, TAG_DATA_SHAPE,
                  TAG_EMBEDDING, TAG_STITCH, Stream, substream)

FEAT_MAGIC = b"DGTRFEAT"
GT_MAGIC = b"DGTRGT01"
FEAT_VERSION = 1

DEFAULT_FEATURE_DIM = 2048
ASSET_SEED = 1597  # seed of the shipped embedding and body assets


# ---------------------------------------------------------------------------
# Feature files
# ---------------------------------------------------------------------------

def write_feature_file(path: str, features: np.ndarray, params: np.ndarray | None = None) -> None:
    """Write a feature matrix (and optionally per-frame ground truth).

    Args:
        path: Output file path.
        features: Array of shape (T, C).
        params: Optional ground-truth parameters, shape (T, 157).
    """
    features = np.asarray(features)
    if features.ndim != 2:
        raise FormatError(f"features must be a (T, C) matrix, got shape {features.shape}")
    t_len, width = features.shape
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC)
        fh.write(np.array([FEAT_VERSION, t_len, width], dtype="<u4").tobytes())
        fh.write(features.astype("<f4").tobytes())
        if params is not None:
            params = np.asarray(params)
            if params.shape != (t_len, PARAM_DIM):
                raise FormatError(
                    f"ground truth must have shape ({t_len}, {PARAM_DIM}), got {params.shape}")
            fh.write(GT_MAGIC)
            fh.write(params.astype("<f4").tobytes())


def read_feature_file(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Read a feature file; returns (features, params-or-None) as float64.

    Raises:
        FormatError: On bad magic, unsupported version, or truncation.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 20 or raw[:8] != FEAT_MAGIC:
        raise FormatError(f"{path}: not a feature file (bad magic)")
    version, t_len, width = (int(v) for v in np.frombuffer(raw[8:20], dtype="<u4"))
    if version != FEAT_VERSION:
        raise FormatError(f"{path}: unsupported feature version {version}")
    need = 20 + 4 * t_len * width
    if len(raw) < need:
        raise FormatError(f"{path}: truncated payload ({len(raw)} bytes, need {need})")
    features = np.frombuffer(raw, dtype="<f4", count=t_len * width,
                             offset=20).astype(np.float64).reshape(t_len, width)
    if len(raw) == need:
        return features, None
    if raw[need:need + 8] != GT_MAGIC:
        raise FormatError(f"{path}: trailing bytes are not a ground-truth block")
    gt_need = need + 8 + 4 * t_len * PARAM_DIM
    if len(raw) != gt_need:
        raise FormatError(f"{path}: ground-truth block has wrong size ({len(raw)} vs {gt_need})")
    params = np.frombuffer(raw, dtype="<f4", count=t_len * PARAM_DIM,
                           offset=need + 8).astype(np.float64).reshape(t_len, PARAM_DIM)
    return features, params


# ---------------------------------------------------------------------------
# Package assets
# ---------------------------------------------------------------------------

def build_embedding(seed: int, feature_dim: int = DEFAULT_FEATURE_DIM) -> np.ndarray:
    """Parameter-to-feature embedding E of shape (feature_dim, 157).

    Entries are N(0, 1/157) (scaled by 1/sqrt(157)) so feature magnitudes
    stay O(1); rounded through float32 to match the asset file.
    """
    stream = Stream(substream(seed, TAG_EMBEDDING, 0))
    scale = np.float64(np.float32(1.0 / np.sqrt(PARAM_DIM)))
    emb = (stream.normal_f32(feature_dim * PARAM_DIM) * scale).reshape(feature_dim, PARAM_DIM)
    return emb.astype(np.float32).astype(np.float64)


def _asset_path(name: str) -> str:
    return str(resources.files("dgtr").joinpath("data", name))


@lru_cache(maxsize=None)
def default_embedding() -> np.ndarray:
    """The shipped feature embedding (embedding_v1.bin)."""
    features, _ = read_feature_file(_asset_path("embedding_v1.bin"))
    return features


@lru_cache(maxsize=None)
def default_body() -> SyntheticBody:
    """The shipped synthetic body (body_v1.bin)."""
    return read_body_file(_asset_path("body_v1.bin"))


@lru_cache(maxsize=None)
def embedding_for_dim(feature_dim: int) -> np.ndarray:
    """The shipped embedding at native width, or a seeded rebuild otherwise.

    Non-default widths (shrunken test models) regenerate deterministically
    from the same asset seed.
    """
    if feature_dim == DEFAULT_FEATURE_DIM:
        return default_embedding()
    return build_embedding(ASSET_SEED, feature_dim)


# ---------------------------------------------------------------------------
# Sequence synthesis
# ---------------------------------------------------------------------------

@dataclass
class SyntheticDataSpec:
    """Controls for the sequence generator.

    Attributes:
        num_sequences: Number of independent sequences.
        seq_len: Frames per sequence.
        seed: Master seed; every derived quantity comes from substreams.
        noise_sigma: Std of the additive feature noise.
        freq_min / freq_max: Pose sinusoid frequency band, in cycles per
            sequence.
        amplitude: Upper bound of the per-channel sinusoid amplitude.
        feature_dim: Width of the synthesized features.
    """

    num_sequences: int = 4
    seq_len: int = 16
    seed: int = 7
    noise_sigma: float = 0.01
    freq_min: float = 0.5
    freq_max: float = 2.0
    amplitude: float = 0.3
    feature_dim: int = DEFAULT_FEATURE_DIM

    def validate(self) -> None:
        if self.num_sequences < 1:
            raise ConfigError(f"data: num_sequences must be >= 1, got {self.num_sequences}")
        if self.seq_len < 3:
            raise ConfigError(f"data: seq_len must be >= 3, got {self.seq_len}")
        if self.noise_sigma < 0:
            raise ConfigError(f"data: noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 0 < self.freq_min <= self.freq_max:
            raise ConfigError(
                f"data: need 0 < freq_min <= freq_max, got ({self.freq_min}, {self.freq_max})")


@dataclass
class SequenceSample:
    """One synthetic sequence with its derived ground truth."""

    name: str
    features: np.ndarray   # (L, feature_dim)
    params: np.ndarray     # (L, 157)
    rotmats: np.ndarray = field(init=False)   # (L, 24, 9)
    joints3d: np.ndarray = field(init=False)  # (L, 24, 3)
    joints2d: np.ndarray = field(init=False)  # (L, 24, 2)
    verts: np.ndarray = field(init=False)     # (L, 431, 3)

    _body: SyntheticBody | None = None

    def __post_init__(self) -> None:
        body = self._body if self._body is not None else default_body()
        length = self.params.shape[0]
        self.rotmats = np.stack([rot6d_to_rotmat_np(p[:POSE_DIM]) for p in self.params])
        joints, verts = [], []
        for p in self.params:
            j, v = synth_forward_np(p, body)
            joints.append(j)
            verts.append(v)
        self.joints3d = np.stack(joints)
        self.verts = np.stack(verts)
        self.joints2d = np.stack([
            project_weak_perspective_np(self.joints3d[t], self.params[t, BODY_IN_DIM:])
            for t in range(length)])

    def __len__(self) -> int:
        return self.params.shape[0]


def gen_sequence_params(spec: SyntheticDataSpec, index: int) -> np.ndarray:
    """Ground-truth parameter trajectory for sequence ``index``, shape (L, 157)."""
    length = spec.seq_len
    pose_stream = Stream(substream(spec.seed, TAG_DATA_POSE, index))
    freq = spec.freq_min + (spec.freq_max - spec.freq_min) * pose_stream.uniform(POSE_DIM)
    phase = 2.0 * np.pi * pose_stream.uniform(POSE_DIM)
    amp = spec.amplitude * (0.5 + 0.5 * pose_stream.uniform(POSE_DIM))

    shape_stream = Stream(substream(spec.seed, TAG_DATA_SHAPE, index))
    shape = 0.5 * shape_stream.normal(NUM_SHAPE)

    cam_stream = Stream(substream(spec.seed, TAG_DATA_CAMERA, index))
    cam_scale = 0.8 + 0.4 * cam_stream.uniform(1)[0]
    cam_trans = 0.1 * cam_stream.normal(2)

    t_grid = np.arange(length)[:, None] / length
    pose = neutral_params()[None, :POSE_DIM] + amp * np.sin(2.0 * np.pi * freq * t_grid + phase)
    params = np.empty((length, PARAM_DIM))
    params[:, :POSE_DIM] = pose
    params[:, POSE_DIM:BODY_IN_DIM] = shape
    params[:, BODY_IN_DIM] = cam_scale
    params[:, BODY_IN_DIM + 1:] = cam_trans
    return params.astype(np.float32).astype(np.float64)


def params_to_features(params: np.ndarray, embedding: np.ndarray,
                       noise_sigma: float, noise_stream: Stream | None) -> np.ndarray:
    """features[t] = E @ params[t] + sigma * noise[t], rounded through float32."""
    feats = params @ embedding.T
    if noise_sigma > 0 and noise_stream is not None:
        noise = noise_stream.normal(feats.size).reshape(feats.shape)
        feats = feats + noise_sigma * noise
    return feats.astype(np.float32).astype(np.float64)


def generate_dataset(spec: SyntheticDataSpec, embedding: np.ndarray | None = None,
                     body: SyntheticBody | None = None) -> list[SequenceSample]:
    """Generate ``spec.num_sequences`` sequences (bit-deterministic in the seed)."""
    spec.validate()
    if embedding is None:
        embedding = embedding_for_dim(spec.feature_dim)
    if embedding.shape != (spec.feature_dim, PARAM_DIM):
        raise ConfigError(
            f"embedding shape {embedding.shape} does not match feature_dim {spec.feature_dim}")
    samples = []
    for i in range(spec.num_sequences):
        params = gen_sequence_params(spec, i)
        noise_stream = Stream(substream(spec.seed, TAG_DATA_NOISE, i))
        feats = params_to_features(params, embedding, spec.noise_sigma, noise_stream)
        samples.append(SequenceSample(f"seq_{i:03d}", feats, params, _body=body))
    return samples


def write_dataset(samples: list[SequenceSample], out_dir: str) -> list[str]:
    """Write each sample to ``<out_dir>/<name>.dgtrfeat``; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for s in samples:
        path = os.path.join(out_dir, f"{s.name}.dgtrfeat")
        write_feature_file(path, s.features, s.params)
        paths.append(path)
    return paths


def load_dataset(data_dir: str, body: SyntheticBody | None = None,
                 require_gt: bool = True) -> list[SequenceSample]:
    """Load every ``*.dgtrfeat`` file in a directory (sorted by name).

    Raises:
        FormatError: If a file is malformed or lacks ground truth while
            ``require_gt`` is set.
        ConfigError: If the directory contains no feature files.
    """
    names = sorted(n for n in os.listdir(data_dir) if n.endswith(".dgtrfeat"))
    if not names:
        raise ConfigError(f"no .dgtrfeat files found in {data_dir}")
    samples = []
    for name in names:
        path = os.path.join(data_dir, name)
        feats, params = read_feature_file(path)
        if params is None:
            if require_gt:
                raise FormatError(f"{path}: missing ground-truth block")
            params = np.tile(neutral_params(), (feats.shape[0], 1))
        samples.append(SequenceSample(name[:-len(".dgtrfeat")], feats, params, _body=body))
    return samples


def gen_stitched(seed: int, reps: int = 30, seq_len: int = 16,
                 feature_dim: int = DEFAULT_FEATURE_DIM,
                 embedding: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Two static poses, each repeated ``reps`` times, butted together.

    The result is a (2 * reps, feature_dim) feature matrix whose consecutive
    frames are identical except across the single seam at reps-1 -> reps.
    No noise is added, so the input discontinuity is exactly one frame wide.

    Args:
        seed: Seed for the two poses.
        reps: Repetitions per pose; must be >= seq_len / 2 so evaluation
            windows fit inside each half.
        seq_len: Window length the features will be consumed with.
        feature_dim: Width of the synthesized features.

    Returns:
        (features, params) with params of shape (2 * reps, 157).
    """
    if reps < (seq_len + 1) // 2:
        raise ConfigError(f"stitch: reps must be >= seq_len/2 = {(seq_len + 1) // 2}, got {reps}")
    if embedding is None:
        embedding = embedding_for_dim(feature_dim)
    stream = Stream(substream(seed, TAG_STITCH, 0))
    poses = []
    for _ in range(2):
        p = neutral_params()
        p[:POSE_DIM] += 0.4 * stream.normal(POSE_DIM)
        p[POSE_DIM:BODY_IN_DIM] = 0.5 * stream.normal(NUM_SHAPE)
        poses.append(p)
    params = np.vstack([np.tile(poses[0], (reps, 1)), np.tile(poses[1], (reps, 1))])
    params = params.astype(np.float32).astype(np.float64)
    feats = params_to_features(params, embedding, 0.0, None)
    return feats, params
