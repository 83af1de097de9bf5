"""Tests for synthetic data generation and feature-file serialization."""

import numpy as np
import numpy.testing as npt
import pytest

from dgtr import body, data_synth
from dgtr.data_synth import (ASSET_SEED, SequenceSample, SyntheticDataSpec,
                             build_embedding, gen_sequence_params, gen_stitched,
                             generate_dataset, load_dataset, read_feature_file,
                             write_dataset, write_feature_file)
from dgtr.errors import ConfigError, FormatError
from dgtr.rng import Stream


def f32(a):
    return np.asarray(a).astype(np.float32).astype(np.float64)


def small_spec(**kw):
    base = dict(num_sequences=2, seq_len=8, seed=3, noise_sigma=0.01,
                feature_dim=40)
    base.update(kw)
    return SyntheticDataSpec(**base)


SMALL_EMB = build_embedding(5, 40)
SMALL_BODY = body.build_body(5)


# ---------------------------------------------------------------------------
# Feature files
# ---------------------------------------------------------------------------

def test_feature_file_round_trip(tmp_path):
    feats = f32(Stream(1).normal(6 * 5).reshape(6, 5))
    params = f32(Stream(2).normal(6 * 157).reshape(6, 157))
    path = str(tmp_path / "a.dgtrfeat")
    write_feature_file(path, feats, params)
    r_feats, r_params = read_feature_file(path)
    npt.assert_array_equal(r_feats, feats)
    npt.assert_array_equal(r_params, params)


def test_feature_file_without_ground_truth(tmp_path):
    feats = f32(Stream(3).normal(12).reshape(4, 3))
    path = str(tmp_path / "b.dgtrfeat")
    write_feature_file(path, feats)
    r_feats, r_params = read_feature_file(path)
    npt.assert_array_equal(r_feats, feats)
    assert r_params is None


def test_feature_file_corruption_detected(tmp_path):
    feats = f32(Stream(4).normal(12).reshape(4, 3))
    params = f32(Stream(5).normal(4 * 157).reshape(4, 157))
    path = tmp_path / "c.dgtrfeat"
    write_feature_file(str(path), feats, params)
    raw = path.read_bytes()

    cases = {
        "magic": b"XXXXXXXX" + raw[8:],
        "version": raw[:8] + np.array([9], dtype="<u4").tobytes() + raw[12:],
        "truncated": raw[: 20 + 4 * 5],
        "gt_magic": raw[:20 + 48] + b"NOTGTXXX" + raw[20 + 48 + 8:],
        "gt_size": raw[:-4],
    }
    for name, blob in cases.items():
        bad = tmp_path / f"bad_{name}.dgtrfeat"
        bad.write_bytes(blob)
        with pytest.raises(FormatError):
            read_feature_file(str(bad))


def test_feature_file_write_validation(tmp_path):
    with pytest.raises(FormatError):
        write_feature_file(str(tmp_path / "x.bin"), np.zeros(5))
    with pytest.raises(FormatError):
        write_feature_file(str(tmp_path / "y.bin"), np.zeros((4, 3)), np.zeros((4, 10)))


# ---------------------------------------------------------------------------
# Embedding and shipped assets
# ---------------------------------------------------------------------------

def test_build_embedding_properties():
    emb = build_embedding(9, feature_dim=300)
    assert emb.shape == (300, 157)
    npt.assert_array_equal(emb, f32(emb))
    npt.assert_array_equal(emb, build_embedding(9, feature_dim=300))
    assert not np.array_equal(emb, build_embedding(10, feature_dim=300))
    npt.assert_allclose(emb.std(), 1.0 / np.sqrt(157), rtol=0.02)


def test_shipped_assets_match_seeded_rebuild():
    emb = data_synth.default_embedding()
    assert emb.shape == (2048, 157)
    npt.assert_array_equal(emb, build_embedding(ASSET_SEED))
    shipped_body = data_synth.default_body()
    rebuilt = body.build_body(ASSET_SEED)
    npt.assert_array_equal(shipped_body.w_joints, rebuilt.w_joints)
    npt.assert_array_equal(shipped_body.w_verts, rebuilt.w_verts)
    assert data_synth.embedding_for_dim(2048) is emb
    narrow = data_synth.embedding_for_dim(32)
    assert narrow.shape == (32, 157)
    npt.assert_array_equal(narrow, build_embedding(ASSET_SEED, 32))


# ---------------------------------------------------------------------------
# Sequence synthesis
# ---------------------------------------------------------------------------

def test_spec_validation():
    with pytest.raises(ConfigError):
        small_spec(num_sequences=0).validate()
    with pytest.raises(ConfigError):
        small_spec(seq_len=2).validate()
    with pytest.raises(ConfigError):
        small_spec(noise_sigma=-0.1).validate()
    with pytest.raises(ConfigError):
        small_spec(freq_min=2.0, freq_max=1.0).validate()


def test_sequence_params_structure():
    spec = small_spec(seq_len=12)
    params = gen_sequence_params(spec, 0)
    assert params.shape == (12, 157)
    npt.assert_array_equal(params, f32(params))
    # Shape coefficients and camera are constant over the sequence.
    assert np.all(params[:, 144:154] == params[0, 144:154])
    assert np.all(params[:, 154:] == params[0, 154:])
    assert 0.8 <= params[0, 154] <= 1.2
    # Pose stays inside the sinusoid amplitude band around neutral.
    neutral = body.neutral_params()[:144]
    assert np.max(np.abs(params[:, :144] - neutral)) <= spec.amplitude + 1e-6
    # Different sequence indices give different trajectories.
    assert not np.array_equal(params, gen_sequence_params(spec, 1))


def test_generate_dataset_deterministic():
    spec = small_spec()
    a = generate_dataset(spec, embedding=SMALL_EMB, body=SMALL_BODY)
    b = generate_dataset(spec, embedding=SMALL_EMB, body=SMALL_BODY)
    assert len(a) == 2
    for sa, sb in zip(a, b):
        npt.assert_array_equal(sa.features, sb.features)
        npt.assert_array_equal(sa.params, sb.params)
        npt.assert_array_equal(sa.joints3d, sb.joints3d)


def test_features_are_noisy_linear_embedding():
    spec = small_spec(noise_sigma=0.0, num_sequences=1)
    clean = generate_dataset(spec, embedding=SMALL_EMB, body=SMALL_BODY)[0]
    npt.assert_array_equal(clean.features, f32(clean.params @ SMALL_EMB.T))

    noisy_spec = small_spec(noise_sigma=0.05, num_sequences=1)
    noisy = generate_dataset(noisy_spec, embedding=SMALL_EMB, body=SMALL_BODY)[0]
    resid = noisy.features - clean.features
    assert resid.std() == pytest.approx(0.05, rel=0.25)


def test_derived_ground_truth_is_consistent():
    sample = generate_dataset(small_spec(num_sequences=1), embedding=SMALL_EMB,
                              body=SMALL_BODY)[0]
    t = 3
    npt.assert_array_equal(sample.rotmats[t], body.rot6d_to_rotmat_np(sample.params[t, :144]))
    joints, verts = body.synth_forward_np(sample.params[t], SMALL_BODY)
    npt.assert_array_equal(sample.joints3d[t], joints)
    npt.assert_array_equal(sample.verts[t], verts)
    npt.assert_array_equal(
        sample.joints2d[t],
        body.project_weak_perspective_np(joints, sample.params[t, 154:]))
    assert len(sample) == 8


def test_embedding_shape_mismatch_rejected():
    with pytest.raises(ConfigError):
        generate_dataset(small_spec(feature_dim=64), embedding=SMALL_EMB)


# ---------------------------------------------------------------------------
# Dataset round trip
# ---------------------------------------------------------------------------

def test_write_and_load_dataset(tmp_path):
    samples = generate_dataset(small_spec(), embedding=SMALL_EMB, body=SMALL_BODY)
    paths = write_dataset(samples, str(tmp_path))
    assert len(paths) == 2
    loaded = load_dataset(str(tmp_path), body=SMALL_BODY)
    assert [s.name for s in loaded] == ["seq_000", "seq_001"]
    for orig, back in zip(samples, loaded):
        npt.assert_array_equal(back.features, orig.features)
        npt.assert_array_equal(back.params, orig.params)
        npt.assert_array_equal(back.joints3d, orig.joints3d)
        npt.assert_array_equal(back.joints2d, orig.joints2d)


def test_load_dataset_requires_ground_truth(tmp_path):
    write_feature_file(str(tmp_path / "a.dgtrfeat"), np.zeros((4, 3)))
    with pytest.raises(FormatError):
        load_dataset(str(tmp_path), body=SMALL_BODY)
    loaded = load_dataset(str(tmp_path), body=SMALL_BODY, require_gt=False)
    npt.assert_array_equal(loaded[0].params, np.tile(body.neutral_params(), (4, 1)))


def test_load_dataset_empty_dir(tmp_path):
    with pytest.raises(ConfigError):
        load_dataset(str(tmp_path))


# ---------------------------------------------------------------------------
# Stitched sequences
# ---------------------------------------------------------------------------

def test_stitched_has_single_seam():
    feats, params = gen_stitched(seed=12, reps=10, seq_len=8, feature_dim=40)
    assert feats.shape == (20, 40)
    assert params.shape == (20, 157)
    for t in range(19):
        same = np.array_equal(feats[t], feats[t + 1])
        assert same == (t != 9), f"unexpected transition state at {t}"
    assert not np.array_equal(params[0], params[-1])
    # Deterministic in the seed.
    feats2, _ = gen_stitched(seed=12, reps=10, seq_len=8, feature_dim=40)
    npt.assert_array_equal(feats, feats2)


def test_stitched_rejects_short_halves():
    with pytest.raises(ConfigError):
        gen_stitched(seed=1, reps=3, seq_len=8, feature_dim=40)
