"""Tests for the body model, rotation representation, camera, and regressor."""

import numpy as np
import numpy.testing as npt
import pytest

from dgtr import body
from dgtr.autodiff import Tensor, backward
from dgtr.errors import CameraError, FormatError, ShapeError
from dgtr.initializers import ParamBuilder
from dgtr.rng import Stream


# ---------------------------------------------------------------------------
# Neutral parameters
# ---------------------------------------------------------------------------

def test_neutral_params_layout():
    p = body.neutral_params()
    assert p.shape == (157,)
    blocks = p[:144].reshape(24, 6)
    npt.assert_array_equal(blocks, np.tile([1.0, 0, 0, 0, 1.0, 0], (24, 1)))
    npt.assert_array_equal(p[144:154], np.zeros(10))
    npt.assert_array_equal(p[154:], [1.0, 0.0, 0.0])


def test_neutral_pose_maps_to_identity_rotations():
    rot = body.rot6d_to_rotmat_np(body.neutral_params()[:144])
    npt.assert_allclose(rot, np.tile([1, 0, 0, 0, 1, 0, 0, 0, 1.0], (24, 1)), atol=1e-12)


# ---------------------------------------------------------------------------
# 6D rotation representation
# ---------------------------------------------------------------------------

def test_rot6d_known_planar_rotation():
    # Column vectors of a rotation about z; the second input is deliberately
    # not orthogonal to the first so Gram-Schmidt has work to do.
    theta = 0.3
    c, s = np.cos(theta), np.sin(theta)
    b1 = np.array([c, s, 0.0])
    b2 = np.array([-s, c, 0.0])
    pose = np.tile(np.concatenate([2.5 * b1, b2 + 0.7 * b1]), 24)
    rot = body.rot6d_to_rotmat_np(pose)
    expect = np.concatenate([b1, b2, [0.0, 0.0, 1.0]])
    npt.assert_allclose(rot, np.tile(expect, (24, 1)), atol=1e-8)


def test_rot6d_outputs_are_rotation_matrices():
    rng = Stream(17)
    for trial in range(10):
        pose = rng.normal(144)
        rot = body.rot6d_to_rotmat_np(pose)
        assert rot.shape == (24, 9)
        # The 1e-8 epsilon guard in the row normaliser biases norms slightly
        # below one for small-magnitude inputs, hence the 1e-5 tolerance.
        for row in rot:
            b1, b2, b3 = row[:3], row[3:6], row[6:9]
            npt.assert_allclose(np.linalg.norm(b1), 1.0, atol=1e-5)
            npt.assert_allclose(np.linalg.norm(b2), 1.0, atol=1e-5)
            npt.assert_allclose(b1 @ b2, 0.0, atol=1e-5)
            npt.assert_allclose(b3, np.cross(b1, b2), atol=1e-12)
            mat = np.stack([b1, b2, b3], axis=1)
            npt.assert_allclose(np.linalg.det(mat), 1.0, atol=1e-5)


def test_rot6d_gradient_finite_difference():
    rng = Stream(18)
    pose_data = rng.normal(144)
    proj = rng.normal(24 * 9).reshape(24, 9)

    def loss_value(vec):
        return float((body.rot6d_to_rotmat_np(vec) * proj).sum())

    pose = Tensor(pose_data, requires_grad=True)
    out = body.rot6d_to_rotmat(pose)
    from dgtr import autodiff as ad
    loss = ad.sum_all(ad.mul(out, Tensor(proj)))
    backward(loss)
    eps = 1e-6
    for idx in range(0, 144, 13):
        bumped = pose_data.copy()
        bumped[idx] += eps
        dipped = pose_data.copy()
        dipped[idx] -= eps
        fd = (loss_value(bumped) - loss_value(dipped)) / (2 * eps)
        npt.assert_allclose(pose.grad[idx], fd, rtol=1e-5, atol=1e-7)


def test_rot6d_shape_error():
    with pytest.raises(ShapeError):
        body.rot6d_to_rotmat(Tensor(np.zeros(143)))


# ---------------------------------------------------------------------------
# Synthetic body
# ---------------------------------------------------------------------------

def test_build_body_deterministic_and_f32_exact():
    b1 = body.build_body(1597)
    b2 = body.build_body(1597)
    for name in ("w_joints", "rest_joints", "w_verts", "rest_verts"):
        arr = getattr(b1, name)
        npt.assert_array_equal(arr, getattr(b2, name))
        npt.assert_array_equal(arr, arr.astype(np.float32).astype(np.float64))
    assert b1.w_joints.shape == (72, 154)
    assert b1.w_verts.shape == (1293, 154)
    b3 = body.build_body(7)
    assert not np.array_equal(b1.w_joints, b3.w_joints)


def test_body_file_round_trip(tmp_path):
    b = body.build_body(1597)
    path = str(tmp_path / "body.bin")
    body.write_body_file(path, b)
    loaded = body.read_body_file(path)
    assert loaded.seed == 1597
    for name in ("w_joints", "rest_joints", "w_verts", "rest_verts"):
        npt.assert_array_equal(getattr(loaded, name), getattr(b, name))


def test_body_file_rejects_corruption(tmp_path):
    b = body.build_body(3)
    path = str(tmp_path / "body.bin")
    body.write_body_file(path, b)
    raw = open(path, "rb").read()

    bad_magic = tmp_path / "magic.bin"
    bad_magic.write_bytes(b"NOTABODY" + raw[8:])
    with pytest.raises(FormatError):
        body.read_body_file(str(bad_magic))

    truncated = tmp_path / "short.bin"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(FormatError):
        body.read_body_file(str(truncated))

    bad_version = tmp_path / "version.bin"
    bad_version.write_bytes(raw[:8] + np.array([99], dtype="<u4").tobytes() + raw[12:])
    with pytest.raises(FormatError):
        body.read_body_file(str(bad_version))


def test_synth_forward_matches_numpy_twin_and_mirror():
    b = body.build_body(5)
    params = body.neutral_params() + 0.1 * Stream(6).normal(157)
    joints_t, verts_t = body.synth_forward(Tensor(params), b)
    joints_n, verts_n = body.synth_forward_np(params, b)
    npt.assert_array_equal(joints_t.data, joints_n)
    npt.assert_array_equal(verts_t.data, verts_n)
    # Independent mirror of the affine map.
    npt.assert_allclose(joints_n, (b.w_joints @ params[:154] + b.rest_joints).reshape(24, 3),
                        rtol=1e-15)
    assert joints_n.shape == (24, 3)
    assert verts_n.shape == (431, 3)


def test_synth_forward_ignores_camera_entries():
    b = body.build_body(5)
    params = body.neutral_params() + 0.1 * Stream(7).normal(157)
    other = params.copy()
    other[154:] = [9.0, -4.0, 2.0]
    j1, v1 = body.synth_forward_np(params, b)
    j2, v2 = body.synth_forward_np(other, b)
    npt.assert_array_equal(j1, j2)
    npt.assert_array_equal(v1, v2)


# ---------------------------------------------------------------------------
# Weak-perspective camera
# ---------------------------------------------------------------------------

def test_projection_hand_case():
    points = np.array([[3.0, 4.0, 7.0], [0.0, -1.0, 2.0]])
    cam = np.array([2.0, 1.0, -1.0])
    expect = np.array([[7.0, 7.0], [1.0, -3.0]])
    npt.assert_array_equal(body.project_weak_perspective_np(points, cam), expect)
    got = body.project_weak_perspective(Tensor(points), Tensor(cam)).data
    npt.assert_array_equal(got, expect)


def test_projection_twins_agree_on_random_input():
    rng = Stream(8)
    points = rng.normal(30).reshape(10, 3)
    cam = np.array([0.5 + rng.uniform(1)[0], *rng.normal(2)])
    npt.assert_array_equal(body.project_weak_perspective(Tensor(points), Tensor(cam)).data,
                           body.project_weak_perspective_np(points, cam))


def test_projection_rejects_nonpositive_scale():
    points = np.zeros((2, 3))
    for scale in (0.0, -0.5):
        cam = np.array([scale, 0.0, 0.0])
        with pytest.raises(CameraError):
            body.project_weak_perspective(Tensor(points), Tensor(cam))
        with pytest.raises(CameraError):
            body.project_weak_perspective_np(points, cam)


def test_projection_shape_errors():
    with pytest.raises(ShapeError):
        body.project_weak_perspective(Tensor(np.zeros((2, 2))), Tensor(np.array([1.0, 0, 0])))
    with pytest.raises(ShapeError):
        body.project_weak_perspective(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)))


# ---------------------------------------------------------------------------
# Iterative regressor
# ---------------------------------------------------------------------------

def reg_cfg(**kw):
    base = dict(feature_dim=16, hidden_dim=32, num_iters=3)
    base.update(kw)
    return body.RegressorConfig(**base)


def build_reg(cfg, seed=0):
    b = ParamBuilder(seed)
    body.build_regressor_params(b, cfg)
    return b.params


def test_regressor_starts_from_learnable_neutral():
    params = build_reg(reg_cfg())
    init = params["reg.init"]
    assert init.requires_grad
    npt.assert_array_equal(init.data, body.neutral_params())
    # Zero the output layer: every refinement step is then a no-op.
    params["reg.out.weight"].data[:] = 0.0
    feats = Tensor(Stream(9).normal(16))
    out = body.regress_params(feats, params, reg_cfg())
    npt.assert_array_equal(out.data, init.data)


def _gelu(x):
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def test_regressor_matches_numpy_mirror():
    cfg = reg_cfg()
    params = build_reg(cfg, seed=4)
    feats = Stream(10).normal(16)
    est = params["reg.init"].data.copy()
    for _ in range(cfg.num_iters):
        x = np.concatenate([feats, est])
        h = _gelu(x @ params["reg.fc.weight"].data + params["reg.fc.bias"].data)
        est = est + h @ params["reg.out.weight"].data + params["reg.out.bias"].data
    got = body.regress_params(Tensor(feats), params, cfg).data
    npt.assert_allclose(got, est, rtol=1e-12, atol=1e-14)
    assert got.shape == (157,)


def test_regressor_iteration_count_matters():
    params = build_reg(reg_cfg(), seed=4)
    feats = Tensor(Stream(11).normal(16))
    one = body.regress_params(feats, params, reg_cfg(num_iters=1)).data
    two = body.regress_params(feats, params, reg_cfg(num_iters=2)).data
    assert not np.allclose(one, two)


def test_regressor_output_layer_is_downscaled():
    cfg = reg_cfg(feature_dim=64, hidden_dim=256)
    params = build_reg(cfg, seed=2)
    out_std = params["reg.out.weight"].data.std()
    expect = 0.01 * np.sqrt(2.0 / (256 + 157))
    npt.assert_allclose(out_std, expect, rtol=0.05)


def test_regressor_feature_shape_error():
    cfg = reg_cfg()
    with pytest.raises(ShapeError):
        body.regress_params(Tensor(np.zeros(17)), build_reg(cfg), cfg)
