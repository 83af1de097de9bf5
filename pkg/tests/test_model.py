"""Tests for the assembled two-branch model."""

import numpy as np
import numpy.testing as npt
import pytest

from dgtr import autodiff as ad
from dgtr import body, gma, ldr
from dgtr.autodiff import Tensor
from dgtr.data_synth import default_body
from dgtr.errors import ConfigError, ShapeError
from dgtr.model import DgtrModel, ModelConfig, fuse_and_regress, local_window_indices
from dgtr.objectives import FramePrediction
from dgtr.rng import Stream


def tiny_cfg(**kw):
    base = dict(feature_dim=24, seq_len=4, gma_layers=1, gma_heads=2, gma_dim=16,
                gma_ffn_dim=24, ldr_hidden=12, ldr_ffn_dim=16, reg_hidden=24,
                reg_iters=2)
    base.update(kw)
    return ModelConfig.create(**base)


def window(seed, cfg):
    return Stream(seed).normal(cfg.seq_len * cfg.feature_dim).reshape(
        cfg.seq_len, cfg.feature_dim)


# ---------------------------------------------------------------------------
# Window geometry
# ---------------------------------------------------------------------------

def test_local_window_indices():
    assert local_window_indices(16, 3) == [7, 8, 9]
    assert local_window_indices(4, 3) == [1, 2, 3]
    assert local_window_indices(2, 3) == [0, 1, 1]   # clamped at the end
    assert local_window_indices(3, 5) == [0, 0, 1, 2, 2]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def test_create_links_widths():
    cfg = tiny_cfg()
    cfg.validate()
    assert cfg.gma.input_dim == cfg.ldr.input_dim == cfg.reg.feature_dim == 24
    assert cfg.gma.seq_len == cfg.seq_len


def test_validation_rejects_inconsistency():
    with pytest.raises(ConfigError):
        tiny_cfg(use_gma=False, use_ldr=False).validate()
    cfg = tiny_cfg()
    cfg.gma.input_dim = 99
    with pytest.raises(ConfigError):
        cfg.validate()
    cfg2 = tiny_cfg()
    cfg2.gma.seq_len = 99
    with pytest.raises(ConfigError):
        cfg2.validate()


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def test_forward_window_output_shapes():
    model = DgtrModel(tiny_cfg(), seed=1)
    pred = model.forward_window(window(2, model.cfg))
    assert isinstance(pred, FramePrediction)
    assert pred.params.shape == (157,)
    assert pred.rotmats.shape == (24, 9)
    assert pred.joints3d.shape == (24, 3)
    assert pred.joints2d.shape == (24, 2)
    assert pred.verts.shape == (431, 3)


def test_forward_window_shape_error():
    model = DgtrModel(tiny_cfg(), seed=1)
    with pytest.raises(ShapeError):
        model.forward_window(np.zeros((3, 24)))


def test_fusion_is_additive():
    # Computing the branch outputs separately, summing them, and running the
    # regressor must reproduce the model's forward pass bit for bit.
    cfg = tiny_cfg()
    model = DgtrModel(cfg, seed=3)
    feats = window(4, cfg)
    pred = model.forward_window(feats)

    g = gma.forward(Tensor(feats), model.params, cfg.gma)
    local = feats[local_window_indices(cfg.seq_len, cfg.ldr.window)]
    l = ldr.forward(Tensor(local), model.params, cfg.ldr)
    fused = Tensor(g.data + l.data)
    expect = body.regress_params(fused, model.params, cfg.reg)
    npt.assert_array_equal(pred.params.data, expect.data)


def test_disabled_branch_contributes_exact_zero():
    # A single-branch model holding the full model's parameters must equal
    # the regressor applied to that branch's output alone.
    cfg = tiny_cfg()
    full = DgtrModel(cfg, seed=5)
    feats = window(6, cfg)

    gma_only = DgtrModel(tiny_cfg(use_ldr=False), params=full.params, body=full.body)
    g = gma.forward(Tensor(feats), full.params, cfg.gma)
    expect = body.regress_params(g, full.params, cfg.reg)
    npt.assert_array_equal(gma_only.forward_window(feats).params.data, expect.data)

    ldr_only = DgtrModel(tiny_cfg(use_gma=False), params=full.params, body=full.body)
    local = feats[local_window_indices(cfg.seq_len, cfg.ldr.window)]
    l = ldr.forward(Tensor(local), full.params, cfg.ldr)
    expect = body.regress_params(l, full.params, cfg.reg)
    npt.assert_array_equal(ldr_only.forward_window(feats).params.data, expect.data)


def test_single_branch_models_build_fewer_parameters():
    full = DgtrModel(tiny_cfg(), seed=0)
    no_ldr = DgtrModel(tiny_cfg(use_ldr=False), seed=0)
    no_gma = DgtrModel(tiny_cfg(use_gma=False), seed=0)
    assert not any(n.startswith("ldr.") for n in no_ldr.params)
    assert not any(n.startswith("gma.") for n in no_gma.params)
    assert no_ldr.num_parameters() < full.num_parameters()
    assert no_gma.num_parameters() < full.num_parameters()
    assert full.num_parameters() == sum(t.data.size for t in full.params.values())


def test_prediction_is_differentiable_to_all_parameters():
    cfg = tiny_cfg()
    model = DgtrModel(cfg, seed=7)
    pred = model.forward_window(window(8, cfg))
    loss = ad.sum_all(ad.mul(pred.joints2d, pred.joints2d))
    model.zero_grad()
    ad.backward(loss)
    with_grad = [n for n, t in model.params.items()
                 if t.grad is not None and np.any(t.grad != 0.0)]
    # Every parameter tensor participates in the forward graph.
    assert set(with_grad) == set(model.params)


def test_zero_grad_resets():
    cfg = tiny_cfg()
    model = DgtrModel(cfg, seed=7)
    pred = model.forward_window(window(9, cfg))
    ad.backward(ad.sum_all(pred.joints3d))
    model.zero_grad()
    assert all(t.grad is None for t in model.params.values())


def test_forward_deterministic_and_camera_guard():
    cfg = tiny_cfg()
    model = DgtrModel(cfg, seed=11)
    feats = window(12, cfg)
    a = model.forward_window(feats)
    b = model.forward_window(feats)
    npt.assert_array_equal(a.params.data, b.params.data)
    npt.assert_array_equal(a.verts.data, b.verts.data)
    # The freshly initialized camera scale sits near 1, well clear of the guard.
    assert a.params.data[154] > 0.5
