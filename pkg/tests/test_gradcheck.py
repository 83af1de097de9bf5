"""Tests for the finite-difference gradient checker."""

import numpy as np
import pytest

from dgtr import autodiff as ad
from dgtr.autodiff import Tensor
from dgtr.errors import ConfigError
from dgtr.gradcheck import (CheckRow, check_loss_gradients, fd_entry, model_probe,
                            probe_model_config, relative_error)
from dgtr.rng import Stream


def test_relative_error_scale_awareness():
    assert relative_error(1.0, 1.0) == 0.0
    assert relative_error(0.0, 1e-6) == 1e-6          # small values: absolute
    assert relative_error(2e6, 1e6) == pytest.approx(0.5)  # large values: relative


def quadratic_setup():
    w = Tensor(Stream(1).normal(6).reshape(2, 3), requires_grad=True, name="w")
    x = np.arange(6.0).reshape(3, 2)

    def loss_builder():
        y = ad.matmul(w, Tensor(x))
        return ad.sum_all(ad.mul(y, y))

    return loss_builder, {"w": w}


def test_fd_entry_matches_hand_derivative():
    loss_builder, params = quadratic_setup()
    w = params["w"]
    # d/dw of sum((w x)^2) = 2 (w x) x^T, exact for the quadratic form.
    x = np.arange(6.0).reshape(3, 2)
    expect = 2.0 * (w.data @ x) @ x.T
    for i in range(6):
        fd = fd_entry(loss_builder, w, i, eps=1e-5)
        assert relative_error(float(expect.flat[i]), fd) < 1e-8
    # The probed entry is restored afterwards.
    np.testing.assert_array_equal(w.data, Stream(1).normal(6).reshape(2, 3))


def test_check_passes_on_correct_gradients():
    loss_builder, params = quadratic_setup()
    rows = check_loss_gradients(loss_builder, params, eps=1e-5, threshold=1e-6)
    assert len(rows) == 1
    assert isinstance(rows[0], CheckRow)
    assert rows[0].name == "w"
    assert rows[0].entries == 6
    assert rows[0].ok


def test_corruption_is_detected():
    loss_builder, params = quadratic_setup()
    rows = check_loss_gradients(loss_builder, params, corrupt="w")
    assert not rows[0].ok
    assert rows[0].max_rel_err > 0.1
    with pytest.raises(ConfigError):
        check_loss_gradients(loss_builder, params, corrupt="nonexistent")


def test_entry_cap_subsamples_large_tensors():
    big = Tensor(Stream(2).normal(500), requires_grad=True, name="big")

    def loss_builder():
        return ad.sum_all(ad.mul(big, big))

    rows = check_loss_gradients(loss_builder, {"big": big}, entry_cap=10)
    assert rows[0].entries <= 10
    assert rows[0].ok


def test_model_probe_end_to_end():
    # One seed of the full-model sweep at a reduced entry cap; the acceptance
    # suite runs the heavier multi-seed version.
    loss_builder, model = model_probe(seed=0)
    params = model.params
    rows = check_loss_gradients(loss_builder, params, eps=1e-4,
                                threshold=1e-4, entry_cap=4, seed=0)
    assert {r.name for r in rows} == set(params)
    worst = max(r.max_rel_err for r in rows)
    assert all(r.ok for r in rows), f"worst relative error {worst:.3g}"


def test_probe_config_is_small_but_complete():
    cfg = probe_model_config()
    cfg.validate()
    assert cfg.use_gma and cfg.use_ldr
    assert cfg.feature_dim < 256  # small enough for finite differences
