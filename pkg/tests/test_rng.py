"""Tests for the portable SplitMix64 generator."""

import numpy as np
import numpy.testing as npt

from dgtr.rng import Stream, mix64, substream

MASK = (1 << 64) - 1


def reference_sequence(seed, n):
    """Independent re-implementation: the classic sequential recurrence."""
    state = seed & MASK
    out = []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_counter_form_matches_sequential_recurrence():
    for seed in (0, 1, 42, 0xDEADBEEF, MASK):
        got = Stream(seed).u64(16).tolist()
        assert got == reference_sequence(seed, 16)


def test_known_first_output():
    # mix64(0 + gamma) computed by hand with the reference above.
    assert Stream(0).u64(1)[0] == reference_sequence(0, 1)[0]
    assert mix64(0x9E3779B97F4A7C15) == reference_sequence(0, 1)[0]


def test_stream_is_positioned():
    a = Stream(7)
    first = a.u64(5)
    second = a.u64(5)
    both = Stream(7).u64(10)
    npt.assert_array_equal(np.concatenate([first, second]), both)


def test_uniform_range_and_determinism():
    u = Stream(3).uniform(10_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    npt.assert_array_equal(u, Stream(3).uniform(10_000))
    # Mean of U[0,1) should be near 0.5.
    assert abs(u.mean() - 0.5) < 0.02


def test_normal_consumes_two_draws_each():
    s = Stream(11)
    s.normal(7)
    assert s.pos == 14
    # The Box-Muller construction from the raw outputs, reproduced by hand.
    raw = Stream(11).u64(2)
    u1 = ((int(raw[0]) >> 11) + 1) * 2.0 ** -53
    u2 = (int(raw[1]) >> 11) * 2.0 ** -53
    expect = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    npt.assert_allclose(Stream(11).normal(1)[0], expect, rtol=0, atol=0)


def test_normal_moments():
    z = Stream(5).normal(50_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02


def test_substream_separation():
    seeds = {substream(9, tag, idx) for tag in range(8) for idx in range(8)}
    assert len(seeds) == 64  # no collisions among nearby tags
    assert substream(9, 1, 2) == substream(9, 1, 2)
    assert substream(9, 1, 2) != substream(9, 2, 1)


def test_normal_f32_is_float32_representable():
    z = Stream(13).normal_f32(100)
    npt.assert_array_equal(z, z.astype(np.float32).astype(np.float64))
