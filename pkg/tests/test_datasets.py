import math

import numpy as np
import pytest

from cfmsr.codec import box_downsample
from cfmsr.datasets import (TOY_OFFSET, bimodal_modes, bimodal_separation, gen_2d_toy, gen_bimodal,
                            gen_texture, toy_displacement, toy_rotation)
from cfmsr.solvers import SolverConfig, integrate
from cfmsr.tensor_core import ShapeError


def test_texture_deterministic_and_ranged():
    a = gen_texture(3, 4, 32, 4)
    b = gen_texture(3, 4, 32, 4)
    assert all(x.high.tobytes() == y.high.tobytes() for x, y in zip(a, b))
    for s in a:
        assert s.high.min() >= 0.0 and s.high.max() <= 1.0
        assert s.low.shape == (1, 8, 8)


def test_texture_low_is_box_average():
    for s in gen_texture(1, 3, 64, 4):
        ref = s.high.astype(np.float64).reshape(1, 16, 4, 16, 4).mean(axis=(2, 4))
        np.testing.assert_allclose(s.low, ref, atol=1e-6)
        np.testing.assert_array_equal(s.low, box_downsample(s.high, 4))


def test_texture_stream_isolation():
    short = gen_texture(9, 2, 32, 4)
    long = gen_texture(9, 5, 32, 4)
    assert all(a.high.tobytes() == b.high.tobytes() for a, b in zip(short, long))


def test_texture_in_f64_is_exact():
    s = gen_texture(2, 1, 32, 4, dtype=np.float64)[0]
    np.testing.assert_array_equal(s.low, s.high.reshape(1, 8, 4, 8, 4).mean(axis=(2, 4)))


def test_bad_dims():
    with pytest.raises(ShapeError):
        gen_texture(0, 1, 30, 4)
    with pytest.raises(ValueError):
        gen_bimodal(0, 2, 32, 4, period=3)


def test_bimodal_low_collision_and_separation():
    s = gen_bimodal(5, 8, 32, 4)
    for a, b in zip(s[::2], s[1::2]):
        assert (a.mode, b.mode) == ("A", "B")
        assert a.low.tobytes() == b.low.tobytes()
        d = np.linalg.norm(a.high.astype(np.float64) - b.high)
        assert d > 0.1 * math.sqrt(a.high.size)
        assert d == pytest.approx(bimodal_separation(32), rel=1e-5)
    assert sorted(x.mode for x in s).count("A") == 4


def test_bimodal_lows_are_box_average_of_highs():
    for x in gen_bimodal(1, 4, 32, 4):
        np.testing.assert_allclose(box_downsample(x.high, 4), x.low, atol=1e-6)


def test_bimodal_separation_closed_form():
    # period 2 stripes are +-a at every pixel, so ||A - B|| = 2 a sqrt(H * H)
    assert bimodal_separation(32, 2, 0.2) == pytest.approx(2 * 0.2 * 32)


def test_bimodal_modes_pairs():
    s = gen_bimodal(0, 6, 32, 4)
    m = bimodal_modes(s)
    assert m.shape == (6, 2, 1, 32, 32)
    np.testing.assert_array_equal(m[1, 1], s[0].high)


def test_toy_displacement_closed_form():
    x0, x1 = gen_2d_toy(0, 50)
    np.testing.assert_allclose(x1 - x0, toy_displacement(x0), atol=1e-12)
    r = toy_rotation()
    np.testing.assert_allclose(x1, x0 @ r.T + TOY_OFFSET, atol=1e-12)
    radius = np.linalg.norm(x0, axis=1)
    assert 0.5 < radius.mean() < 1.5


def test_toy_seed_determinism():
    a, b = gen_2d_toy(4, 10), gen_2d_toy(4, 10)
    assert a[0].tobytes() == b[0].tobytes()
    assert not np.array_equal(a[0], gen_2d_toy(5, 10)[0])


@pytest.mark.parametrize("steps", [1, 3, 17])
def test_toy_exact_field_has_zero_endpoint_error(steps):
    x0, x1 = gen_2d_toy(1, 20)
    run = integrate(lambda t, x, z: toy_displacement(z), x0, x0, SolverConfig("euler", steps))
    np.testing.assert_allclose(run.final, x1, atol=1e-12)


def test_toy_needs_one_sample():
    with pytest.raises(ValueError):
        gen_2d_toy(0, 0)
