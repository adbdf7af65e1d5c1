import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmsr.paths import (NoiseAugConfig, PathConfig, coupled_point, coupled_sample, cosine_alpha_bar,
                         fm_loss, fm_loss_grad, naive_point, naive_sample, naive_target, noise_augment)
from cfmsr.tensor_core import NumericError, RngStream, ShapeError, gaussian


def test_naive_point_examples():
    x0, x1 = np.array([0.3, -1.0]), np.array([2.0, 5.0])
    np.testing.assert_array_equal(naive_point(x0, x1, 0.0, 0.1), x0)
    np.testing.assert_array_equal(naive_point(x0, x1, 1.0, 0.0), x1)
    assert naive_point(np.array(1.0), np.array(2.0), 0.5, 0.1) == pytest.approx(1.55, abs=1e-15)


def test_naive_target_examples():
    assert naive_target(np.array(1.0), np.array(2.0), 0.5, 0.1) == pytest.approx(2.0, abs=1e-15)
    x, x1 = np.array([0.4, -2.0]), np.array([1.0, 3.0])
    np.testing.assert_allclose(naive_target(x, x1, 0.0, 0.1), x1 - 0.9 * x)
    rng = np.random.default_rng(0)
    x0, x1 = rng.standard_normal(5), rng.standard_normal(5)
    for t in (0.0, 0.3, 0.9):
        np.testing.assert_allclose(naive_target(naive_point(x0, x1, t, 0.0), x1, t, 0.0), x1 - x0, atol=1e-12)


def test_naive_target_underflow():
    with pytest.raises(NumericError):
        naive_target(np.ones(2), np.ones(2), 1.0, 0.0)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        naive_point(np.ones(2), np.ones(3), 0.5)
    with pytest.raises(ShapeError):
        coupled_sample(np.ones(2), np.ones(3), 0.5, 0.0)
    with pytest.raises(ShapeError):
        fm_loss(np.ones(2), np.ones(3))


@settings(max_examples=20, deadline=None)
@given(st.floats(0.02, 0.95), st.sampled_from([0.0, 0.1]), st.integers(0, 1000))
def test_naive_path_derivative_matches_target(t, sigma, seed):
    rng = np.random.default_rng(seed)
    x0, x1 = rng.standard_normal(6), rng.standard_normal(6)
    h = 1e-6
    d = (naive_point(x0, x1, t + h, sigma) - naive_point(x0, x1, t - h, sigma)) / (2 * h)
    u = naive_target(naive_point(x0, x1, t, sigma), x1, t, sigma)
    assert np.max(np.abs(d - u) / np.maximum(np.abs(u), 1e-8)) < 1e-5


def test_coupled_examples():
    ps = coupled_sample(np.array([0.0, 0.0]), np.array([2.0, 4.0]), 0.5, 0.0)
    np.testing.assert_array_equal(ps.x_t, [1.0, 2.0])
    np.testing.assert_array_equal(ps.u_target, [2.0, 4.0])
    x0 = gaussian((3, 4), RngStream(0), dtype=np.float64)
    x1 = gaussian((3, 4), RngStream(1), dtype=np.float64)
    assert coupled_sample(x0, x1, 0.0, 0.0).x_t.tobytes() == x0.tobytes()
    assert coupled_sample(x0, x1, 1.0, 0.0).x_t.tobytes() == x1.tobytes()


def test_coupled_target_independent_of_t():
    rng = np.random.default_rng(1)
    x0, x1 = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
    us = [coupled_sample(x0, x1, t, 1e-4, RngStream(i)).u_target for i, t in enumerate(rng.uniform(size=10))]
    assert all(np.array_equal(u, us[0]) for u in us)


def test_coupled_central_difference():
    rng = np.random.default_rng(2)
    x0, x1 = rng.standard_normal(8), rng.standard_normal(8)
    h = 1e-5
    for t in (0.1, 0.5, 0.9):
        d = (coupled_point(x0, x1, t + h) - coupled_point(x0, x1, t - h)) / (2 * h)
        np.testing.assert_allclose(d, x1 - x0, atol=1e-6)


def test_degenerate_coupling():
    x = np.random.default_rng(3).standard_normal(5)
    for t in (0.0, 0.4, 1.0):
        ps = coupled_sample(x, x.copy(), t, 0.0)
        assert np.all(ps.u_target == 0) and np.allclose(ps.x_t, x, atol=0, rtol=1e-15)


def test_sigma_min_noise_scale():
    x0 = np.zeros(100_000)
    ps = coupled_sample(x0, x0, 0.5, 0.01, RngStream(4))
    assert ps.x_t.std() == pytest.approx(0.01, rel=0.02)


def test_noise_augmentation_only_on_source():
    x0 = gaussian((4, 8, 8), RngStream(5), dtype=np.float64)
    x1 = gaussian((4, 8, 8), RngStream(6), dtype=np.float64)
    ps = coupled_sample(x0, x1, 0.3, 0.0, RngStream(7), aug=NoiseAugConfig(400))
    assert ps.z.tobytes() == x0.tobytes()
    assert not np.array_equal(ps.x0, x0) and ps.x0.shape == x0.shape
    np.testing.assert_allclose(ps.u_target, x1 - ps.x0)
    np.testing.assert_allclose(ps.x_t, 0.3 * x1 + 0.7 * ps.x0)


def test_fm_loss_examples():
    rng = np.random.default_rng(8)
    u = rng.standard_normal((3, 4))
    assert fm_loss(u, u) == 0.0
    assert fm_loss(u + 0.5, u) == pytest.approx(0.25)
    v = rng.standard_normal((3, 4))
    ref = sum((a - b) ** 2 for a, b in zip(v.ravel(), u.ravel())) / u.size
    assert fm_loss(v, u) == pytest.approx(ref, abs=1e-6)
    loss, g = fm_loss_grad(v, u)
    np.testing.assert_allclose(g, 2 * (v - u) / u.size)


def test_cosine_schedule_shape():
    ab = cosine_alpha_bar(1000)
    assert ab[0] == 1.0 and ab[-1] >= 0.0
    assert np.all(np.diff(ab) < 0)
    betas = 1 - ab[1:] / ab[:-1]
    assert np.all((betas > 0) & (betas < 1))


def test_noise_augment_endpoints():
    x0 = RngStream(9).uniform(5000).astype(np.float32)
    out = noise_augment(x0, NoiseAugConfig(0), RngStream(1))
    assert out.tobytes() == x0.tobytes()
    full = noise_augment(x0, NoiseAugConfig(1000), RngStream(1))
    assert abs(np.corrcoef(full, x0)[0, 1]) < 0.05


def test_noise_augment_formula():
    x0 = np.linspace(-1, 1, 64)
    out = noise_augment(x0, NoiseAugConfig(400), RngStream(2))
    a = cosine_alpha_bar()[400]
    eps = gaussian((64,), RngStream(2), dtype=np.float64)
    np.testing.assert_allclose(out, np.sqrt(a) * x0 + np.sqrt(1 - a) * eps)


def test_noise_aug_defaults_and_range():
    assert NoiseAugConfig().t_aug == 400 and NoiseAugConfig().T == 1000
    assert PathConfig().t_aug == 400
    with pytest.raises(ValueError):
        NoiseAugConfig(1001)
    with pytest.raises(ValueError):
        NoiseAugConfig(-1)


def test_randomized_t_aug_stays_in_range():
    x0 = np.zeros(10)
    cfg = NoiseAugConfig(200, randomize=True)
    outs = [noise_augment(x0, cfg, RngStream(i)) for i in range(20)]
    assert len({o.std().round(6) for o in outs}) > 1


def test_naive_sample_targets():
    x1 = gaussian((2, 3), RngStream(0), dtype=np.float64)
    ps = naive_sample(x1, 0.4, 0.1, RngStream(3))
    np.testing.assert_allclose(ps.u_target, naive_target(ps.x_t, x1, 0.4, 0.1), atol=1e-12)
