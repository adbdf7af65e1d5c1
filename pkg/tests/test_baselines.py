import math

import numpy as np
import pytest

from cfmsr.baselines import DiffusionSchedule, ddim_sample, ddim_step, eps_batch, regression_predict
from cfmsr.nets import ArchConfig, UNet
from cfmsr.paths import PathConfig, cosine_alpha_bar
from cfmsr.tensor_core import RngStream, gaussian
from cfmsr.training import TrainConfig, TrainData, make_batch

SCHED = DiffusionSchedule()


def test_schedule_shared_with_noise_augmentation():
    np.testing.assert_array_equal(SCHED.alpha_bar, cosine_alpha_bar(1000, 0.008))
    assert np.all(np.diff(SCHED.alpha_bar) < 0)
    assert np.all((SCHED.betas > 0) & (SCHED.betas < 1))


def test_ddim_timesteps():
    ts = SCHED.ddim_timesteps(4)
    np.testing.assert_array_equal(ts, [1000, 750, 500, 250, 0])
    with pytest.raises(ValueError):
        SCHED.ddim_timesteps(0)
    with pytest.raises(ValueError):
        SCHED.ddim_timesteps(1001)


def test_single_step_recovers_constructed_x0():
    x0 = gaussian((3, 5), RngStream(0), dtype=np.float64)
    eps = gaussian((3, 5), RngStream(1), dtype=np.float64)
    sched = DiffusionSchedule(T=10)
    x_T = sched.q_sample(x0, 10, eps)
    out, nfe = ddim_sample(lambda t, x, z: eps, None, sched, 1, x_T=x_T)
    assert nfe == 1
    np.testing.assert_allclose(out, x0, atol=1e-12)


def test_two_step_scalar_oracle():
    ab = SCHED.alpha_bar
    x = np.array([0.8])
    e1, e2 = 0.3, -0.5
    taus = SCHED.ddim_timesteps(2)
    calls = iter([e1, e2])
    out, _ = ddim_sample(lambda t, x, z: np.array([next(calls)]), None, SCHED, 2, x_T=x)
    ref = x[0]
    for (t, s), e in zip(zip(taus[:-1], taus[1:]), (e1, e2)):
        x0 = (ref - math.sqrt(1 - ab[t]) * e) / math.sqrt(ab[t])
        ref = math.sqrt(ab[s]) * x0 + math.sqrt(1 - ab[s]) * e
    assert out[0] == pytest.approx(ref, abs=1e-6)


def test_ddim_step_clip():
    out = ddim_step(np.array([10.0]), np.array([0.0]), 0.25, 1.0, clip_x0=2.0)
    assert out[0] == 2.0


def test_ddim_deterministic_given_x_T():
    net = UNet(ArchConfig(base_channels=8, channel_mult=(1, 2), num_res_blocks=1,
                          attention=(False, False), time_embed_dim=16, cond_channels=0, groups=4))
    for k in ("out.w",):
        net.params[k] = 0.1 * gaussian(net.params[k].shape, RngStream(2))
    a, _ = ddim_sample(net, None, SCHED, 3, RngStream(4), shape=(2, 4, 8, 8))
    b, _ = ddim_sample(net, None, SCHED, 3, RngStream(4), shape=(2, 4, 8, 8))
    assert a.tobytes() == b.tobytes()


def test_forward_noising_unit_variance():
    x = gaussian((200_000,), RngStream(6), dtype=np.float64)
    for t in (1, 300, 999):
        y = SCHED.q_sample(x, t, gaussian((200_000,), RngStream(7 + t), dtype=np.float64))
        # 3 sigma of the sample variance: 3 * sqrt(2 / n)
        assert abs(y.var() - 1.0) < 3 * math.sqrt(2 / 200_000)


def test_untrained_eps_loss_is_one():
    x = gaussian((64, 4, 8, 8), RngStream(8))
    t, x_t, eps = eps_batch(x, SCHED, RngStream(9))
    assert np.all((t >= 1) & (t <= 1000))
    assert float(np.mean(eps.astype(np.float64) ** 2)) == pytest.approx(1.0, abs=0.03)


def test_regression_batch_is_residual():
    x0 = gaussian((4, 4, 8, 8), RngStream(0))
    x1 = gaussian((4, 4, 8, 8), RngStream(1))
    t, x_in, z, target, loss = make_batch("reg_l2", TrainData(x1, x0), np.arange(4), RngStream(2), PathConfig())
    assert np.all(t == 0) and x_in is z and loss == "l2"
    np.testing.assert_array_equal(target, x1 - x0)
    net = UNet(ArchConfig(base_channels=8, channel_mult=(1, 2), num_res_blocks=1,
                          attention=(False, False), time_embed_dim=16, groups=4))
    np.testing.assert_array_equal(regression_predict(net, x0), x0)  # zero head is the identity


def test_empty_dataset_rejected():
    with pytest.raises(ValueError):
        TrainData(np.zeros((0, 4, 8, 8), np.float32))


def test_lr_schedules():
    const = TrainConfig(steps=10, lr=1e-3)
    assert const.lr_at(0) == const.lr_at(9) == 1e-3
    cos = TrainConfig(steps=10, lr=1e-3, lr_decay="cosine")
    assert cos.lr_at(0) == 1e-3 and math.isclose(cos.lr_at(5), 5e-4)
    lrs = [cos.lr_at(k) for k in range(10)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))
    with pytest.raises(ValueError):
        TrainConfig(lr_decay="step")
