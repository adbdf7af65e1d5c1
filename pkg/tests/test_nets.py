import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfmsr.nets import ArchConfig, MLPConfig, MLPField, UNet, build_net, config_dict, timestep_embedding
from cfmsr.tensor_core import RngStream, ShapeError, gaussian, precision

import gradcheck

SMALL = ArchConfig(base_channels=8, channel_mult=(1, 2), num_res_blocks=1, attention=(False, True),
                   time_embed_dim=16, groups=4)


def _randomize_head(net, seed=0):
    rng = np.random.default_rng(seed)
    for k in ("out.w", "out.b"):
        net.params[k] = (0.3 * rng.standard_normal(net.params[k].shape)).astype(net.dtype)


def test_unbatched_shape_contract():
    net = UNet(ArchConfig())
    x = gaussian((4, 16, 16), RngStream(0))
    z = gaussian((4, 16, 16), RngStream(1))
    assert net.forward(0.3, x, z).shape == (4, 16, 16)


def test_time_embedding_at_zero():
    e = timestep_embedding(0.0, 32)[0]
    assert np.all(e[:16] == 0.0) and np.all(e[16:] == 1.0)


def test_forward_deterministic():
    net = UNet(SMALL)
    _randomize_head(net)
    x = gaussian((2, 4, 8, 8), RngStream(0))
    z = gaussian((2, 4, 8, 8), RngStream(1))
    a = net.forward(0.5, x, z, record=False)
    b = net.forward(0.5, x, z, record=False)
    assert a.tobytes() == b.tobytes()


def test_zero_init_head():
    net = UNet(SMALL)
    x = gaussian((2, 4, 8, 8), RngStream(0))
    z = gaussian((2, 4, 8, 8), RngStream(1))
    y = net.forward(np.array([0.1, 0.9]), x, z)
    assert np.all(y == 0.0)
    grads = net.backward(np.ones_like(y))
    for k, g in grads.items():
        if k in ("out.w", "out.b"):
            assert np.any(g != 0), k
        else:
            assert np.all(g == 0), k


@pytest.mark.parametrize("bad_t", [-0.1, 1.5, np.nan])
def test_t_out_of_range(bad_t):
    net = UNet(SMALL)
    x = np.zeros((4, 8, 8), np.float32)
    with pytest.raises(ValueError):
        net.forward(bad_t, x, x)


def test_misaligned_z():
    net = UNet(SMALL)
    with pytest.raises(ShapeError):
        net.forward(0.5, np.zeros((4, 8, 8), np.float32), np.zeros((4, 4, 4), np.float32))


def test_indivisible_spatial_dims():
    net = UNet(SMALL)
    with pytest.raises(ShapeError):
        net.forward(0.5, np.zeros((4, 7, 8), np.float32), np.zeros((4, 7, 8), np.float32))


def test_backward_without_forward():
    with pytest.raises(RuntimeError):
        UNet(SMALL).backward(np.zeros((1, 4, 8, 8)))


@settings(max_examples=8, deadline=None)
@given(st.integers(1, 2), st.sampled_from([2, 4, 6, 8]), st.sampled_from([2, 4, 6]), st.floats(0, 1))
def test_output_shape_invariance(n, h, w, t):
    net = UNet(SMALL)
    x = np.zeros((n, 4, h, w), np.float32)
    assert net.forward(t, x, x, record=False).shape == x.shape


def _net_f64(seed=0):
    with precision(np.float64):
        net = UNet(SMALL)
    net = net.astype(np.float64)
    _randomize_head(net, seed)
    return net


def test_unet_finite_difference():
    net = _net_f64()
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 4, 8, 8))
    z = rng.standard_normal((2, 4, 8, 8))
    t = np.array([0.2, 0.7])
    cot = rng.standard_normal(x.shape)
    net.forward(t, x, z)
    grads = net.backward(cot)

    def loss():
        return float(np.sum(net.forward(t, x, z, record=False) * cot))

    worst = 0.0
    names = list(net.params)
    for k in rng.choice(len(names), size=20, replace=False):
        p = net.params[names[k]].reshape(-1)
        i = int(rng.integers(p.size))
        old = p[i]
        p[i] = old + gradcheck.H
        fp = loss()
        p[i] = old - gradcheck.H
        fm = loss()
        p[i] = old
        worst = max(worst, gradcheck.rel_err(grads[names[k]].reshape(-1)[i], (fp - fm) / (2 * gradcheck.H)))
    assert worst < gradcheck.TOL


def test_secant_single_parameter():
    net = _net_f64(1)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((1, 4, 8, 8))
    z = rng.standard_normal((1, 4, 8, 8))
    y = net.forward(0.4, x, z)
    g = net.backward(2.0 * y)["down.0.0.c0.w"].reshape(-1)[5]
    p = net.params["down.0.0.c0.w"].reshape(-1)
    vals = []
    for d in (1e-4, -1e-4):
        old = p[5]
        p[5] = old + d
        vals.append(float(np.sum(net.forward(0.4, x, z, record=False) ** 2)))
        p[5] = old
    assert gradcheck.rel_err(g, (vals[0] - vals[1]) / 2e-4) < gradcheck.TOL


def test_mlp_field_gradients():
    with precision(np.float64):
        net = MLPField(MLPConfig(hidden=8))
    rng = np.random.default_rng(2)
    net.params["out.w"] = rng.standard_normal(net.params["out.w"].shape)
    x, z = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    cot = rng.standard_normal((5, 2))
    net.forward(0.3, x, z)
    g = net.backward(cot)
    for name in ("l0.w", "l1.b", "out.w"):
        p = net.params[name].reshape(-1)
        old = p[0]
        p[0] = old + 1e-5
        fp = np.sum(net.forward(0.3, x, z, record=False) * cot)
        p[0] = old - 1e-5
        fm = np.sum(net.forward(0.3, x, z, record=False) * cot)
        p[0] = old
        assert gradcheck.rel_err(g[name].reshape(-1)[0], (fp - fm) / 2e-5) < 1e-6


def test_build_from_config_dict_reproduces_params():
    net = UNet(SMALL)
    other = build_net("unet", config_dict(net))
    assert list(other.params) == list(net.params)
    assert all(np.array_equal(other.params[k], v) for k, v in net.params.items())


def test_default_architecture_levels():
    cfg = ArchConfig()
    assert cfg.base_channels == 32 and cfg.channel_mult == (1, 2, 4) and cfg.num_res_blocks == 2
    net = UNet(cfg)
    assert any(k.startswith("mid.attn") for k in net.params)
    assert not any(".attn" in k for k in net.params if k.startswith(("down", "up")))
