"""Comparison systems: eps-prediction diffusion (DDPM training, DDIM sampling)
and one-step L1/L2 regression upsamplers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nets import FieldNet
from .paths import cosine_alpha_bar
from .tensor_core import RngStream, gaussian


@dataclass
class DiffusionSchedule:
    T: int = 1000
    s: float = 0.008
    alpha_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.alpha_bar = cosine_alpha_bar(self.T, self.s)

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alpha_bar[1:] / self.alpha_bar[:-1]

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    def q_sample(self, x, t_int, eps):
        """``sqrt(abar_t) x + sqrt(1 - abar_t) eps`` with per-sample integer steps."""
        a = self.alpha_bar[np.asarray(t_int)]
        a = a.reshape(a.shape + (1,) * (x.ndim - a.ndim))
        return (np.sqrt(a) * x + np.sqrt(1.0 - a) * eps).astype(x.dtype)

    def ddim_timesteps(self, steps: int) -> np.ndarray:
        """Uniformly strided ``T = tau_S > ... > tau_0 = 0``."""
        if steps < 1:
            raise ValueError("DDIM needs steps >= 1")
        if steps > self.T:
            raise ValueError(f"steps={steps} exceeds T={self.T}")
        return np.round(np.linspace(self.T, 0, steps + 1)).astype(np.int64)


def eps_batch(x, schedule: DiffusionSchedule, rng: RngStream):
    """Draw ``t ~ U{1..T}``, noise, and the noised input for eps-prediction."""
    n = x.shape[0]
    t_int = rng.child("t").integers(1, schedule.T + 1, n)
    eps = gaussian(x.shape, rng.child("eps"), dtype=x.dtype)
    return t_int, schedule.q_sample(x, t_int, eps), eps


def _as_eps_model(model, T):
    if isinstance(model, FieldNet):
        return lambda t_int, x, z: model.forward(t_int / T, x, z, record=False)
    return model


def ddim_step(x_t, eps, abar_t: float, abar_s: float, clip_x0: float | None = None):
    """Deterministic (eta = 0) DDIM update from level ``abar_t`` to ``abar_s``."""
    x0 = (x_t - math.sqrt(1.0 - abar_t) * eps) / math.sqrt(abar_t)
    if clip_x0 is not None:
        x0 = np.clip(x0, -clip_x0, clip_x0)
    return (math.sqrt(abar_s) * x0 + math.sqrt(1.0 - abar_s) * eps).astype(x_t.dtype)


def ddim_sample(model, z, schedule: DiffusionSchedule, steps: int, rng: RngStream | None = None,
                x_T=None, shape=None, clip_x0: float | None = None):
    """Run DDIM from ``x_T`` (drawn from ``rng`` when not given) down to t=0.

    ``model`` is an eps network or a callable ``(t_int, x, z) -> eps``.
    Returns ``(x0, nfe)``; ``nfe == steps``.
    """
    taus = schedule.ddim_timesteps(steps)
    if x_T is None:
        if shape is None:
            shape = np.shape(z)
        x_T = gaussian(tuple(shape), rng)
    eps_model = _as_eps_model(model, schedule.T)
    x = np.asarray(x_T)
    n = x.shape[0] if x.ndim > 1 else 1
    nfe = 0
    ab = schedule.alpha_bar
    for t, s in zip(taus[:-1], taus[1:]):
        eps = eps_model(np.full(n, t), x, z)
        nfe += 1
        x = ddim_step(x, eps, ab[t], ab[s], clip_x0)
    return x, nfe


def regression_predict(net: FieldNet, cond) -> np.ndarray:
    """One forward pass: ``cond + net(0, cond, cond)``."""
    return cond + net.forward(0.0, cond, cond, record=False)


def regression_train(net: FieldNet, pairs, loss: str = "L2", cfg=None, **kw):
    """Fit ``x0 -> x1`` with a one-step residual regressor under L1 or L2 loss."""
    from .training import TrainConfig, TrainData, train

    kind = {"l1": "reg_l1", "l2": "reg_l2"}[loss.lower()]
    data = pairs if isinstance(pairs, TrainData) else TrainData(x1=pairs[1], x0=pairs[0])
    return train(net, kind, data, cfg or TrainConfig(), **kw)


def ddpm_train(net: FieldNet, data, schedule: DiffusionSchedule | None = None, conditional: bool = True,
               cfg=None, **kw):
    """Eps-prediction training; ``data`` is ``TrainData`` (``x0`` used as z when conditional)."""
    from .paths import PathConfig
    from .training import TrainConfig, train

    schedule = schedule or DiffusionSchedule()
    path = kw.pop("path", None) or PathConfig(T=schedule.T, s=schedule.s)
    kind = "dm_upsampler" if conditional else "ddpm_prior"
    return train(net, kind, data, cfg or TrainConfig(), path=path, **kw)
