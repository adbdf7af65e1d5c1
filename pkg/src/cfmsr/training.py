"""Training loop shared by every model kind.

All kinds use the same network family, optimiser and batch schedule and only
differ in how a batch is turned into ``(t, input, conditioning, target)``:

==============  ===================================  ======================
kind            network input at time t              regression target
==============  ===================================  ======================
cfm             t x1 + (1-t) aug(x0) + sigma eps     x1 - aug(x0)
fm_naive        (1-(1-sigma)t) eps + t x1            x1 - (1-sigma) eps
dm_upsampler    sqrt(abar) x1 + sqrt(1-abar) eps     eps
ddpm_prior      same as dm_upsampler, no z           eps
reg_l1, reg_l2  x0 (output is x0 + net)              x1
==============  ===================================  ======================

Batch ``k`` always draws from ``RngStream(seed, stream_id("batch", k))`` so a
run resumed from a checkpoint at step ``k`` continues bit-identically.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .baselines import DiffusionSchedule, eps_batch
from .nets import FieldNet
from .optim import AdamState, adam_step
from .paths import PathConfig, coupled_sample, fm_loss_grad, l1_loss_grad, naive_sample
from .tensor_core import NumericError, RngStream, stream_id

MODEL_KINDS = ("cfm", "fm_naive", "dm_upsampler", "ddpm_prior", "reg_l1", "reg_l2")


@dataclass
class TrainConfig:
    steps: int = 1000
    batch: int = 16
    lr: float = 5e-5
    lr_decay: str = "constant"  # or "cosine" (to zero at the final step)
    seed: int = 0
    ckpt_every: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.lr_decay not in ("constant", "cosine"):
            raise ValueError(f"lr_decay must be constant or cosine, got {self.lr_decay!r}")

    def lr_at(self, step: int) -> float:
        if self.lr_decay == "cosine":
            return self.lr * 0.5 * (1.0 + math.cos(math.pi * step / max(self.steps, 1)))
        return self.lr


@dataclass
class TrainData:
    """Stacked training arrays.

    ``x1`` holds targets (high latents, or low latents for the prior);
    ``x0`` the PSU/bilinear/nearest-upsampled low latents used as source and
    conditioning. ``x0`` is ignored by ``ddpm_prior``.
    """

    x1: np.ndarray
    x0: np.ndarray | None = None

    def __post_init__(self):
        if len(self.x1) == 0:
            raise ValueError("empty training set")
        if self.x0 is not None and self.x0.shape != self.x1.shape:
            raise ValueError(f"source {self.x0.shape} and target {self.x1.shape} shapes differ")

    def __len__(self):
        return len(self.x1)


def make_batch(kind: str, data: TrainData, idx, rng: RngStream, path: PathConfig,
               schedule: DiffusionSchedule | None = None):
    """Return ``(t, x_in, z, target, loss)`` for one minibatch."""
    x1 = data.x1[idx]
    x0 = None if data.x0 is None else data.x0[idx]
    n = len(idx)
    if kind == "cfm":
        t = rng.child("t").uniform(n).astype(x1.dtype)
        ps = coupled_sample(x0, x1, t, path.sigma_min, rng, aug=path.aug())
        return t, ps.x_t, ps.z, ps.u_target, "l2"
    if kind == "fm_naive":
        t = rng.child("t").uniform(n).astype(x1.dtype)
        ps = naive_sample(x1, t, path.sigma_min, rng, z=x0)
        return t, ps.x_t, ps.z, ps.u_target, "l2"
    if kind in ("dm_upsampler", "ddpm_prior"):
        t_int, x_t, eps = eps_batch(x1, schedule, rng)
        z = x0 if kind == "dm_upsampler" else None
        return t_int / schedule.T, x_t, z, eps, "l2"
    if kind in ("reg_l1", "reg_l2"):
        return np.zeros(n), x0, x0, x1 - x0, kind[-2:]
    raise ValueError(f"unknown model kind {kind!r}")


def train(net: FieldNet, kind: str, data: TrainData, cfg: TrainConfig, path: PathConfig | None = None,
          adam: AdamState | None = None, start_step: int = 0, callback=None):
    """Run steps ``start_step .. cfg.steps - 1``; returns ``(adam, history)``.

    ``history`` is a list of ``(step, loss, wall_seconds)``. ``callback(step,
    net, adam)`` runs after every update (used for periodic checkpoints).
    A non-finite loss raises :class:`NumericError` before the update, so the
    parameters are the last good ones.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    path = path or PathConfig()
    schedule = DiffusionSchedule(path.T, path.s) if kind in ("dm_upsampler", "ddpm_prior") else None
    if adam is None:
        adam = AdamState.for_params(net.params, lr=cfg.lr)
    history = []
    t_start = time.perf_counter()
    n = len(data)
    for step in range(start_step, cfg.steps):
        rng = RngStream(cfg.seed, stream_id("batch", step))
        idx = rng.child("idx").integers(0, n, min(cfg.batch, n) if cfg.batch > 0 else n)
        t, x_in, z, target, loss_kind = make_batch(kind, data, idx, rng, path, schedule)
        pred = net.forward(t, x_in, z)
        if loss_kind == "l1":
            loss, dout = l1_loss_grad(pred, target)
        else:
            loss, dout = fm_loss_grad(pred, target)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite loss at step {step}")
        grads = net.backward(dout)
        adam.lr = cfg.lr_at(step)
        adam_step(adam, net.params, grads)
        history.append((step, loss, time.perf_counter() - t_start))
        if callback is not None:
            callback(step, net, adam)
    return adam, history
