"""Reduced-budget experiment configurations shared by scripts and the acceptance suite."""
from __future__ import annotations

import numpy as np

from .config import DataSpec, RunConfig
from .nets import ArchConfig, MLPConfig
from .pipeline import Latents, make_dataset, train_model
from .solvers import SolverConfig, integrate
from .training import TrainConfig

SMALL_ARCH = ArchConfig(base_channels=16, channel_mult=(1, 2, 2), num_res_blocks=1,
                        attention=(False, False, True), time_embed_dim=64)


def toy_config(steps=4000, lr=2e-3, batch=64, seed=0, time_scale=0.1) -> RunConfig:
    """CFM on the 2-D toy coupling with an MLP field.

    The exact field of this coupling does not depend on t, so the time
    embedding is slow (``time_scale=0.1``); fast embeddings let the fit wobble
    in t and a one-step solve, which only sees t=0, then lands off the average.
    """
    cfg = RunConfig(seed=seed, data=DataSpec(kind="toy2d", n=2048, n_test=512),
                    mlp=MLPConfig(hidden=64, depth=2, time_scale=time_scale),
                    train=TrainConfig(steps=steps, batch=batch, lr=lr))
    return cfg.replace(model={"net": "mlp"}, path={"t_aug": 0})


def train_toy(cfg: RunConfig):
    ds = make_dataset(cfg.data, cfg.data_seed)
    tr = ds["train"]
    net, hist = train_model(cfg, Latents(x1=tr.high, x0=tr.low, low=tr.low), "cfm")
    return net, hist, ds["test"]


def endpoint_mse(net, test, nfe: int, method: str = "euler") -> tuple[float, int]:
    x0 = test.low.astype(net.dtype)
    run = integrate(lambda t, x, z: net.forward(t, x, z, record=False), x0, x0, SolverConfig(method, nfe))
    return float(np.mean((run.final.astype(np.float64) - test.high) ** 2)), run.nfe


def bimodal_config(steps=1500, lr=1e-3, batch=16, seed=0, n=256, n_test=256, nfe=4) -> RunConfig:
    cfg = RunConfig(seed=seed, data=DataSpec(kind="bimodal", n=n, n_test=n_test, H=32, f=4),
                    arch=SMALL_ARCH, train=TrainConfig(steps=steps, batch=batch, lr=lr))
    return cfg.replace(solver={"method": "euler", "steps": nfe}, eval={"ddim_steps": nfe})


def texture_config(steps=1500, lr=1e-3, batch=16, seed=0, n=256, n_test=128, nfe=4) -> RunConfig:
    cfg = RunConfig(seed=seed, data=DataSpec(kind="texture", n=n, n_test=n_test, H=64, f=4),
                    arch=SMALL_ARCH, train=TrainConfig(steps=steps, batch=batch, lr=lr))
    return cfg.replace(solver={"method": "euler", "steps": nfe}, eval={"ddim_steps": nfe})
