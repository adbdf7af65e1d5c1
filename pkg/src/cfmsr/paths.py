"""Conditional probability paths, regression targets and noise augmentation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor_core import NumericError, RngStream, ShapeError, gaussian

DEFAULT_SIGMA_MIN = 1e-4
DEFAULT_T_AUG = 400


def cosine_alpha_bar(T: int = 1000, s: float = 0.008, max_beta: float = 0.999) -> np.ndarray:
    """Cumulative signal level for steps 0..T of the cosine schedule.

    ``abar[0] == 1``. Per-step betas ``1 - abar_t / abar_{t-1}`` are clipped to
    ``max_beta`` and the cumulative product is rebuilt from the clipped betas,
    so the returned array is exactly ``prod(1 - beta)``.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos((steps / T + s) / (1 + s) * math.pi / 2) ** 2
    raw = f / f[0]
    betas = np.clip(1.0 - raw[1:] / raw[:-1], 0.0, max_beta)
    abar = np.empty(T + 1)
    abar[0] = 1.0
    abar[1:] = np.cumprod(1.0 - betas)
    return abar


@dataclass(frozen=True)
class NoiseAugConfig:
    t_aug: int = DEFAULT_T_AUG
    T: int = 1000
    s: float = 0.008
    randomize: bool = False

    def __post_init__(self):
        if not 0 <= self.t_aug <= self.T:
            raise ValueError(f"t_aug={self.t_aug} outside [0, {self.T}]")

    def alpha_bar(self) -> np.ndarray:
        return cosine_alpha_bar(self.T, self.s)


@dataclass
class PathSample:
    t: float
    x_t: np.ndarray
    u_target: np.ndarray
    z: np.ndarray
    x0: np.ndarray | None = None


def _same(a, b, what):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"{what}: shape mismatch {np.shape(a)} vs {np.shape(b)}")


def _bcast_t(t, x):
    """Scalar t, or per-sample t broadcast over trailing axes of a batch."""
    t = np.asarray(t, dtype=x.dtype)
    if t.ndim == 0:
        return t
    return t.reshape(t.shape + (1,) * (x.ndim - t.ndim))


def naive_point(x0, x1, t, sigma_min: float = DEFAULT_SIGMA_MIN) -> np.ndarray:
    """``(1 - (1 - sigma_min) t) x0 + t x1``."""
    x0, x1 = np.asarray(x0), np.asarray(x1)
    _same(x0, x1, "naive_point")
    t = _bcast_t(t, x0)
    return (1 - (1 - sigma_min) * t) * x0 + t * x1


def naive_target(x, x1, t, sigma_min: float = DEFAULT_SIGMA_MIN) -> np.ndarray:
    """``(x1 - (1 - sigma_min) x) / (1 - (1 - sigma_min) t)``."""
    x, x1 = np.asarray(x), np.asarray(x1)
    _same(x, x1, "naive_target")
    t = _bcast_t(t, x)
    den = 1 - (1 - sigma_min) * t
    if np.any(den <= 1e-6):
        raise NumericError(f"naive_target denominator underflow (t={t}, sigma_min={sigma_min})")
    return (x1 - (1 - sigma_min) * x) / den


def coupled_point(x0, x1, t) -> np.ndarray:
    """Mean of the coupled path: ``t x1 + (1 - t) x0``."""
    x0, x1 = np.asarray(x0), np.asarray(x1)
    _same(x0, x1, "coupled_point")
    t = _bcast_t(t, x0)
    return t * x1 + (1 - t) * x0


def coupled_sample(x0, x1, t, sigma_min: float = DEFAULT_SIGMA_MIN, rng: RngStream | None = None,
                   aug: NoiseAugConfig | None = None) -> PathSample:
    """Draw ``x_t ~ N(t x1 + (1 - t) x0', sigma_min^2 I)`` with target ``x1 - x0'``.

    ``x0`` is the clean source and is returned as the conditioning ``z``. When
    ``aug`` is given the path starts from the noise-augmented ``x0'`` instead;
    ``z`` stays clean.
    """
    x0, x1 = np.asarray(x0), np.asarray(x1)
    _same(x0, x1, "coupled_sample")
    src = x0
    if aug is not None:
        if rng is None:
            raise ValueError("noise augmentation needs an rng")
        src = noise_augment(x0, aug, rng.child("aug"))
    x_t = coupled_point(src, x1, t)
    if sigma_min > 0:
        if rng is None:
            raise ValueError("sigma_min > 0 needs an rng")
        x_t = x_t + x0.dtype.type(sigma_min) * gaussian(x0.shape, rng.child("path"), dtype=x0.dtype)
    return PathSample(t=t, x_t=x_t, u_target=x1 - src, z=x0, x0=src)


def naive_sample(x1, t, sigma_min: float = DEFAULT_SIGMA_MIN, rng: RngStream | None = None,
                 z=None) -> PathSample:
    """Naive FM: ``x0 ~ N(0, I)``, ``x_t = phi_t(x0)``, target ``u_t(x_t | x1)``."""
    x1 = np.asarray(x1)
    x0 = gaussian(x1.shape, rng.child("noise"), dtype=x1.dtype)
    x_t = naive_point(x0, x1, t, sigma_min)
    u = x1 - (1 - sigma_min) * x0  # equals naive_target(x_t, x1, t) without the division
    return PathSample(t=t, x_t=x_t, u_target=u.astype(x1.dtype), z=x1 if z is None else z, x0=x0)


def fm_loss(v_pred, u_target) -> float:
    """Mean squared error over all elements."""
    v, u = np.asarray(v_pred), np.asarray(u_target)
    _same(v, u, "fm_loss")
    d = v.astype(np.float64) - u
    return float(np.mean(d * d))


def fm_loss_grad(v_pred, u_target):
    """``(loss, dloss/dv_pred)``."""
    v, u = np.asarray(v_pred), np.asarray(u_target)
    _same(v, u, "fm_loss")
    d = v - u.astype(v.dtype)
    return float(np.mean(d.astype(np.float64) ** 2)), (2.0 / d.size) * d


def l1_loss_grad(pred, target):
    p, y = np.asarray(pred), np.asarray(target)
    _same(p, y, "l1_loss")
    d = p - y.astype(p.dtype)
    return float(np.mean(np.abs(d.astype(np.float64)))), np.sign(d) / d.size


def noise_augment(x0, cfg: NoiseAugConfig, rng: RngStream, abar=None) -> np.ndarray:
    """``sqrt(abar) x0 + sqrt(1 - abar) eps`` at step ``cfg.t_aug``.

    With ``cfg.randomize`` the step is drawn uniformly from ``0..t_aug`` per call.
    """
    x0 = np.asarray(x0)
    if not 0 <= cfg.t_aug <= cfg.T:
        raise ValueError(f"t_aug={cfg.t_aug} outside [0, {cfg.T}]")
    step = cfg.t_aug
    if cfg.randomize:
        step = int(rng.child("t_aug").integers(0, cfg.t_aug + 1))
    if step == 0:
        return x0.copy()
    abar = cfg.alpha_bar() if abar is None else abar
    a = abar[step]
    eps = gaussian(x0.shape, rng, dtype=x0.dtype)
    return (math.sqrt(a) * x0 + math.sqrt(1.0 - a) * eps).astype(x0.dtype)


UPSAMPLE_METHODS = ("psu", "bilinear", "nearest")


@dataclass
class PathConfig:
    """Path and source settings shared by training and inference."""

    sigma_min: float = DEFAULT_SIGMA_MIN
    t_aug: int = DEFAULT_T_AUG
    T: int = 1000
    s: float = 0.008
    upsample: str = "psu"
    randomize_t_aug: bool = False

    def __post_init__(self):
        if not 0.0 <= self.sigma_min < 1.0:
            raise ValueError("sigma_min must lie in [0, 1)")
        if self.upsample not in UPSAMPLE_METHODS:
            raise ValueError(f"upsample must be one of {UPSAMPLE_METHODS}")
        self.aug()

    def aug(self) -> NoiseAugConfig:
        return NoiseAugConfig(t_aug=int(self.t_aug), T=int(self.T), s=self.s,
                              randomize=bool(self.randomize_t_aug))
