"""Procedural paired datasets.

Every sample ``i`` draws from its own stream ``RngStream(seed, stream_id(kind, i))``
so samples are independent of generation order and of ``n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .codec import box_downsample
from .tensor_core import RngStream, ShapeError, stream_id

# fixed coupling of the 2-D toy: x1 = R(alpha) x0 + b
TOY_ANGLE = math.pi / 3
TOY_OFFSET = np.array([0.5, -0.25])
TOY_RADIUS = 1.0
TOY_RING_WIDTH = 0.1

BIMODAL_AMPLITUDE = 0.2
BIMODAL_PERIOD = 2


@dataclass
class PairedSample:
    high: np.ndarray
    low: np.ndarray
    factor: int
    seed: int
    index: int


@dataclass
class BimodalSample(PairedSample):
    mode: str = "A"


def _check_dims(H: int, f: int, patch: int = 2):
    if H <= 0 or f < 1 or H % f:
        raise ShapeError(f"image size {H} not divisible by factor {f}")
    if (H // f) % patch or H % patch:
        raise ShapeError(f"image size {H} / factor {f} incompatible with codec patch {patch}")


def smooth_field(rng: RngStream, H: int, cutoff: float) -> np.ndarray:
    """Gaussian random field low-passed at ``cutoff`` cycles/pixel, rescaled to [0, 1]."""
    white = rng.normal((H, H))
    fy = np.fft.fftfreq(H)[:, None]
    fx = np.fft.fftfreq(H)[None, :]
    filt = np.exp(-(fx ** 2 + fy ** 2) / (2.0 * cutoff ** 2))
    f = np.real(np.fft.ifft2(np.fft.fft2(white) * filt))
    f -= f.min()
    peak = f.max()
    return f / peak if peak > 0 else f


def _texture_image(rng: RngStream, H: int) -> np.ndarray:
    img = 0.6 * smooth_field(rng, H, cutoff=rng.uniform() * 0.08 + 0.04)
    yy, xx = np.mgrid[0:H, 0:H].astype(np.float64) + 0.5
    for _ in range(int(rng.integers(1, 4))):
        cy, cx = rng.uniform(2) * H
        r = (0.08 + 0.2 * rng.uniform()) * H
        level = rng.uniform() * 0.6 - 0.3
        img += level * ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r)
    theta = rng.uniform() * math.pi
    period = 3.0 + rng.uniform() * 0.25 * H
    amp = 0.1 + 0.15 * rng.uniform()
    phase = rng.uniform() * 2 * math.pi
    proj = xx * math.cos(theta) + yy * math.sin(theta)
    img += amp * np.sign(np.sin(2 * math.pi * proj / period + phase))
    return np.clip(img + 0.2, 0.0, 1.0)


def gen_texture(seed: int, n: int, H: int = 64, f: int = 4, channels: int = 1,
                dtype=np.float32) -> list[PairedSample]:
    """Smooth fields plus disks and square-wave stripes, clipped to [0, 1]."""
    _check_dims(H, f)
    if n < 0:
        raise ValueError("n must be non-negative")
    out = []
    for i in range(n):
        rng = RngStream(seed, stream_id("texture", i))
        high = np.stack([_texture_image(rng, H) for _ in range(channels)]).astype(dtype)
        out.append(PairedSample(high=high, low=box_downsample(high, f), factor=f, seed=seed, index=i))
    return out


def stripe_pattern(H: int, period: int, phase: float) -> np.ndarray:
    """Column stripes ``cos(2 pi x / period + phase)``, zero-mean over every period."""
    x = np.arange(H)
    s = np.cos(2 * math.pi * x / period + phase)
    s[np.abs(s) < 1e-12] = 0.0
    return np.broadcast_to(s[None, :], (H, H))


def bimodal_separation(H: int, period: int = BIMODAL_PERIOD, amplitude: float = BIMODAL_AMPLITUDE,
                       channels: int = 1) -> float:
    """Closed-form ``||high(A) - high(B)||_2`` (the stripes differ by ``2 a cos``)."""
    x = np.arange(H)
    col = np.cos(2 * math.pi * x / period)
    col[np.abs(col) < 1e-12] = 0.0
    return float(2 * amplitude * math.sqrt(channels * H * np.sum(col ** 2)))


def gen_bimodal(seed: int, n: int, H: int = 32, f: int = 4, period: int = BIMODAL_PERIOD,
                amplitude: float = BIMODAL_AMPLITUDE, channels: int = 1,
                dtype=np.float32) -> list[BimodalSample]:
    """Pairs ``(2k, 2k+1)`` share a smooth base and take stripe phase 0 (A) and pi (B).

    The base lives in [0.25, 0.75] so adding stripes of amplitude <= 0.25 never
    clips. ``low`` is the box average of the base, which is also the box average
    of either striped image because every stripe period sums to zero.
    """
    _check_dims(H, f)
    if period < 2 or f % period:
        raise ValueError(f"stripe period {period} must divide factor {f}")
    if amplitude > 0.25:
        raise ValueError("amplitude above 0.25 would clip")
    out = []
    for i in range(n):
        base_idx = i // 2
        rng = RngStream(seed, stream_id("bimodal", base_idx))
        base = np.stack([0.25 + 0.5 * smooth_field(rng, H, cutoff=0.5 / (4 * f))
                         for _ in range(channels)])
        mode = "A" if i % 2 == 0 else "B"
        stripes = amplitude * stripe_pattern(H, period, 0.0 if mode == "A" else math.pi)
        high = (base + stripes[None]).astype(dtype)
        low = box_downsample(base.astype(dtype), f)
        out.append(BimodalSample(high=high, low=low, factor=f, seed=seed, index=i, mode=mode))
    return out


def toy_rotation(angle: float = TOY_ANGLE) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def toy_displacement(x0) -> np.ndarray:
    """Closed-form ``x1 - x0 = (R - I) x0 + b`` for the toy coupling."""
    x0 = np.asarray(x0, dtype=np.float64)
    return x0 @ (toy_rotation() - np.eye(2)).T + TOY_OFFSET


def gen_2d_toy(seed: int, n: int, dtype=np.float64):
    """Ring samples ``x0`` and their deterministic partners ``x1 = R x0 + b``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x0 = np.empty((n, 2))
    for i in range(n):
        rng = RngStream(seed, stream_id("toy2d", i))
        ang = 2 * math.pi * rng.uniform()
        r = TOY_RADIUS + TOY_RING_WIDTH * rng.normal()
        x0[i] = (r * math.cos(ang), r * math.sin(ang))
    x1 = x0 @ toy_rotation().T + TOY_OFFSET
    return x0.astype(dtype), x1.astype(dtype)


def bimodal_modes(samples) -> np.ndarray:
    """``(N, 2, c, H, W)``: both mode images for every sample of a pair-ordered bimodal set."""
    highs = np.stack([s.high for s in samples]) if not isinstance(samples, np.ndarray) else samples
    n = len(highs) - len(highs) % 2
    partner = np.arange(n) ^ 1
    return np.stack([highs[:n], highs[partner]], axis=1)
