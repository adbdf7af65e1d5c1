"""Orthogonal patch codec and resampling (nearest, bilinear, pixel-space).

The codec maps a ``c x H x W`` image to a ``(p*p*c) x H/p x W/p`` latent by
space-to-depth followed by a fixed orthogonal channel mix. Because the mix is
orthogonal the transform is an isometry and ``decode`` is its exact inverse.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import RngStream, ShapeError, stream_id

DEFAULT_CODEC_SEED = 1234


def _orthogonal(n: int, seed: int) -> np.ndarray:
    g = RngStream(seed, stream_id("codec")).normal((n, n))
    q, r = np.linalg.qr(g)
    # fix signs so the factorisation is unique
    q = q * np.sign(np.diag(r))[None, :]
    return q


@dataclass(frozen=True)
class PatchCodec:
    patch: int = 2
    channels: int = 1
    seed: int = DEFAULT_CODEC_SEED
    identity: bool = False
    mix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.patch * self.patch * self.channels
        w = np.eye(n) if self.identity else _orthogonal(n, self.seed)
        object.__setattr__(self, "mix", w)

    @property
    def latent_channels(self) -> int:
        return self.patch * self.patch * self.channels

    def _check(self, x, c, what):
        if x.ndim not in (3, 4) or x.shape[-3] != c:
            raise ShapeError(f"{what} expects (..., {c}, H, W), got {x.shape}")

    def encode(self, img) -> np.ndarray:
        """Image ``(c, H, W)`` or batch ``(N, c, H, W)`` to latent."""
        img = np.asarray(img)
        self._check(img, self.channels, "encode")
        p = self.patch
        h, w = img.shape[-2:]
        if h % p or w % p:
            raise ShapeError(f"image dims {(h, w)} not divisible by patch {p}")
        lead = img.shape[:-3]
        x = img.reshape(lead + (self.channels, h // p, p, w // p, p))
        nl = len(lead)
        # (..., c, h', p, w', p) -> (..., c, p, p, h', w')
        x = x.transpose(tuple(range(nl)) + tuple(nl + a for a in (0, 2, 4, 1, 3)))
        x = x.reshape(lead + (self.latent_channels, h // p, w // p))
        wmix = self.mix.astype(img.dtype)
        return np.einsum("ij,...jhw->...ihw", wmix, x).astype(img.dtype, copy=False)

    def decode(self, lat) -> np.ndarray:
        lat = np.asarray(lat)
        self._check(lat, self.latent_channels, "decode")
        p = self.patch
        hl, wl = lat.shape[-2:]
        lead = lat.shape[:-3]
        nl = len(lead)
        wmix = self.mix.astype(lat.dtype)
        x = np.einsum("ji,...jhw->...ihw", wmix, lat).astype(lat.dtype, copy=False)
        x = x.reshape(lead + (self.channels, p, p, hl, wl))
        x = x.transpose(tuple(range(nl)) + tuple(nl + a for a in (0, 3, 1, 4, 2)))
        return x.reshape(lead + (self.channels, hl * p, wl * p))


def _bilinear_weights(n_in: int, factor: int):
    # align_corners=False: source coordinate (i + 0.5) / factor - 0.5, edge-clamped
    out = np.arange(n_in * factor)
    src = (out + 0.5) / factor - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def upsample(x, factor: int, method: str = "bilinear") -> np.ndarray:
    """Spatially upsample the last two axes by an integer ``factor``."""
    x = np.asarray(x)
    if int(factor) != factor or factor < 2:
        raise ValueError(f"upsample factor must be an integer >= 2, got {factor}")
    factor = int(factor)
    if x.ndim < 2:
        raise ShapeError(f"upsample needs at least 2 dims, got {x.shape}")
    if method == "nearest":
        return x.repeat(factor, axis=-2).repeat(factor, axis=-1)
    if method != "bilinear":
        raise ValueError(f"unknown upsample method {method!r}")
    h, w = x.shape[-2:]
    dt = x.dtype
    lo, hi, fr = _bilinear_weights(h, factor)
    fr = fr.astype(dt)[:, None]
    rows = x[..., lo, :] * (1 - fr) + x[..., hi, :] * fr
    lo, hi, fr = _bilinear_weights(w, factor)
    fr = fr.astype(dt)
    return (rows[..., lo] * (1 - fr) + rows[..., hi] * fr).astype(dt, copy=False)


def psu(latent_low, factor: int, codec: PatchCodec) -> np.ndarray:
    """Pixel-space upsampling: encode(bilinear(decode(latent)))."""
    return codec.encode(upsample(codec.decode(latent_low), factor, "bilinear"))


def upsample_latent(latent_low, factor: int, method: str, codec: PatchCodec) -> np.ndarray:
    if method == "psu":
        return psu(latent_low, factor, codec)
    return upsample(latent_low, factor, method)


def box_downsample(img, factor: int) -> np.ndarray:
    """Area-average downsample by ``factor``, accumulated in float64."""
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if h % factor or w % factor:
        raise ShapeError(f"dims {(h, w)} not divisible by factor {factor}")
    lead = img.shape[:-2]
    x = img.astype(np.float64).reshape(lead + (h // factor, factor, w // factor, factor))
    return x.mean(axis=(-3, -1)).astype(img.dtype)
