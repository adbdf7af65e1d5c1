"""Image-quality and distribution metrics.

FFD is a Frechet distance between Gaussian fits of features from a fixed,
randomly initialised conv stack. It is only comparable between runs that use
the same ``FEATURE_VERSION``; it is not an Inception FID.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .tensor_core import RngStream, ShapeError, stream_id

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

FEATURE_VERSION = 1
FEATURE_SEED = 20240601
FEATURE_WIDTHS = (16, 32, 64)
COV_SHRINK = 1e-6
FFD_MIN_SAMPLES = 65


def _same(a, b, what):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def psnr_from_mse(mse: float, peak: float = 1.0) -> float:
    if mse <= 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak * peak / mse))


def psnr(a, b, peak: float = 1.0) -> float:
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    _same(a, b, "psnr")
    return psnr_from_mse(float(np.mean((a - b) ** 2)), peak)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img, g):
    """Separable 'valid' correlation of the last two axes with the 1-D kernel ``g``."""
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=-1) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=-2) @ g


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean local SSIM of ``(H, W)`` or ``(C, H, W)`` images, averaged over channels."""
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    _same(a, b, "ssim")
    if a.ndim not in (2, 3):
        raise ShapeError(f"ssim expects (H, W) or (C, H, W), got {a.shape}")
    if min(a.shape[-2:]) < SSIM_WINDOW:
        raise ShapeError(f"image {a.shape[-2:]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    g = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a ** 2
    var_b = _filter_valid(b * b, g) - mu_b ** 2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s.mean())


class FeatureExtractor:
    """Three stride-2 3x3 convs with tanh, then global average pooling."""

    def __init__(self, channels: int = 1, seed: int = FEATURE_SEED, widths=FEATURE_WIDTHS):
        self.channels = channels
        self.seed = seed
        self.layers = []
        cin = channels
        for i, cout in enumerate(widths):
            rng = RngStream(seed, stream_id("ffd-features", FEATURE_VERSION, i))
            w = rng.normal((3, 3, cin, cout)) / math.sqrt(9 * cin)
            b = 0.1 * rng.child("bias").normal(cout)
            self.layers.append((w, b))
            cin = cout

    @property
    def dim(self) -> int:
        return self.layers[-1][0].shape[-1]

    def __call__(self, images, batch: int = 64) -> np.ndarray:
        """``(N, C, H, W)`` images in [0, 1] to ``(N, dim)`` float64 features."""
        x = np.asarray(images, np.float64)
        if x.ndim == 3:
            x = x[:, None]
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"expected (N, {self.channels}, H, W) images, got {x.shape}")
        out = []
        for start in range(0, len(x), batch):
            h = (x[start:start + batch].transpose(0, 2, 3, 1) - 0.5) * 2.0
            for w, b in self.layers:
                h = np.tanh(ad.conv2d(ad.leaf(h), ad.leaf(w), ad.leaf(b), stride=2).value)
            out.append(h.mean(axis=(1, 2)))
        return np.concatenate(out) if out else np.zeros((0, self.dim))


@dataclass
class GaussianStats:
    mu: np.ndarray
    sigma: np.ndarray
    n: int


def gaussian_stats(features, shrink: float = COV_SHRINK) -> GaussianStats:
    f = np.asarray(features, np.float64)
    if f.ndim != 2 or len(f) == 0:
        raise ValueError("need a non-empty (n, d) feature matrix")
    mu = f.mean(axis=0)
    d = f - mu
    cov = d.T @ d / (len(f) - 1) if len(f) > 1 else np.zeros((f.shape[1],) * 2)
    cov = 0.5 * (cov + cov.T) + shrink * np.eye(f.shape[1])
    return GaussianStats(mu=mu, sigma=cov, n=len(f))


def _psd_sqrt(m):
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """``|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a^1/2 S_b S_a^1/2)^1/2)``, clamped at 0."""
    ra = _psd_sqrt(a.sigma)
    inner = ra @ b.sigma @ ra
    w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    tr_cross = float(np.sum(np.sqrt(np.clip(w, 0.0, None))))
    diff = a.mu - b.mu
    val = float(diff @ diff + np.trace(a.sigma) + np.trace(b.sigma) - 2.0 * tr_cross)
    return max(val, 0.0)


def _images(x):
    x = np.asarray(x)
    if len(x) == 0:
        raise ValueError("empty image set")
    return x[:, None] if x.ndim == 3 else x


def ffd(set_a, set_b, extractor: FeatureExtractor | None = None) -> float:
    a, b = _images(set_a), _images(set_b)
    extractor = extractor or FeatureExtractor(channels=a.shape[1])
    return frechet_distance(gaussian_stats(extractor(a)), gaussian_stats(extractor(b)))


def random_crops(images, patch: int, per_image: int, rng: RngStream) -> np.ndarray:
    """``per_image`` crops per image; crop positions depend only on (rng, image index)."""
    x = _images(images)
    h, w = x.shape[-2:]
    if h < patch or w < patch:
        raise ShapeError(f"images {(h, w)} smaller than patch {patch}")
    out = np.empty((len(x) * per_image, x.shape[1], patch, patch), dtype=x.dtype)
    for i in range(len(x)):
        r = rng.child("crop", i)
        ys = r.integers(0, h - patch + 1, per_image)
        xs = r.child("x").integers(0, w - patch + 1, per_image)
        for j, (y0, x0) in enumerate(zip(ys, xs)):
            out[i * per_image + j] = x[i, :, y0:y0 + patch, x0:x0 + patch]
    return out


def patch_ffd(set_a, set_b, patch: int = 32, patches_per_image: int = 8, rng: RngStream | None = None,
              extractor: FeatureExtractor | None = None) -> float:
    rng = rng or RngStream(0, stream_id("patch-ffd"))
    return ffd(random_crops(set_a, patch, patches_per_image, rng),
               random_crops(set_b, patch, patches_per_image, rng), extractor)


@dataclass
class MetricRow:
    metric: str
    value: float
    set_a: str
    set_b: str
    n: int
    seed: int


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)

    COLUMNS = tuple(f.name for f in fields(MetricRow))

    def add(self, metric, value, set_a, set_b, n, seed):
        self.rows.append(MetricRow(metric, float(value), set_a, set_b, int(n), int(seed)))

    def value(self, metric: str) -> float:
        for r in self.rows:
            if r.metric == metric:
                return r.value
        raise KeyError(metric)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, fieldnames=self.COLUMNS)
            wr.writeheader()
            for r in self.rows:
                d = asdict(r)
                d["value"] = repr(r.value)
                wr.writerow(d)

    @classmethod
    def read_csv(cls, path) -> "MetricReport":
        rep = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for d in csv.DictReader(fh):
                rep.add(d["metric"], float(d["value"]), d["set_a"], d["set_b"], d["n"], d["seed"])
        return rep


def evaluate(pred, truth, seed: int = 0, set_a: str = "model", set_b: str = "truth",
             metrics=("psnr", "ssim", "ffd", "pffd"), patch: int = 32, patches_per_image: int = 8) -> MetricReport:
    """Per-image mean PSNR/SSIM plus set-level FFD and patch FFD."""
    p, t = _images(pred), _images(truth)
    _same(p, t, "evaluate")
    rep = MetricReport()
    n = len(p)
    for m in metrics:
        if m == "psnr":
            v = float(np.mean([psnr(a, b) for a, b in zip(p, t)]))
        elif m == "ssim":
            v = float(np.mean([ssim(a, b) for a, b in zip(p, t)]))
        elif m == "ffd":
            v = ffd(p, t)
        elif m == "pffd":
            size = min(patch, *p.shape[-2:])
            v = patch_ffd(p, t, size, patches_per_image, RngStream(seed, stream_id("patch-ffd")))
        else:
            raise ValueError(f"unknown metric {m!r}")
        rep.add(m, v, set_a, set_b, n, seed)
    return rep


def nearest_mode_distance(pred, modes) -> np.ndarray:
    """Per-sample ``min_k ||pred_i - modes[i, k]||_2`` for ``modes`` of shape (N, K, ...)."""
    p = np.asarray(pred, np.float64)
    m = np.asarray(modes, np.float64)
    if m.shape[:1] + m.shape[2:] != p.shape:
        raise ShapeError(f"modes {m.shape} do not match predictions {p.shape}")
    d = np.sqrt(((m - p[:, None]) ** 2).reshape(m.shape[0], m.shape[1], -1).sum(axis=-1))
    return d.min(axis=1)
