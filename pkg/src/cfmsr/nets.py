"""Vector-field networks v(t, x, z) built on :mod:`cfmsr.autodiff`.

Two families share one interface (``forward`` records a graph, ``backward``
turns an output cotangent into per-parameter gradients):

* :class:`UNet` for latent images, with ``z`` concatenated to ``x`` on the
  channel axis and a sinusoidal time embedding injected into every residual
  block;
* :class:`MLPField` for the 2-D point toy.
"""
from __future__ import annotations

import copy
import dataclasses
import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .tensor_core import RngStream, ShapeError, NumericError, get_dtype, stream_id

ParamStore = OrderedDict  # name -> ndarray, insertion-ordered


@dataclass
class ArchConfig:
    in_channels: int = 4
    cond_channels: int = 4
    base_channels: int = 32
    channel_mult: tuple = (1, 2, 4)
    num_res_blocks: int = 2
    attention: tuple = (False, False, True)
    time_embed_dim: int = 128
    groups: int = 8
    init_seed: int = 0

    def __post_init__(self):
        self.channel_mult = tuple(int(m) for m in self.channel_mult)
        self.attention = tuple(bool(a) for a in self.attention)
        if len(self.attention) != len(self.channel_mult):
            raise ValueError("attention flags must have one entry per level")

    @property
    def levels(self) -> int:
        return len(self.channel_mult)


@dataclass
class MLPConfig:
    dim: int = 2
    cond_dim: int = 2
    hidden: int = 64
    depth: int = 2
    time_embed_dim: int = 16
    time_scale: float = 10.0
    init_seed: int = 0


def timestep_embedding(t, dim: int, scale: float = 1000.0) -> np.ndarray:
    """Sinusoidal features ``[sin(s t w_k), cos(s t w_k)]`` with geometric frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    ang = scale * t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _trunc_normal(rng: RngStream, shape, std: float) -> np.ndarray:
    draw = rng.normal(shape)
    bad = np.abs(draw) > 2.0
    while bad.any():
        draw[bad] = rng.normal(int(bad.sum()))
        bad = np.abs(draw) > 2.0
    return draw * std


def _check_t(t, n):
    t = np.asarray(t, dtype=np.float64)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if t.ndim == 0:
        return np.full(n, float(t))
    if t.shape != (n,):
        raise ShapeError(f"t has shape {t.shape}, expected scalar or ({n},)")
    return t


class FieldNet:
    """Shared plumbing: parameter store, graph recording and gradient readout."""

    kind = "base"

    def __init__(self, cfg):
        self.cfg = cfg
        self.params: ParamStore = ParamStore()
        self._leaves = None
        self._out = None

    # parameter helpers ---------------------------------------------------
    def _add(self, name, value):
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        self.params[name] = np.asarray(value, dtype=get_dtype())

    def _weight(self, rng, name, shape, fan_in, zero=False):
        if zero:
            self._add(name, np.zeros(shape))
        else:
            self._add(name, _trunc_normal(rng.child(name), shape, 1.0 / math.sqrt(fan_in)))

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def astype(self, dtype):
        """Copy of the network with parameters cast to ``dtype``."""
        other = copy.copy(self)
        other.params = ParamStore((k, v.astype(dtype)) for k, v in self.params.items())
        other._leaves = None
        other._out = None
        return other

    def num_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def _p(self, name):
        return self._leaves[name]

    # public interface ------------------------------------------------------
    def forward(self, t, x, z=None, record: bool = True) -> np.ndarray:
        """Evaluate the field; ``x`` may be unbatched (single sample) or batched."""
        x = np.asarray(x)
        batched = x.ndim == self._sample_ndim + 1
        if not batched:
            x = x[None]
            z = None if z is None else np.asarray(z)[None]
        dt = self.dtype
        x = x.astype(dt, copy=False)
        if z is not None:
            z = np.asarray(z).astype(dt, copy=False)
        self._validate(x, z)
        tt = _check_t(t, x.shape[0])
        self._leaves = {k: ad.leaf(v, k) for k, v in self.params.items()}
        out = self._build(tt, ad.leaf(x), None if z is None else ad.leaf(z))
        self._out = out if record else None
        self._batched = batched
        y = out.value
        if not np.all(np.isfinite(y)):
            raise NumericError("non-finite network output")
        if not record:
            self._leaves = None
        return y if batched else y[0]

    def backward(self, cotangent) -> ParamStore:
        """Gradients of ``<output, cotangent>`` for every parameter."""
        if self._out is None:
            raise RuntimeError("backward called without a recorded forward pass")
        cot = np.asarray(cotangent, dtype=self._out.value.dtype)
        if not self._batched:
            cot = cot[None]
        ad.backward(self._out, cot)
        grads = ParamStore()
        for k, v in self.params.items():
            g = self._leaves[k].grad
            grads[k] = np.zeros_like(v) if g is None else g.astype(v.dtype, copy=False)
        self._out = None
        self._leaves = None
        return grads


class UNet(FieldNet):
    """Small residual U-Net. Output has the shape of ``x``."""

    kind = "unet"
    _sample_ndim = 3

    def __init__(self, cfg: ArchConfig):
        super().__init__(cfg)
        rng = RngStream(cfg.init_seed, stream_id("unet-init"))
        tdim = cfg.time_embed_dim
        base = cfg.base_channels
        self._weight(rng, "time.0.w", (base, tdim), base)
        self._add("time.0.b", np.zeros(tdim))
        self._weight(rng, "time.1.w", (tdim, tdim), tdim)
        self._add("time.1.b", np.zeros(tdim))

        cin = cfg.in_channels + cfg.cond_channels
        self._conv(rng, "in", cin, base, 3)
        chans = [base]
        ch = base
        self.down_plan = []
        for lvl, mult in enumerate(cfg.channel_mult):
            last = lvl == cfg.levels - 1
            for i in range(cfg.num_res_blocks):
                name = f"down.{lvl}.{i}"
                self._resblock(rng, name, ch, base * mult)
                ch = base * mult
                attn = cfg.attention[lvl] and not last
                if attn:
                    self._attn(rng, name + ".attn", ch)
                self.down_plan.append(("res", name, attn))
                chans.append(ch)
            if not last:
                name = f"down.{lvl}.ds"
                self._conv(rng, name, ch, ch, 3)
                self.down_plan.append(("down", name, False))
                chans.append(ch)

        self._resblock(rng, "mid.0", ch, ch)
        self.mid_attn = cfg.attention[-1]
        if self.mid_attn:
            self._attn(rng, "mid.attn", ch)
        self._resblock(rng, "mid.1", ch, ch)

        self.up_plan = []
        for lvl in reversed(range(cfg.levels)):
            mult = cfg.channel_mult[lvl]
            for i in range(cfg.num_res_blocks + 1):
                name = f"up.{lvl}.{i}"
                skip = chans.pop()
                self._resblock(rng, name, ch + skip, base * mult)
                ch = base * mult
                attn = cfg.attention[lvl] and lvl != cfg.levels - 1
                if attn:
                    self._attn(rng, name + ".attn", ch)
                self.up_plan.append(("res", name, attn))
            if lvl != 0:
                name = f"up.{lvl}.us"
                self._conv(rng, name, ch, ch, 3)
                self.up_plan.append(("up", name, False))

        self._norm("out.norm", ch)
        self._conv(rng, "out", ch, cfg.in_channels, 3, zero=True)

    # construction helpers --------------------------------------------------
    def _conv(self, rng, name, cin, cout, k, zero=False):
        self._weight(rng, name + ".w", (k, k, cin, cout), cin * k * k, zero=zero)
        self._add(name + ".b", np.zeros(cout))

    def _norm(self, name, ch):
        self._add(name + ".g", np.ones(ch))
        self._add(name + ".b", np.zeros(ch))

    def _resblock(self, rng, name, cin, cout):
        self._norm(name + ".n0", cin)
        self._conv(rng, name + ".c0", cin, cout, 3)
        self._weight(rng, name + ".t.w", (self.cfg.time_embed_dim, cout), self.cfg.time_embed_dim)
        self._add(name + ".t.b", np.zeros(cout))
        self._norm(name + ".n1", cout)
        self._conv(rng, name + ".c1", cout, cout, 3)
        if cin != cout:
            self._conv(rng, name + ".skip", cin, cout, 1)

    def _attn(self, rng, name, ch):
        self._norm(name + ".n", ch)
        self._weight(rng, name + ".qkv.w", (ch, 3 * ch), ch)
        self._add(name + ".qkv.b", np.zeros(3 * ch))
        self._weight(rng, name + ".o.w", (ch, ch), ch)
        self._add(name + ".o.b", np.zeros(ch))

    def _groups(self, ch):
        g = math.gcd(self.cfg.groups, ch)
        return max(g, 1)

    # graph builders --------------------------------------------------------
    def _validate(self, x, z):
        cfg = self.cfg
        if x.ndim != 4 or x.shape[1] != cfg.in_channels:
            raise ShapeError(f"x must be (N, {cfg.in_channels}, H, W), got {x.shape}")
        need = 2 ** (cfg.levels - 1)
        if x.shape[2] % need or x.shape[3] % need:
            raise ShapeError(f"spatial dims {x.shape[2:]} not divisible by {need}")
        if cfg.cond_channels:
            if z is None:
                raise ShapeError("conditioning z required")
            if z.shape != (x.shape[0], cfg.cond_channels) + x.shape[2:]:
                raise ShapeError(f"z shape {z.shape} misaligned with x shape {x.shape}")
        elif z is not None and z.size:
            raise ShapeError("network is unconditional but z was given")

    def _gn(self, name, h):
        return ad.group_norm(h, self._p(name + ".g"), self._p(name + ".b"),
                             self._groups(h.shape[-1]))

    def _cv(self, name, h, stride=1):
        return ad.conv2d(h, self._p(name + ".w"), self._p(name + ".b"), stride=stride)

    def _res(self, name, h, temb):
        y = self._cv(name + ".c0", ad.silu(self._gn(name + ".n0", h)))
        tproj = ad.dense(ad.silu(temb), self._p(name + ".t.w"), self._p(name + ".t.b"))
        y = ad.add(y, ad.reshape(tproj, (tproj.shape[0], 1, 1, tproj.shape[1])))
        y = self._cv(name + ".c1", ad.silu(self._gn(name + ".n1", y)))
        skip = self._cv(name + ".skip", h) if name + ".skip.w" in self.params else h
        return ad.add(skip, y)

    def _attention(self, name, h):
        n, hh, ww, c = h.shape
        y = self._gn(name + ".n", h)
        tokens = ad.reshape(y, (n, hh * ww, c))
        qkv = ad.dense(tokens, self._p(name + ".qkv.w"), self._p(name + ".qkv.b"))
        q = _slice_last(qkv, 0, c)
        k = _slice_last(qkv, c, 2 * c)
        v = _slice_last(qkv, 2 * c, 3 * c)
        logits = ad.scale(ad.matmul(q, ad.transpose(k, (0, 2, 1))), 1.0 / math.sqrt(c))
        att = ad.matmul(ad.softmax(logits, axis=-1), v)
        out = ad.dense(att, self._p(name + ".o.w"), self._p(name + ".o.b"))
        out = ad.reshape(out, (n, hh, ww, c))
        return ad.add(h, out)

    def _build(self, t, x, z):
        emb = ad.leaf(timestep_embedding(t, self.cfg.base_channels).astype(x.value.dtype))
        temb = ad.dense(emb, self._p("time.0.w"), self._p("time.0.b"))
        temb = ad.dense(ad.silu(temb), self._p("time.1.w"), self._p("time.1.b"))
        h = ad.concat([x, z], axis=1) if z is not None else x
        h = self._cv("in", ad.transpose(h, (0, 2, 3, 1)))  # NCHW -> NHWC
        skips = [h]
        for op, name, attn in self.down_plan:
            if op == "res":
                h = self._res(name, h, temb)
                if attn:
                    h = self._attention(name + ".attn", h)
            else:
                h = self._cv(name, h, stride=2)
            skips.append(h)
        h = self._res("mid.0", h, temb)
        if self.mid_attn:
            h = self._attention("mid.attn", h)
        h = self._res("mid.1", h, temb)
        for op, name, attn in self.up_plan:
            if op == "res":
                h = self._res(name, ad.concat([h, skips.pop()], axis=-1), temb)
                if attn:
                    h = self._attention(name + ".attn", h)
            else:
                h = self._cv(name, ad.upsample_nearest2x(h))
        h = ad.silu(self._gn("out.norm", h))
        return ad.transpose(self._cv("out", h), (0, 3, 1, 2))


def _slice_last(x: ad.Var, lo: int, hi: int) -> ad.Var:
    full = x.value.shape

    def vjp(g):
        out = np.zeros(full, dtype=g.dtype)
        out[..., lo:hi] = g
        return (out,)

    return ad.Var(x.value[..., lo:hi], (x,), vjp)


class MLPField(FieldNet):
    """``v(t, x, z)`` for flat vectors: concat(x, z, emb(t)) -> SiLU MLP -> dim."""

    kind = "mlp"
    _sample_ndim = 1

    def __init__(self, cfg: MLPConfig):
        super().__init__(cfg)
        rng = RngStream(cfg.init_seed, stream_id("mlp-init"))
        width = cfg.dim + cfg.cond_dim + cfg.time_embed_dim
        for i in range(cfg.depth):
            self._weight(rng, f"l{i}.w", (width, cfg.hidden), width)
            self._add(f"l{i}.b", np.zeros(cfg.hidden))
            width = cfg.hidden
        self._weight(rng, "out.w", (width, cfg.dim), width, zero=True)
        self._add("out.b", np.zeros(cfg.dim))

    def _validate(self, x, z):
        cfg = self.cfg
        if x.ndim != 2 or x.shape[1] != cfg.dim:
            raise ShapeError(f"x must be (N, {cfg.dim}), got {x.shape}")
        if cfg.cond_dim:
            if z is None or z.shape != (x.shape[0], cfg.cond_dim):
                raise ShapeError(f"z must be (N, {cfg.cond_dim}), got {None if z is None else z.shape}")

    def _build(self, t, x, z):
        emb = ad.leaf(timestep_embedding(t, self.cfg.time_embed_dim, scale=self.cfg.time_scale).astype(x.value.dtype))
        parts = [x, z, emb] if z is not None else [x, emb]
        h = ad.concat(parts, axis=1)
        for i in range(self.cfg.depth):
            h = ad.silu(ad.dense(h, self._p(f"l{i}.w"), self._p(f"l{i}.b")))
        return ad.dense(h, self._p("out.w"), self._p("out.b"))


NET_KINDS = {"unet": (UNet, ArchConfig), "mlp": (MLPField, MLPConfig)}


def build_net(kind: str, cfg_dict: dict) -> FieldNet:
    cls, cfg_cls = NET_KINDS[kind]
    names = {f.name for f in dataclasses.fields(cfg_cls)}
    return cls(cfg_cls(**{k: v for k, v in cfg_dict.items() if k in names}))


def config_dict(net: FieldNet) -> dict:
    d = dataclasses.asdict(net.cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
