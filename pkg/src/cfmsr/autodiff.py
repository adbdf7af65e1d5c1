"""Small reverse-mode autodiff over numpy arrays.

Each :class:`Var` remembers its parents and a closure mapping the output
cotangent to parent cotangents. :func:`backward` walks the graph in reverse
topological order. The operator set is exactly what the U-Net and the MLP
field need: dense, conv2d (any odd kernel, stride 1 or 2), group norm, SiLU,
nearest 2x upsampling, concat, broadcasting add/mul, batched matmul,
softmax, reshape and transpose.
"""
from __future__ import annotations

import numpy as np

from .tensor_core import ShapeError


class Var:
    __slots__ = ("value", "grad", "parents", "_vjp", "name")

    def __init__(self, value, parents=(), vjp=None, name=None):
        self.value = value
        self.grad = None
        self.parents = parents
        self._vjp = vjp
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name})"


def leaf(value, name=None) -> Var:
    return Var(np.asarray(value), name=name)


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(np.asarray(x))


def backward(root: Var, cotangent) -> None:
    """Accumulate d(<root, cotangent>)/d(node) into ``node.grad`` for all ancestors."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    cot = np.asarray(cotangent, dtype=root.value.dtype)
    if cot.shape != root.value.shape:
        raise ShapeError(f"cotangent shape {cot.shape} does not match output {root.value.shape}")
    root.grad = cot
    for node in reversed(order):
        if node._vjp is None or node.grad is None:
            continue
        pgrads = node._vjp(node.grad)
        for p, g in zip(node.parents, pgrads):
            if g is None:
                continue
            p.grad = g if p.grad is None else p.grad + g


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# pointwise

def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    sa, sb = a.value.shape, b.value.shape
    return Var(a.value + b.value, (a, b),
               lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def mul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    av, bv = a.value, b.value
    return Var(av * bv, (a, b),
               lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a: Var, c: float) -> Var:
    c = a.value.dtype.type(c)
    return Var(a.value * c, (a,), lambda g: (g * c,))


def silu(x: Var) -> Var:
    v = x.value
    s = 1.0 / (1.0 + np.exp(-v))
    return Var(v * s, (x,), lambda g: (g * (s * (1.0 + v * (1.0 - s))),))


def tanh(x: Var) -> Var:
    y = np.tanh(x.value)
    return Var(y, (x,), lambda g: (g * (1.0 - y * y),))


# ---------------------------------------------------------------------------
# shape ops

def reshape(x: Var, shape) -> Var:
    old = x.value.shape
    return Var(x.value.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x: Var, axes) -> Var:
    inv = np.argsort(axes)
    return Var(x.value.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(xs, axis: int = 1) -> Var:
    xs = [_as_var(x) for x in xs]
    sizes = [x.value.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return Var(np.concatenate([x.value for x in xs], axis=axis), tuple(xs), vjp)


def upsample_nearest2x(x: Var) -> Var:
    """(N, H, W, C) -> (N, 2H, 2W, C) by pixel repetition."""
    v = x.value
    y = v.repeat(2, axis=1).repeat(2, axis=2)
    n, h, w, c = v.shape

    def vjp(g):
        return (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return Var(y, (x,), vjp)


# ---------------------------------------------------------------------------
# linear algebra

def dense(x: Var, w: Var, b: Var | None = None) -> Var:
    """``x @ w + b`` over the last axis of ``x``; ``w`` is (in, out)."""
    xv, wv = x.value, w.value
    if xv.shape[-1] != wv.shape[0]:
        raise ShapeError(f"dense: input {xv.shape} incompatible with weight {wv.shape}")
    y = xv @ wv
    if b is not None:
        y = y + b.value

    def vjp(g):
        gx = g @ wv.T
        gw = xv.reshape(-1, xv.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        if b is None:
            return gx, gw
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return Var(y, parents, vjp)


def matmul(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value
    return Var(av @ bv, (a, b),
               lambda g: (g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g))


def softmax(x: Var, axis: int = -1) -> Var:
    v = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(v)
    y = e / e.sum(axis=axis, keepdims=True)
    return Var(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def _im2col(xp, k, stride, ho, wo):
    n, c = xp.shape[0], xp.shape[3]
    cols = np.empty((n, ho, wo, k, k, c), dtype=xp.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, :, i, j, :] = xp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :]
    return cols.reshape(n * ho * wo, k * k * c)


def conv2d(x: Var, w: Var, b: Var | None = None, stride: int = 1) -> Var:
    """2-D cross-correlation on NHWC input, zero padding ``k // 2``.

    ``w`` is (k, k, C_in, C_out).
    """
    xv, wv = x.value, w.value
    if xv.ndim != 4:
        raise ShapeError(f"conv2d expects NHWC input, got {xv.shape}")
    n, h, wd, c = xv.shape
    k, k2, ci, o = wv.shape
    if ci != c or k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: input {xv.shape} incompatible with weight {wv.shape}")
    pad = k // 2
    xp = np.pad(xv, ((0, 0), (pad, pad), (pad, pad), (0, 0))) if pad else xv
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if k == 1 and stride == 1:
        cols = xv.reshape(-1, c)
    else:
        cols = _im2col(xp, k, stride, ho, wo)
    wflat = wv.reshape(-1, o)
    y = cols @ wflat
    if b is not None:
        y += b.value
    y = y.reshape(n, ho, wo, o)

    def vjp(g):
        gflat = g.reshape(-1, o)
        gw = (cols.T @ gflat).reshape(wv.shape)
        gcols = gflat @ wflat.T
        if k == 1 and stride == 1:
            gx = gcols.reshape(xv.shape)
        else:
            gcols = gcols.reshape(n, ho, wo, k, k, c)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += gcols[:, :, :, i, j, :]
            gx = gxp[:, pad:pad + h, pad:pad + wd, :] if pad else gxp
        if b is None:
            return gx, gw
        return gx, gw, gflat.sum(axis=0)

    parents = (x, w) if b is None else (x, w, b)
    return Var(y, parents, vjp)


def group_norm(x: Var, gamma: Var, beta: Var, groups: int, eps: float = 1e-5) -> Var:
    """Group normalisation over the last (channel) axis of an NHWC tensor."""
    xv = x.value
    n, c = xv.shape[0], xv.shape[-1]
    if c % groups:
        raise ShapeError(f"group_norm: {c} channels not divisible into {groups} groups")
    cg = c // groups
    x3 = xv.reshape(n, -1, c)
    count = x3.shape[1] * cg

    def gmean(a):
        # (n, m, c) -> per-group mean broadcast back to (n, 1, c)
        per = a.sum(axis=1).reshape(n, groups, cg).sum(axis=2) / count
        return np.repeat(per, cg, axis=1)[:, None, :]

    mu = gmean(x3)
    xc = x3 - mu
    inv = 1.0 / np.sqrt(gmean(xc * xc) + eps)
    xhat = xc * inv
    gv = gamma.value
    y = (xhat * gv + beta.value).reshape(xv.shape)

    def vjp(g):
        g3 = g.reshape(x3.shape)
        dgamma = (g3 * xhat).sum(axis=(0, 1))
        dbeta = g3.sum(axis=(0, 1))
        dxhat = g3 * gv
        dx = inv * (dxhat - gmean(dxhat) - xhat * gmean(dxhat * xhat))
        return dx.reshape(xv.shape), dgamma, dbeta

    return Var(y, (x, gamma, beta), vjp)
