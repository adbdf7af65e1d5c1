"""Dense tensor helpers, counter-based random streams and the FMT1 tensor file.

Tensors are plain ``numpy.ndarray`` values (row-major, float32 by default).
The working precision can be switched to float64 for numerical checks with
:func:`precision`.
"""
from __future__ import annotations

import contextlib
import hashlib
import os
import struct

import numpy as np

__all__ = [
    "ShapeError",
    "NumericError",
    "TensorFileError",
    "BadMagicError",
    "VersionMismatchError",
    "TruncatedFileError",
    "RngStream",
    "stream_id",
    "get_dtype",
    "precision",
    "elementwise",
    "gaussian",
    "save_tensor",
    "load_tensor",
    "write_tensor",
    "read_tensor",
]

TENSOR_MAGIC = b"FMT1"
TENSOR_VERSION = 1


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NumericError(ArithmeticError):
    """Raised on NaN/Inf values or numerically impossible requests."""


class TensorFileError(IOError):
    pass


class BadMagicError(TensorFileError):
    pass


class VersionMismatchError(TensorFileError):
    pass


class TruncatedFileError(TensorFileError):
    pass


# ---------------------------------------------------------------------------
# precision switch

_DTYPE = np.dtype(np.float32)


def get_dtype() -> np.dtype:
    return _DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the default float dtype (``float32`` or ``float64``)."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported precision {dtype}")
    old = _DTYPE
    _DTYPE = dtype
    try:
        yield dtype
    finally:
        _DTYPE = old


# ---------------------------------------------------------------------------
# random streams

_MASK64 = (1 << 64) - 1


def stream_id(*parts) -> int:
    """Map a tuple of labels/ints to a 64-bit stream id (blake2b, little-endian)."""
    h = hashlib.blake2b(repr(parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream)``.

    The bit source is Philox-4x32-10 with the 128-bit key ``(seed, stream)``
    and a zero initial counter. Uniforms take the top 53 bits of each raw
    64-bit word; normals use the Box-Muller transform on pairs of uniforms.
    The raw Philox stream is fixed by its published constants, so draws are
    reproducible across runs and platforms.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._bits = np.random.Philox(key=key, counter=0)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"

    def child(self, *parts) -> "RngStream":
        """An independent stream derived from this one's key and ``parts``."""
        return RngStream(self.seed, stream_id(self.stream, *parts))

    def raw(self, n: int) -> np.ndarray:
        return self._bits.random_raw(int(n)).astype(np.uint64)

    def uniform(self, shape=()) -> np.ndarray:
        """Float64 uniforms on [0, 1)."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.raw(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return u.reshape(shape)

    def normal(self, shape=()) -> np.ndarray:
        """Float64 standard normals via Box-Muller."""
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u = self.uniform((2, m))
        r = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1 - u in (0, 1]
        theta = 2.0 * np.pi * u[1]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape)

    def integers(self, low: int, high: int, size=()) -> np.ndarray:
        """Integers in [low, high) by floor(u * (high - low))."""
        if high <= low:
            raise ValueError("empty integer range")
        u = self.uniform(size)
        return (low + np.floor(u * (high - low))).astype(np.int64)


def gaussian(shape, rng: RngStream, dtype=None) -> np.ndarray:
    """I.i.d. standard normal tensor drawn from ``rng``."""
    shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ShapeError(f"gaussian needs a nonempty shape with positive extents, got {shape}")
    dtype = np.dtype(dtype) if dtype is not None else get_dtype()
    return rng.normal(shape).astype(dtype)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def elementwise(a, b, op: str) -> np.ndarray:
    """Pointwise ``add``, ``sub``, ``mul`` or ``scale`` (b a scalar)."""
    a = np.asarray(a)
    if a.dtype.kind != "f":
        a = a.astype(get_dtype())
    if op == "scale":
        if np.ndim(b) != 0:
            raise ShapeError(f"scale expects a scalar factor, got shape {np.shape(b)}")
        return a * a.dtype.type(b)
    b = np.asarray(b, dtype=a.dtype)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    raise ValueError(f"unknown op {op!r}")


# ---------------------------------------------------------------------------
# FMT1 files

def write_tensor(fh, t) -> None:
    t = np.asarray(t, dtype="<f4")
    fh.write(TENSOR_MAGIC)
    fh.write(struct.pack("<II", TENSOR_VERSION, t.ndim))
    fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
    fh.write(t.tobytes(order="C"))


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFileError(f"truncated tensor file: expected {n} bytes of {what}, got {len(buf)}")
    return buf


def read_tensor(fh) -> np.ndarray:
    magic = fh.read(4)
    if magic != TENSOR_MAGIC:
        if len(magic) < 4:
            raise TruncatedFileError("truncated tensor file: missing magic")
        raise BadMagicError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
    version, rank = struct.unpack("<II", _read_exact(fh, 8, "header"))
    if version != TENSOR_VERSION:
        raise VersionMismatchError(f"tensor file version {version}, expected {TENSOR_VERSION}")
    dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, "dims"))
    count = int(np.prod(dims, dtype=np.int64))
    payload = _read_exact(fh, 4 * count, "payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)


def save_tensor(t, path) -> None:
    """Write ``t`` as an FMT1 file (float32, little-endian)."""
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        write_tensor(fh, t)
    os.replace(tmp, path)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_tensor(fh)
