"""FMBC checkpoint files.

Layout (little-endian)::

    b"FMBC" | u32 version | u32 header_len | header (UTF-8 JSON) | payload

The JSON header carries the model kind, network family and config, training
step, free-form metadata and an ordered table of ``(section, name, shape,
dtype)`` entries. The payload is the concatenation of those arrays in table
order: parameters, then Adam first and second moments when present.
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from .nets import FieldNet, build_net, config_dict
from .optim import AdamState
from .tensor_core import BadMagicError, TruncatedFileError, VersionMismatchError

CKPT_MAGIC = b"FMBC"
CKPT_VERSION = 1


def save_checkpoint(path, net: FieldNet, *, model_kind: str = "cfm", step: int = 0,
                    adam: AdamState | None = None, meta: dict | None = None) -> None:
    table, blobs = [], []

    def put(section, name, arr):
        arr = np.ascontiguousarray(arr)
        dt = "<f8" if arr.dtype == np.float64 else "<f4"
        table.append([section, name, list(arr.shape), dt])
        blobs.append(arr.astype(dt, copy=False).tobytes())

    for k, v in net.params.items():
        put("param", k, v)
    header = {
        "model_kind": model_kind,
        "net": net.kind,
        "config": config_dict(net),
        "step": int(step),
        "meta": meta or {},
        "adam": None,
        "table": table,
    }
    if adam is not None:
        header["adam"] = {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2,
                          "eps": adam.eps, "step": adam.step}
        for k in net.params:
            put("m", k, adam.m[k])
        for k in net.params:
            put("v", k, adam.v[k])
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(b)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Return ``(net, adam_or_None, header)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CKPT_MAGIC:
        raise BadMagicError(f"not an FMBC checkpoint: magic {data[:4]!r}")
    if len(data) < 12:
        raise TruncatedFileError("truncated checkpoint header")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != CKPT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {CKPT_VERSION}")
    if len(data) < 12 + hlen:
        raise TruncatedFileError("truncated checkpoint header")
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    off = 12 + hlen
    arrays = {"param": {}, "m": {}, "v": {}}
    for section, name, shape, dt in header["table"]:
        n = int(np.prod(shape, dtype=np.int64)) * np.dtype(dt).itemsize
        if off + n > len(data):
            raise TruncatedFileError(f"truncated checkpoint payload at {section}/{name}")
        arr = np.frombuffer(data, dtype=dt, count=n // np.dtype(dt).itemsize, offset=off)
        arrays[section][name] = arr.astype(np.dtype(dt).newbyteorder("=")).reshape(shape)
        off += n
    net = build_net(header["net"], header["config"])
    for k in net.params:
        net.params[k] = arrays["param"][k].copy()
    adam = None
    if header.get("adam"):
        a = header["adam"]
        adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"])
        adam.m = {k: arrays["m"][k].copy() for k in net.params}
        adam.v = {k: arrays["v"][k].copy() for k in net.params}
    return net, adam, header
