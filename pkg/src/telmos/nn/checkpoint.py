"""Binary checkpoint serialization.

Layout (all integers little-endian): magic "PSQM", format version u32 = 1,
tensor count u32, then per tensor: name length u16 + UTF-8 name, ndim u8,
dims as u32s, data as little-endian float32. Model tensors use their
canonical names; optimizer state rides along under an "opt." prefix
(scalars as 0-dim tensors). Round trips are bit-exact at float32.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import CheckpointFormatError, IncompatibleCheckpointError
from .model import CONV_COUNT, ModelArch, ModelParams, tensor_specs
from .optim import OptimizerState

MAGIC = b"PSQM"
VERSION = 1

_OPT_SCALARS = ("step", "lr", "beta1", "beta2", "eps")


def _pack_tensors(named: dict) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(named))]
    for name, arr in named.items():
        encoded = name.encode("utf-8")
        a = np.asarray(arr, dtype="<f4")
        if a.ndim:
            a = np.ascontiguousarray(a)
        parts.append(struct.pack("<H", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape) if a.ndim else b"")
        parts.append(a.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out


def _unpack_tensors(data: bytes) -> dict:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad magic, not a checkpoint stream")
    (version,) = struct.unpack("<I", r.take(4))
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    (count,) = struct.unpack("<I", r.take(4))
    named = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", r.take(2))
        name = r.take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", r.take(1))
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim)) if ndim else ()
        n_items = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = r.take(4 * n_items)
        named[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if r.pos != len(data):
        raise CheckpointFormatError(f"{len(data) - r.pos} trailing bytes after tensors")
    return named


def save_checkpoint(params: ModelParams, opt: OptimizerState | None = None) -> bytes:
    named = dict(params.tensors)
    if opt is not None:
        for key in _OPT_SCALARS:
            named[f"opt.{key}"] = np.float32(getattr(opt, key))
        for name in params.trainable_names:
            named[f"opt.m.{name}"] = opt.m[name]
            named[f"opt.v.{name}"] = opt.v[name]
    return _pack_tensors(named)


def _infer_arch(model_tensors: dict) -> ModelArch:
    try:
        channels = tuple(int(model_tensors[f"conv{i}.kernel"].shape[0]) for i in range(1, CONV_COUNT + 1))
        feature_dim = int(model_tensors["seg_fc.weight"].shape[0])
        hidden = int(model_tensors["lstm_fw.U"].shape[1])
    except KeyError as e:
        raise IncompatibleCheckpointError(f"missing tensor {e.args[0]}", tensor=e.args[0])
    return ModelArch(conv_channels=channels, feature_dim=feature_dim, hidden=hidden)


def load_checkpoint(data: bytes):
    """Parse a checkpoint; returns (params, optimizer-or-None).

    Every expected model tensor must be present with the shape implied by
    the stored architecture; the first offender is named in the error.
    """
    named = _unpack_tensors(data)
    model_tensors = {n: a for n, a in named.items() if not n.startswith("opt.")}
    arch = _infer_arch(model_tensors)
    specs = tensor_specs(arch)
    for name, shape in specs.items():
        if name not in model_tensors:
            raise IncompatibleCheckpointError(f"missing tensor {name}", tensor=name)
        if tuple(model_tensors[name].shape) != shape:
            raise IncompatibleCheckpointError(
                f"tensor {name} has shape {tuple(model_tensors[name].shape)}, expected {shape}",
                tensor=name,
            )
    for name in model_tensors:
        if name not in specs:
            raise IncompatibleCheckpointError(f"unexpected tensor {name}", tensor=name)
    params = ModelParams(model_tensors, arch)

    opt = None
    opt_tensors = {n: a for n, a in named.items() if n.startswith("opt.")}
    if opt_tensors:
        def scalar(key):
            if key not in opt_tensors:
                raise IncompatibleCheckpointError(f"missing tensor {key}", tensor=key)
            return float(np.asarray(opt_tensors[key]).reshape(-1)[0])

        opt = OptimizerState(
            lr=scalar("opt.lr"),
            beta1=scalar("opt.beta1"),
            beta2=scalar("opt.beta2"),
            eps=scalar("opt.eps"),
            step=int(round(scalar("opt.step"))),
        )
        for name in params.trainable_names:
            for kind, store in (("m", opt.m), ("v", opt.v)):
                key = f"opt.{kind}.{name}"
                if key not in opt_tensors:
                    raise IncompatibleCheckpointError(f"missing tensor {key}", tensor=key)
                if opt_tensors[key].shape != params[name].shape:
                    raise IncompatibleCheckpointError(
                        f"tensor {key} has shape {opt_tensors[key].shape}, "
                        f"expected {params[name].shape}",
                        tensor=key,
                    )
                store[name] = opt_tensors[key]
    return params, opt


def write_checkpoint(path, params: ModelParams, opt: OptimizerState | None = None):
    with open(path, "wb") as f:
        f.write(save_checkpoint(params, opt))


def read_checkpoint(path):
    with open(path, "rb") as f:
        return load_checkpoint(f.read())
