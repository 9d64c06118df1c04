"""Bit-exact checkpoint container.

Layout (all integers little-endian):

    magic   4 bytes  "LSKC"
    version u32      currently 1
    spec    u32 length + UTF-8 JSON of the model spec
    count   u32      number of tensors
    per tensor:
        name  u32 length + UTF-8
        dtype u8   0 = IEEE-754 binary32 LE
        rank  u8
        dims  rank * u32
        data  raw little-endian samples

Write-then-read reproduces every tensor bit-exactly; unknown versions or
dtypes are rejected, never misparsed.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from .complexity import ModelSpec, LayerSpec
from .errors import CheckpointFormatError
from .models import Network, build_model
from .tensor import Rng

MAGIC = b"LSKC"
VERSION = 1
DTYPE_F32 = 0


def spec_to_json(spec: ModelSpec) -> str:
    return json.dumps({
        "name": spec.name,
        "upsampling": spec.upsampling,
        "scale": spec.scale,
        "layers": [
            {"kind": l.kind, "c_in": l.c_in, "c_out": l.c_out, "k": l.k,
             "c_e": l.c_e, "has_bias": l.has_bias, "activation": l.activation}
            for l in spec.layers
        ],
    })


def spec_from_json(text: str) -> ModelSpec:
    d = json.loads(text)
    layers = tuple(LayerSpec(**l) for l in d["layers"])
    return ModelSpec(name=d["name"], layers=layers,
                     upsampling=d["upsampling"], scale=d["scale"])


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def save_checkpoint(path, net: Network) -> None:
    parts = [MAGIC, struct.pack("<I", VERSION), _pack_str(spec_to_json(net.spec))]
    tensors = [(name, getattr(owner, attr)) for name, owner, attr in net.named_params()]
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        a = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(_pack_str(name))
        parts.append(struct.pack("<BB", DTYPE_F32, a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.tobytes())
    blob = b"".join(parts)
    # atomic: write to a sibling temp file, then rename over the target
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointFormatError("truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_checkpoint(path):
    """Returns (spec, ordered dict of name -> float32 array)."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad magic; not an LSKC checkpoint")
    version = r.u32()
    if version != VERSION:
        raise CheckpointFormatError(f"unknown checkpoint version {version}")
    spec = spec_from_json(r.string())
    count = r.u32()
    tensors = {}
    for _ in range(count):
        name = r.string()
        dtype, rank = struct.unpack("<BB", r.take(2))
        if dtype != DTYPE_F32:
            raise CheckpointFormatError(f"unknown dtype code {dtype}")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
        tensors[name] = data.astype(np.float32)
    if r.pos != len(blob):
        raise CheckpointFormatError("trailing bytes after last tensor")
    return spec, tensors


def network_from_checkpoint(path) -> Network:
    """Rebuild a Network with the stored spec and parameters."""
    spec, tensors = load_checkpoint(path)
    net = build_model(spec, Rng(0))
    names = net.named_params()
    expect = {name for name, _, _ in names}
    if expect != set(tensors):
        missing = expect - set(tensors)
        extra = set(tensors) - expect
        raise CheckpointFormatError(f"parameter mismatch: missing={sorted(missing)} "
                                    f"extra={sorted(extra)}")
    for name, owner, attr in names:
        cur = getattr(owner, attr)
        if tensors[name].shape != cur.shape:
            raise CheckpointFormatError(f"{name}: shape {tensors[name].shape} "
                                        f"does not match spec {cur.shape}")
        setattr(owner, attr, tensors[name])
    return net
