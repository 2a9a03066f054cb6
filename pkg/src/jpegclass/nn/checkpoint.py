"""JCKP checkpoint files.

Layout (little-endian): magic "JCKP", u8 version=1, u32 JSON config
length + JSON bytes (method spec and train config echo), u32 tensor
count, then per tensor: u16 name length + name (utf-8), u8 ndims,
u32 per dim, f32 data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..errors import FeatureIoError

MAGIC = b"JCKP"
VERSION = 1


def save_checkpoint(path, config: dict, named_tensors):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", VERSION))
        blob = json.dumps(config, sort_keys=True).encode()
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        tensors = list(named_tensors)
        f.write(struct.pack("<I", len(tensors)))
        for name, t in tensors:
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (config dict, {name: float32 array})."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise FeatureIoError(str(e)) from e
    if data[:4] != MAGIC:
        raise FeatureIoError(f"{path}: bad checkpoint magic")
    if data[4] != VERSION:
        raise FeatureIoError(f"{path}: unsupported checkpoint version {data[4]}")
    pos = 5
    (blob_len,) = struct.unpack_from("<I", data, pos)
    pos += 4
    config = json.loads(data[pos:pos + blob_len].decode())
    pos += blob_len
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + name_len].decode()
        pos += name_len
        ndim = data[pos]
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        t = np.frombuffer(data, dtype="<f4", count=n, offset=pos)
        pos += 4 * n
        tensors[name] = t.reshape(shape).astype(np.float32)
    return config, tensors
