"""
Binary weight files.

Layout, little-endian, no alignment padding::

    b"FSTH"  u32 version (=1)  u32 tensor_count
    per tensor:
        u16 name_len  name (UTF-8)  u8 rank  u32 dims[rank]  f32 data[prod(dims)]
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from .errors import WeightFormatError

MAGIC = b"FSTH"
VERSION = 1
HEADER = struct.Struct("<4sII")


def _params_of(obj) -> Mapping[str, np.ndarray]:
    return obj.params if hasattr(obj, "params") else obj


def serialized_size(params) -> int:
    """Exact byte size ``save_weights`` will produce for ``params``."""
    total = HEADER.size
    for name, arr in _params_of(params).items():
        total += 2 + len(name.encode("utf-8")) + 1 + 4 * np.ndim(arr) + 4 * np.size(arr)
    return total


def save_weights(model_or_params, path):
    """Write a model's parameter table (or a plain name->array mapping) to ``path``."""
    params = _params_of(model_or_params)
    chunks = [HEADER.pack(MAGIC, VERSION, len(params))]
    for name, arr in params.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        arr = np.asarray(arr, dtype="<f4")
        if arr.ndim > 0xFF:
            raise ValueError(f"tensor {name!r} has rank {arr.ndim} > 255")
        chunks.append(struct.pack("<H", len(raw)) + raw)
        chunks.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes(order="C"))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        for c in chunks:
            f.write(c)
    os.replace(tmp, path)


def load_weights(path) -> dict[str, np.ndarray]:
    """Read a weight file into an ordered ``{name: float32 array}`` store.

    Raises:
        WeightFormatError: bad magic or version, truncation, or trailing
            bytes; the message names the tensor being read when it failed.
    """
    with open(path, "rb") as f:
        buf = f.read()
    return parse_weights(buf)


def parse_weights(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < HEADER.size:
        raise WeightFormatError("file shorter than header")
    magic, version, count = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise WeightFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise WeightFormatError(f"unsupported version {version}")
    pos = HEADER.size
    store = {}
    for index in range(count):
        label = f"tensor #{index}"

        def need(n, what):
            if pos + n > len(buf):
                raise WeightFormatError(f"{label}: truncated while reading {what}")

        need(2, "name length")
        (name_len,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        need(name_len, "name")
        try:
            name = buf[pos : pos + name_len].decode("utf-8")
        except UnicodeDecodeError:
            raise WeightFormatError(f"{label}: name is not valid UTF-8") from None
        pos += name_len
        label = f"tensor #{index} {name!r}"
        need(1, "rank")
        rank = buf[pos]
        pos += 1
        need(4 * rank, "dims")
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        nbytes = 4 * int(np.prod(dims, dtype=np.int64))
        need(nbytes, "data")
        arr = np.frombuffer(buf, dtype="<f4", count=nbytes // 4, offset=pos).astype(np.float32).reshape(dims)
        pos += nbytes
        if name in store:
            raise WeightFormatError(f"{label}: duplicate tensor name")
        store[name] = arr
    if pos != len(buf):
        raise WeightFormatError(f"{len(buf) - pos} trailing bytes after {count} tensors")
    return store


def load_model(path):
    """Load a weight file and bind it to the schedule its tensors describe."""
    from .model import build_fasthand, config_from_weights

    store = load_weights(path)
    return build_fasthand(config_from_weights(store), store)
