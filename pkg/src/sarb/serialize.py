"""Flat binary snapshots of named float64 arrays.

Layout (little-endian): magic ``SARB``, version u32, then one record per
array: name length u32, utf-8 name bytes, rank u32, dims u32 each, and
the row-major float64 payload.  Records run to the end of the file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SARB"
VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray]):
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in arrays.items():
            data = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.tobytes(order="C"))


def load_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a parameter snapshot (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    out: dict[str, np.ndarray] = {}
    offset = 8
    while offset < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", raw, offset) if rank else ()
        offset += 4 * rank
        count = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        out[name] = arr.reshape(dims).astype(np.float64)
    return out
