"""Single-file model checkpoints: JSON header plus named float32 blobs.

Layout (little-endian throughout):

    magic   4 bytes  b"MCKP"
    version u16      (currently 1)
    hlen    u32      header JSON byte length
    header  hlen bytes of UTF-8 JSON (config echo, parameter count)
    count   u32      number of named arrays
    per array:
        nlen  u16, name UTF-8
        ndim  u8, shape u32 x ndim
        data  float32 values, C order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MCKP"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def save_checkpoint(path: str | Path, header: dict, arrays: dict[str, np.ndarray]) -> None:
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            data = np.ascontiguousarray(arr, dtype="<f4")
            nbytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nbytes)))
            fh.write(nbytes)
            fh.write(struct.pack("<B", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointFormatError(f"bad checkpoint magic {magic!r}")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != VERSION:
            raise CheckpointFormatError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            size = int(np.prod(shape)) if ndim else 1
            raw = fh.read(4 * size)
            if len(raw) != 4 * size:
                raise CheckpointFormatError("truncated checkpoint")
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return header, arrays
