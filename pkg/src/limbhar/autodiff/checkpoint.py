"""Binary checkpoint format.

Layout::

    8 bytes   magic b"LHCKPT01"
    8 bytes   little-endian uint64: length N of the JSON header
    N bytes   UTF-8 JSON header: {"meta": {...}, "params": [{"name", "shape", "dtype"}, ...]}
    ...       raw little-endian array bytes, one block per header entry, in order

Arrays are stored verbatim, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import DataError

MAGIC = b"LHCKPT01"


def save_checkpoint(path, meta: Mapping, params: Mapping[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.dtype(arr.dtype).newbyteorder("<"), order="C")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str})
        blobs.append(arr.tobytes())
    header = json.dumps({"meta": meta, "params": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file")
    (n,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + n].decode("utf-8"))
    offset = 16 + n
    params = {}
    for entry in header["params"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        nbytes = count * dtype.itemsize
        if offset + nbytes > len(raw):
            raise DataError(f"{path}: truncated at parameter {entry['name']!r}")
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=offset).reshape(tuple(entry["shape"]))
        params[entry["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
        offset += nbytes
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")
    return header["meta"], params
