"""Single-file parameter checkpoints.

Byte layout, in order:

    offset 0   4 bytes   magic ``NDG1``
    offset 4   4 bytes   header length H, unsigned 32-bit little endian
    offset 8   H bytes   UTF-8 JSON: {"tensors": [{"name": ..., "shape": [...]},
                         ...], "extra": {...}}
    offset 8+H           payload: for each tensor, in header order, its
                         row-major values as 64-bit little-endian floats

Tensors are written in sorted-name order so identical parameter sets
produce byte-identical files.  ``extra`` carries small JSON metadata
(training config, vocabulary hash); anything large belongs elsewhere.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"NDG1"


class BadCheckpoint(ValueError):
    pass


def save_tensors(path, tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    names = sorted(tensors)
    header = {
        "tensors": [{"name": n, "shape": list(np.asarray(tensors[n]).shape)} for n in names],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for n in names:
            arr = np.ascontiguousarray(np.asarray(tensors[n], dtype=np.float64))
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise BadCheckpoint(f"bad magic {raw[:4]!r}")
    if len(raw) < 8:
        raise BadCheckpoint("truncated header")
    (header_len,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + header_len:
        raise BadCheckpoint("truncated header")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadCheckpoint(f"unreadable header: {exc}") from exc
    offset = 8 + header_len
    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(int(d) for d in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise BadCheckpoint(f"payload truncated at tensor {entry['name']!r}")
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        tensors[entry["name"]] = flat.astype(np.float64).reshape(shape)
        offset += nbytes
    if offset != len(raw):
        raise BadCheckpoint(f"{len(raw) - offset} trailing bytes after payload")
    return tensors, header.get("extra", {})
