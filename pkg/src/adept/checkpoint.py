"""Versioned binary checkpoint container.

Layout::

    b"ADEPTCKP"                 8-byte magic
    uint32 LE                   format version
    uint64 LE                   header length in bytes
    header                      UTF-8 JSON, sorted keys, no whitespace
    tensor payload              float64 little-endian, C order, concatenated

The header carries the model kind, architecture config, vocabulary, any
extra metadata and, per tensor, its name, shape and byte offset.  Encoding
is canonical, so save -> load -> save reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from adept.errors import CheckpointError

MAGIC = b"ADEPTCKP"
VERSION = 1
_F8 = np.dtype("<f8")


def save_checkpoint(path, kind: str, config: dict, tensors: dict, meta: dict | None = None) -> None:
    entries, payload, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(np.asarray(tensors[name], dtype=_F8))
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        payload.append(arr.tobytes())
        offset += arr.nbytes
    header = {"kind": kind, "config": config, "meta": meta or {}, "tensors": entries}
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for chunk in payload:
            fh.write(chunk)


def load_checkpoint(path, kind: str | None = None):
    """Return ``(header, tensors)``; ``tensors`` maps name -> float64 array."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint (bad magic)")
    version, hlen = struct.unpack_from("<IQ", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = 8 + 12
    header = json.loads(raw[start : start + hlen].decode("utf-8"))
    if kind is not None and header.get("kind") != kind:
        raise CheckpointError(f"expected a {kind} checkpoint, found {header.get('kind')!r}")
    base = start + hlen
    tensors = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype=_F8, count=count, offset=base + e["offset"])
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    return header, tensors
