"""Versioned container of named arrays plus JSON metadata.

Layout::

    b"FGICKPT\\0"                  8-byte magic
    uint32 little-endian          format version
    uint64 little-endian          header length in bytes
    header                        UTF-8 JSON: {"meta": ..., "arrays": [...]}
    array payloads                raw C-order bytes, in header order

The header is written with sorted keys and no whitespace, and arrays keep
their insertion order, so save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError

MAGIC = b"FGICKPT\0"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    meta: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)

    def subset(self, prefix):
        """Arrays under ``prefix/`` with the prefix stripped."""
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.arrays.items() if k.startswith(prefix + "/")}

    def has(self, prefix):
        return any(k.startswith(prefix + "/") for k in self.arrays)

    def to_bytes(self):
        entries, offset = [], 0
        for name, arr in self.arrays.items():
            arr = np.asarray(arr, order="C")
            entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                            "offset": offset, "nbytes": arr.nbytes})
            offset += arr.nbytes
        header = json.dumps({"meta": self.meta, "arrays": entries}, sort_keys=True,
                            separators=(",", ":")).encode("utf-8")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        buf.write(header)
        for arr in self.arrays.values():
            buf.write(np.asarray(arr, order="C").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        if data[:8] != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        version, hlen = struct.unpack("<IQ", data[8:20])
        if version != FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        header = json.loads(data[20:20 + hlen].decode("utf-8"))
        base = 20 + hlen
        arrays = {}
        for e in header["arrays"]:
            start = base + e["offset"]
            raw = data[start:start + e["nbytes"]]
            if len(raw) != e["nbytes"]:
                raise CheckpointError(f"truncated payload for {e['name']}")
            arrays[e["name"]] = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(tuple(e["shape"])).copy()
        return cls(header["meta"], arrays)


def save_checkpoint(path, ckpt: Checkpoint):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(ckpt.to_bytes())
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return Checkpoint.from_bytes(path.read_bytes())
