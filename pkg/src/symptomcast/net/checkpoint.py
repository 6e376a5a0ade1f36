"""Parameter checkpoints: flat little-endian float64 blob plus a JSON manifest
listing (name, shape, offset) and arbitrary metadata; version-tagged."""

from __future__ import annotations

import json
import struct

import numpy as np

_MAGIC = b"SCKP"
_VERSION = 1


def save_tensors(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    """Write named float64 tensors and metadata; byte-identical for equal inputs."""
    names = sorted(tensors)
    entries = []
    offset = 0
    for name in names:
        a = np.asarray(tensors[name], dtype="<f8", order="C")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size
    manifest = {"version": _VERSION, "tensors": entries, "meta": meta or {}}
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.asarray(tensors[name], dtype="<f8", order="C").tobytes())


def load_tensors(path):
    """Read a checkpoint; returns ``(tensors, meta)``."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        version, blob_len = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        manifest = json.loads(fh.read(blob_len).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    tensors = {}
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        tensors[entry["name"]] = (
            data[start : start + size].astype(np.float64).reshape(entry["shape"])
        )
    return tensors, manifest.get("meta", {})
