"""Binary tensor archive shared by network checkpoints and weight files.

Layout: magic ``EDNW`` | u32 version | u32 manifest length | manifest
(canonical JSON, UTF-8) | concatenated little-endian float32 payloads.
The manifest lists every tensor as {name, shape, dtype, offset} with
offsets relative to the payload start, plus an arbitrary ``meta`` object
for scalar state (step counters, config echo, epoch).  Serialization is
canonical (sorted keys, fixed separators, tensors ordered by name) so a
save/load/save cycle is byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"EDNW"
VERSION = 1
_HEADER = struct.Struct("<4sII")


class CheckpointError(Exception):
    """Malformed archive; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def write_archive(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": "f32", "offset": offset}
        )
        blob = arr.tobytes()
        blobs.append(blob)
        offset += len(blob)
    manifest = {"meta": meta or {}, "tensors": entries}
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, len(mbytes)))
        f.write(mbytes)
        for blob in blobs:
            f.write(blob)


def read_archive(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Parse an archive, validating fully before returning anything."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"file too short for header ({len(raw)} bytes)", 0)
    magic, version, mlen = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}", 4)
    mstart = _HEADER.size
    if mstart + mlen > len(raw):
        raise CheckpointError(f"manifest length {mlen} exceeds file size {len(raw)}", 8)
    try:
        manifest = json.loads(raw[mstart : mstart + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        pos = getattr(e, "pos", getattr(e, "start", 0))
        raise CheckpointError(f"manifest parse failure: {e}", mstart + int(pos)) from e
    if not isinstance(manifest, dict) or "tensors" not in manifest:
        raise CheckpointError("manifest missing 'tensors' section", mstart)
    payload = raw[mstart + mlen :]
    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        try:
            name = entry["name"]
            shape = tuple(int(s) for s in entry["shape"])
            dtype = entry["dtype"]
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"malformed tensor entry {entry!r}: {e}", mstart) from e
        if dtype != "f32":
            raise CheckpointError(f"tensor {name!r} has unsupported dtype {dtype!r}", mstart)
        nbytes = int(np.prod(shape)) * 4 if shape else 4
        end = offset + nbytes
        if end > len(payload):
            raise CheckpointError(
                f"tensor {name!r} payload truncated: needs bytes [{offset}, {end}) "
                f"of {len(payload)}",
                mstart + mlen + offset,
            )
        if name in tensors:
            raise CheckpointError(f"duplicate tensor name {name!r}", mstart)
        tensors[name] = np.frombuffer(payload, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape).copy()
    return tensors, manifest.get("meta", {})
