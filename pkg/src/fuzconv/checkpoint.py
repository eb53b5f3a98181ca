"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"FZCV"                 magic
    uint16                  format version
    uint32                  header length in bytes
    header                  UTF-8 JSON: fingerprint, epoch, best_val_loss,
                            config, fuzzifier, extra metadata, and a manifest
                            of tensors as {"name", "shape", "offset"}
    blobs                   float64 little-endian, offsets relative to the
                            first byte after the header

Writes go to a temporary file in the target directory and are renamed
into place.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError, CheckpointMismatch

MAGIC = b"FZCV"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


@dataclass
class Checkpoint:
    fingerprint: str
    tensors: dict[str, np.ndarray]
    epoch: int = 0
    best_val_loss: float | None = None
    config: dict = field(default_factory=dict)
    fuzzifier: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def require_fingerprint(self, expected: str) -> None:
        if expected != self.fingerprint:
            raise CheckpointMismatch(
                f"checkpoint was trained with config {self.fingerprint}, current config is {expected}"
            )


def encode(ckpt: Checkpoint) -> bytes:
    manifest = []
    blobs = []
    offset = 0
    for name in sorted(ckpt.tensors):
        arr = np.ascontiguousarray(ckpt.tensors[name], dtype="<f8")
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        raw = arr.tobytes()
        blobs.append(raw)
        offset += len(raw)
    header = {
        "fingerprint": ckpt.fingerprint,
        "epoch": ckpt.epoch,
        "best_val_loss": ckpt.best_val_loss,
        "config": ckpt.config,
        "fuzzifier": ckpt.fuzzifier,
        "meta": ckpt.meta,
        "tensors": manifest,
    }
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hbytes)) + hbytes + b"".join(blobs)


def decode(buf: bytes) -> Checkpoint:
    if len(buf) < _PREFIX.size:
        raise CheckpointFormatError("file too short for a checkpoint")
    magic, version, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(buf[start : start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"corrupt header: {exc}") from None
    base = start + hlen
    tensors = {}
    try:
        for entry in header["tensors"]:
            shape = tuple(int(d) for d in entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            lo = base + int(entry["offset"])
            hi = lo + 8 * count
            if lo < base or hi > len(buf):
                raise CheckpointFormatError(f"tensor {entry['name']} runs past end of file")
            tensors[entry["name"]] = np.frombuffer(buf[lo:hi], dtype="<f8").astype(np.float64).reshape(shape)
        header["fingerprint"]
    except CheckpointFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"malformed tensor manifest: {exc!r}") from None
    return Checkpoint(
        fingerprint=header["fingerprint"],
        tensors=tensors,
        epoch=header.get("epoch", 0),
        best_val_loss=header.get("best_val_loss"),
        config=header.get("config", {}),
        fuzzifier=header.get("fuzzifier", {}),
        meta=header.get("meta", {}),
    )


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(ckpt: Checkpoint, path: str | os.PathLike) -> None:
    atomic_write_bytes(path, encode(ckpt))


def load(path: str | os.PathLike) -> Checkpoint:
    return decode(Path(path).read_bytes())
