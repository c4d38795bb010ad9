"""Binary checkpoint format.

Layout (all integers little-endian uint32):

    magic b"RTCH" | version | header_len | header JSON (utf-8)
    | n_arrays | per array: name_len, name, ndim, dims..., float32 data

The JSON header carries hyperparameters and step counters; arrays carry
network weights (``agent/``, ``critic/`` namespaces) and optimizer
moments.  Writes go through a temp file and ``os.replace`` so a crash
never leaves a half-written checkpoint behind.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "FORMAT_VERSION"]

MAGIC = b"RTCH"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    """Malformed, truncated or incompatible checkpoint file."""


def _pack_u32(x: int) -> bytes:
    return struct.pack("<I", x)


def save_checkpoint(path, header: dict, arrays: dict) -> None:
    """Serialize ``header`` + named float32 arrays to ``path`` atomically.

    Array insertion order is preserved; header keys are sorted, so the
    same state always produces byte-identical files.
    """
    chunks = [MAGIC, _pack_u32(FORMAT_VERSION)]
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks.append(_pack_u32(len(hdr)))
    chunks.append(hdr)
    chunks.append(_pack_u32(len(arrays)))
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        nb = name.encode("utf-8")
        chunks.append(_pack_u32(len(nb)))
        chunks.append(nb)
        chunks.append(_pack_u32(a.ndim))
        for d in a.shape:
            chunks.append(_pack_u32(d))
        chunks.append(a.tobytes())
    blob = b"".join(chunks)

    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.blob):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.off : self.off + n]
        self.off += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path):
    """Read a checkpoint; returns ``(header, arrays)``.

    Raises :class:`CheckpointError` on bad magic, unsupported version or
    truncation.
    """
    path = os.fspath(path)
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})"
        )
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e
    arrays = {}
    n = r.u32()
    for _ in range(n):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u32()
        if ndim > 8:
            raise CheckpointError(f"{path}: implausible rank {ndim} for {name}")
        shape = tuple(r.u32() for _ in range(ndim))
        count = 1
        for d in shape:
            count *= d
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape)
        arrays[name] = data.astype(np.float32)
    if r.off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.off} trailing bytes")
    return header, arrays
