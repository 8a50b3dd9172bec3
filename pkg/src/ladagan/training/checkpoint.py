"""Binary named-tensor checkpoints.

Layout (all little-endian): magic ``b"LADA"``, u32 version, u32 entry count,
then per entry: u16 name length, UTF-8 name, u8 dtype tag (0 = f32,
1 = u64), u8 rank, rank x u32 dims, raw payload.
"""
from __future__ import annotations

import os
import struct
from typing import Dict, Mapping

import numpy as np

MAGIC = b"LADA"
VERSION = 1
_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<u8")}
_TAG_OF = {np.dtype("float32"): 0, np.dtype("uint64"): 1}


class CheckpointError(IOError):
    pass


def encode_checkpoint(entries: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        if arr.dtype not in _TAG_OF:
            raise CheckpointError(f"entry '{name}': dtype {arr.dtype} is not storable (f32 or u64 only)")
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"entry name too long: '{name[:40]}...'")
        if arr.ndim > 255:
            raise CheckpointError(f"entry '{name}': rank {arr.ndim} too large")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<BB", _TAG_OF[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_TAGS[_TAG_OF[arr.dtype]]).tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> Dict[str, np.ndarray]:
    """Parse a whole checkpoint; raises CheckpointError naming the offending entry."""
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic bytes")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {VERSION})")
    pos = 12
    out: Dict[str, np.ndarray] = {}

    def need(n: int, what: str):
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint while reading {what}")

    for i in range(count):
        label = f"entry #{i}"
        need(2, f"{label} name length")
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        need(nlen, f"{label} name")
        try:
            name = buf[pos:pos + nlen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{label}: name is not valid UTF-8") from exc
        pos += nlen
        label = f"entry '{name}'"
        need(2, f"{label} header")
        tag, rank = struct.unpack_from("<BB", buf, pos)
        pos += 2
        if tag not in _TAGS:
            raise CheckpointError(f"{label}: unknown dtype tag {tag}")
        need(4 * rank, f"{label} dims")
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        dt = _TAGS[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        need(nbytes, f"{label} payload")
        if name in out:
            raise CheckpointError(f"{label}: duplicate name")
        out[name] = np.frombuffer(buf, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(dims).copy()
        out[name] = out[name].astype(dt.newbyteorder("="))
        pos += nbytes
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after {count} entries")
    return out


def save_checkpoint(entries: Mapping[str, np.ndarray], path) -> None:
    """Write atomically (temp file then rename)."""
    data = encode_checkpoint(entries)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_checkpoint(path) -> Dict[str, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc
    return decode_checkpoint(buf)
