"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"LFST"                       magic
    u32 version                   currently 1
    u32 tensor count
    per tensor:
        u16 name length, UTF-8 name
        u8 rank, rank x u32 dims
        float32 payload (row-major)
    u32 CRC32 of every preceding byte

Metadata rides along as rank-0 tensors: ``__meta__.epoch``,
``__meta__.val_loss`` and ``__meta__.fingerprint=<hex>`` (value 0).
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import BadMagic, CrcMismatch, IoError, TruncatedFile, UnsupportedVersion

MAGIC = b"LFST"
VERSION = 1
_META = "__meta__."


@dataclass
class Checkpoint:
    tensors: dict
    epoch: int = -1
    val_loss: float = float("nan")
    fingerprint: str = ""

    def __post_init__(self):
        self.tensors = {k: np.ascontiguousarray(v, dtype="<f4") for k, v in self.tensors.items()}
        # stored as float32 on disk
        self.val_loss = float(np.float32(self.val_loss))


def encode(ckpt: Checkpoint) -> bytes:
    items = list(ckpt.tensors.items())
    items.append((_META + "epoch", np.array(ckpt.epoch, dtype="<f4")))
    items.append((_META + "val_loss", np.array(ckpt.val_loss, dtype="<f4")))
    items.append((_META + "fingerprint=" + ckpt.fingerprint, np.array(0, dtype="<f4")))
    parts = [MAGIC, struct.pack("<II", VERSION, len(items))]
    for name, arr in items:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise TruncatedFile(f"needed {n} bytes at offset {self.pos}, file has {len(self.buf)}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> Checkpoint:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"not a checkpoint (magic {bytes(buf[:4])!r})")
    r = _Reader(buf)
    r.take(4)
    version, count = r.unpack("<II")
    if version != VERSION:
        raise UnsupportedVersion(f"checkpoint version {version}, expected {VERSION}")
    tensors, meta = {}, {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        size = int(np.prod(dims, dtype=np.int64))
        arr = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims).copy()
        if name.startswith(_META):
            meta[name[len(_META) :]] = arr
        else:
            tensors[name] = arr
    body_end = r.pos
    (crc,) = r.unpack("<I")
    if crc != zlib.crc32(buf[:body_end]):
        raise CrcMismatch("checkpoint CRC32 does not match its contents")
    fingerprint = next((k.split("=", 1)[1] for k in meta if k.startswith("fingerprint=")), "")
    return Checkpoint(
        tensors,
        epoch=int(meta["epoch"]) if "epoch" in meta else -1,
        val_loss=float(meta["val_loss"]) if "val_loss" in meta else float("nan"),
        fingerprint=fingerprint,
    )


def save(path, ckpt: Checkpoint):
    try:
        with open(path, "wb") as fh:
            fh.write(encode(ckpt))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load(path) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    return decode(buf)


def checkpoint_io(direction: str, path, checkpoint: Checkpoint | None = None):
    if direction == "save":
        save(path, checkpoint)
        return None
    if direction == "load":
        return load(path)
    raise ValueError(f"direction must be 'save' or 'load', got {direction!r}")
