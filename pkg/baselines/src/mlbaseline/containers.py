"""Readers for the HAI1 record container and IDX tensor files.

Independent implementation against the published byte layouts; nothing here
imports the producer side. HAI1 is big-endian throughout:

    "HAI1" | u16 version | u8 scheme | u8 flags | u16 dlen | dlen ASCII delta
          | u32 n_in | u32 n_out | u32 record_len | u32 count
    then per record: u32 index | u16 label | record_len payload bytes

Scheme ids: 0 plaintext bits, 1 plaintext u8, 2 bit subsample, 3 signed
projection. Flags: bit 0 labels present, bit 1 class-permuted. The label
field is 0xFFFF exactly when bit 0 is clear.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"HAI1"
VERSION = 1
LABEL_ABSENT = 0xFFFF
FLAG_LABELS = 0x01
FLAG_PERMUTED = 0x02

SCHEME_BITS = 0
SCHEME_U8 = 1
SCHEME_BIT_SAMPLE = 2
SCHEME_PROJECTION = 3
_BIT_SCHEMES = (SCHEME_BITS, SCHEME_BIT_SAMPLE)


class ContainerError(ValueError):
    """Raised for any structural problem in a container file."""


@dataclass(frozen=True)
class Container:
    scheme: int
    delta: str
    n_in: int
    n_out: int
    record_len: int
    permuted: bool
    indexes: np.ndarray
    labels: np.ndarray | None
    payloads: np.ndarray  # (count, record_len) uint8

    def __len__(self) -> int:
        return int(self.payloads.shape[0])

    @property
    def holds_bits(self) -> bool:
        return self.scheme in _BIT_SCHEMES

    @property
    def n_bits(self) -> int:
        if not self.holds_bits:
            raise ContainerError("not a bit container")
        return self.n_in if self.scheme == SCHEME_BITS else self.n_out

    def features(self) -> np.ndarray:
        """Model-ready float32 matrix: 0/1 per bit, or raw quantized values."""
        if self.holds_bits:
            bits = np.unpackbits(self.payloads, axis=1, count=self.n_bits)
            return bits.astype(np.float32)
        width = self.n_in if self.scheme == SCHEME_U8 else self.n_out
        if self.record_len == width:
            return self.payloads.astype(np.float32)
        if self.record_len == 2 * width:
            return self.payloads.view(">u2").astype(np.float32)
        raise ContainerError("unsupported value width")

    def record_checksums(self) -> list:
        """sha256 hex of each record exactly as stored on disk."""
        out = []
        labels = self.labels
        for row in range(len(self)):
            label = LABEL_ABSENT if labels is None else int(labels[row])
            head = struct.pack(">IH", int(self.indexes[row]), label)
            out.append(hashlib.sha256(head + self.payloads[row].tobytes()).hexdigest())
        return out


def read_container(path) -> Container:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 14 or blob[:4] != MAGIC:
        raise ContainerError(f"{path}: not a HAI1 container")
    version, scheme, flags, dlen = struct.unpack_from(">HBBH", blob, 4)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    if scheme not in (SCHEME_BITS, SCHEME_U8, SCHEME_BIT_SAMPLE, SCHEME_PROJECTION):
        raise ContainerError(f"{path}: unknown scheme {scheme}")
    if flags & ~(FLAG_LABELS | FLAG_PERMUTED):
        raise ContainerError(f"{path}: unknown flag bits 0x{flags:02x}")
    header_len = 10 + dlen + 16
    if len(blob) < header_len:
        raise ContainerError(f"{path}: truncated header")
    delta = blob[10 : 10 + dlen].decode("ascii")
    n_in, n_out, record_len, count = struct.unpack_from(">IIII", blob, 10 + dlen)
    if record_len < 1:
        raise ContainerError(f"{path}: zero-length records")

    stride = 6 + record_len
    if len(blob) != header_len + stride * count:
        raise ContainerError(
            f"{path}: size mismatch, want {header_len + stride * count} bytes "
            f"got {len(blob)}"
        )
    body = np.frombuffer(blob, dtype=np.uint8, offset=header_len)
    body = body.reshape(count, stride)
    indexes = body[:, 0:4].copy().view(">u4").reshape(count).astype(np.int64)
    raw_labels = body[:, 4:6].copy().view(">u2").reshape(count).astype(np.int64)
    payloads = np.ascontiguousarray(body[:, 6:])

    if np.unique(indexes).size != count:
        raise ContainerError(f"{path}: duplicate record index")
    if flags & FLAG_LABELS:
        if count and raw_labels.max() >= LABEL_ABSENT:
            raise ContainerError(f"{path}: absent label under the labels flag")
        labels = raw_labels
    else:
        if count and not np.all(raw_labels == LABEL_ABSENT):
            raise ContainerError(f"{path}: label bytes present without the flag")
        labels = None

    holder = Container(
        scheme=scheme,
        delta=delta,
        n_in=n_in,
        n_out=n_out,
        record_len=record_len,
        permuted=bool(flags & FLAG_PERMUTED),
        indexes=indexes,
        labels=labels,
        payloads=payloads,
    )
    if holder.holds_bits:
        nbits = holder.n_bits
        if record_len != (nbits + 7) // 8:
            raise ContainerError(f"{path}: record length does not fit {nbits} bits")
        rem = nbits % 8
        if rem and count and np.any(payloads[:, -1] & (0xFF >> rem)):
            raise ContainerError(f"{path}: nonzero padding bits")
    return holder


# IDX: the MNIST-family tensor format. u32 magic 0x0000080N (N dims), u8 data.


def read_idx_images(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ContainerError(f"{path}: truncated IDX header")
    magic = struct.unpack_from(">I", blob)[0]
    ndim = magic & 0xFF
    if magic >> 8 != 0x08 or ndim < 1 or ndim > 3:
        raise ContainerError(f"{path}: bad IDX magic 0x{magic:08x}")
    dims = struct.unpack_from(f">{ndim}I", blob, 4)
    offset = 4 + 4 * ndim
    total = int(np.prod(dims))
    if len(blob) != offset + total:
        raise ContainerError(f"{path}: IDX payload size mismatch")
    data = np.frombuffer(blob, dtype=np.uint8, offset=offset)
    return data.reshape(dims[0], -1) if ndim > 1 else data.copy()


def read_idx_labels(path) -> np.ndarray:
    arr = read_idx_images(path)
    if arr.ndim != 1:
        raise ContainerError(f"{path}: label file must be one-dimensional")
    return arr.astype(np.int64)
