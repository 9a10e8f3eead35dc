"""Packed bitvector arithmetic: AND, XOR, popcount, Hamming distance, majority mode.

Bit order convention: bit 0 is the most significant bit of byte 0 (the same
convention ``numpy.unpackbits`` uses with ``bitorder="big"``). A vector of
``n`` bits occupies ``ceil(n / 8)`` bytes; trailing pad bits are always zero
(canonical form). Internally buffers are padded to a multiple of 8 bytes so
that bulk kernels can run on ``uint64`` views.
"""

from __future__ import annotations

import enum
from typing import Iterable, Sequence

import numpy as np

_POPCOUNT_TABLE = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)

HAVE_HW_POPCOUNT = hasattr(np, "bitwise_count")


def popcount_words(buf: np.ndarray) -> int:
    """Popcount via the vectorized bit-count kernel (needs numpy >= 2.0)."""
    if not HAVE_HW_POPCOUNT:
        raise RuntimeError("numpy.bitwise_count not available")
    return int(np.bitwise_count(buf.view(np.uint64)).sum())

def popcount_table(buf: np.ndarray) -> int:
    """Popcount via an 8-bit lookup table; always available."""
    return int(_POPCOUNT_TABLE[buf.view(np.uint8)].sum())

if HAVE_HW_POPCOUNT:
    def _count_bytes(buf: np.ndarray) -> int:
        return int(np.bitwise_count(buf.view(np.uint64)).sum())

    def _count_rows(mat: np.ndarray) -> np.ndarray:
        return np.bitwise_count(mat.view(np.uint64)).sum(axis=1, dtype=np.int64)
else:
    def _count_bytes(buf: np.ndarray) -> int:
        return int(_POPCOUNT_TABLE[buf.view(np.uint8)].sum())

    def _count_rows(mat: np.ndarray) -> np.ndarray:
        return _POPCOUNT_TABLE[mat.view(np.uint8)].sum(axis=1, dtype=np.int64)


def _padded_nbytes(nbits: int) -> int:
    """Storage bytes: ceil(nbits/8) rounded up to a multiple of 8."""
    return ((nbits + 63) // 64) * 8


def _pad_mask(nbits: int, nbytes: int) -> np.ndarray:
    """Byte mask that zeroes every bit at position >= nbits."""
    mask = np.zeros(nbytes, dtype=np.uint8)
    full, rem = divmod(nbits, 8)
    mask[:full] = 0xFF
    if rem:
        mask[full] = (0xFF00 >> rem) & 0xFF
    return mask


class Tie(enum.Enum):
    """Resolution of exact ties in :func:`majority_mode`."""

    ZERO = 0
    ONE = 1


class BitVector:
    """Immutable packed vector of ``n`` bits in canonical form."""

    __slots__ = ("_buf", "_n")

    def __init__(self, buf: np.ndarray, nbits: int, _trusted: bool = False):
        if nbits < 0:
            raise ValueError("negative bit length")
        if not _trusted:
            buf = np.asarray(buf, dtype=np.uint8)
            padded = np.zeros(_padded_nbytes(nbits), dtype=np.uint8)
            padded[: buf.size] = buf
            padded &= _pad_mask(nbits, padded.size)
            buf = padded
        buf.setflags(write=False)
        self._buf = buf
        self._n = nbits

    # -- constructors -------------------------------------------------

    @classmethod
    def zeros(cls, nbits: int) -> "BitVector":
        return cls(np.zeros(_padded_nbytes(nbits), dtype=np.uint8), nbits, _trusted=True)

    @classmethod
    def ones(cls, nbits: int) -> "BitVector":
        return cls(_pad_mask(nbits, _padded_nbytes(nbits)), nbits, _trusted=True)

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int) -> "BitVector":
        """Decode ``nbits`` bits from ``data`` (bit 0 = MSB of byte 0).

        ``data`` must be exactly ``ceil(nbits / 8)`` bytes and the trailing
        pad bits must be zero.
        """
        need = (nbits + 7) // 8
        if len(data) != need:
            raise ValueError(f"expected {need} bytes for {nbits} bits, got {len(data)}")
        raw = np.frombuffer(data, dtype=np.uint8)
        buf = np.zeros(_padded_nbytes(nbits), dtype=np.uint8)
        buf[:need] = raw
        if nbits % 8 and (raw[-1] & ~_pad_mask(nbits, need)[-1]):
            raise ValueError("nonzero pad bits in final byte")
        return cls(buf, nbits, _trusted=True)

    @classmethod
    def from_bits(cls, bits: Iterable[int] | np.ndarray) -> "BitVector":
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("expected a flat bit sequence")
        if arr.size and arr.max() > 1:
            raise ValueError("bits must be 0 or 1")
        nbits = arr.size
        packed = np.packbits(arr)
        buf = np.zeros(_padded_nbytes(nbits), dtype=np.uint8)
        buf[: packed.size] = packed
        return cls(buf, nbits, _trusted=True)

    @classmethod
    def from01(cls, s: str) -> "BitVector":
        return cls.from_bits([int(c) for c in s])

    # -- accessors ----------------------------------------------------

    def __len__(self) -> int:
        return self._n

    @property
    def nbits(self) -> int:
        return self._n

    @property
    def buffer(self) -> np.ndarray:
        """Padded read-only uint8 storage (multiple of 8 bytes)."""
        return self._buf

    def to_bytes(self) -> bytes:
        return self._buf[: (self._n + 7) // 8].tobytes()

    def to_bits(self) -> np.ndarray:
        return np.unpackbits(self._buf, count=self._n)

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self._n:
            raise IndexError(i)
        return (self._buf[i >> 3] >> (7 - (i & 7))) & 1

    # -- operations ---------------------------------------------------

    def popcount(self) -> int:
        return _count_bytes(self._buf)

    def _binop(self, other: "BitVector", op) -> "BitVector":
        if not isinstance(other, BitVector):
            return NotImplemented
        if other._n != self._n:
            raise ValueError(f"length mismatch: {self._n} vs {other._n}")
        return BitVector(op(self._buf, other._buf), self._n, _trusted=True)

    def __and__(self, other):
        return self._binop(other, np.bitwise_and)

    def __or__(self, other):
        return self._binop(other, np.bitwise_or)

    def __xor__(self, other):
        return self._binop(other, np.bitwise_xor)

    def __invert__(self) -> "BitVector":
        buf = np.bitwise_xor(self._buf, 0xFF) & _pad_mask(self._n, self._buf.size)
        return BitVector(buf, self._n, _trusted=True)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self._n == other._n and np.array_equal(self._buf, other._buf)

    def __hash__(self) -> int:
        return hash((self._n, self._buf.tobytes()))

    def __repr__(self) -> str:
        head = "".join(str(self[i]) for i in range(min(self._n, 32)))
        tail = "..." if self._n > 32 else ""
        return f"BitVector({self._n} bits, {head}{tail})"

    def is_canonical(self) -> bool:
        """True iff every pad bit beyond the declared length is zero."""
        return not np.any(self._buf & ~_pad_mask(self._n, self._buf.size))


def popcount(v: BitVector) -> int:
    """Number of set bits in ``v``."""
    return v.popcount()


def and_similarity(a: BitVector, b: BitVector) -> int:
    """popcount(a AND b): the shared-ones similarity used for mode clustering."""
    if a.nbits != b.nbits:
        raise ValueError(f"length mismatch: {a.nbits} vs {b.nbits}")
    return _count_bytes(a.buffer & b.buffer)


def hamming(a: BitVector, b: BitVector) -> int:
    """popcount(a XOR b): number of differing positions."""
    if a.nbits != b.nbits:
        raise ValueError(f"length mismatch: {a.nbits} vs {b.nbits}")
    return _count_bytes(a.buffer ^ b.buffer)


def majority_mode(rows: Sequence[BitVector], tie: Tie = Tie.ZERO) -> BitVector:
    """Per-position majority bit over ``rows``.

    Bit ``i`` of the result is 1 iff strictly more than half of the rows have
    bit ``i`` set; an exact tie (even row counts only) resolves to ``tie``.
    """
    if len(rows) == 0:
        raise ValueError("majority of an empty set")
    nbits = rows[0].nbits
    mat = pack_rows_from_vectors(rows)
    return majority_rows(mat, nbits, tie=tie)


# -- batch kernels over row matrices ----------------------------------
#
# A "row matrix" is a 2-D uint8 array, one packed vector per row, with the
# row byte count padded to a multiple of 8 so uint64 views work.

def pack_rows_from_vectors(rows: Sequence[BitVector]) -> np.ndarray:
    nbits = rows[0].nbits
    for r in rows:
        if r.nbits != nbits:
            raise ValueError("rows must share a bit length")
    return np.stack([r.buffer for r in rows])


def matrix_from_payloads(payloads: np.ndarray, nbits: int) -> np.ndarray:
    """Pad a (count, ceil(nbits/8)) payload matrix out to the kernel width."""
    count, nbytes = payloads.shape
    need = (nbits + 7) // 8
    if nbytes != need:
        raise ValueError(f"expected {need} payload bytes for {nbits} bits, got {nbytes}")
    mat = np.zeros((count, _padded_nbytes(nbits)), dtype=np.uint8)
    mat[:, :nbytes] = payloads
    if np.any(mat & ~_pad_mask(nbits, mat.shape[1])):
        raise ValueError("nonzero pad bits in payload rows")
    return mat

def vector_from_row(mat: np.ndarray, i: int, nbits: int) -> BitVector:
    return BitVector(mat[i].copy(), nbits, _trusted=True)


def hamming_rows(mat: np.ndarray, row: np.ndarray) -> np.ndarray:
    """Hamming distance of every matrix row to one packed row."""
    return _count_rows(mat ^ row)


def and_count_rows(mat: np.ndarray, row: np.ndarray) -> np.ndarray:
    """AND-popcount similarity of every matrix row to one packed row."""
    return _count_rows(mat & row)


def majority_rows(mat: np.ndarray, nbits: int, tie: Tie = Tie.ZERO) -> BitVector:
    """Majority over the rows of a packed matrix; see :func:`majority_mode`."""
    if mat.shape[0] == 0:
        raise ValueError("majority of an empty set")
    unpacked = np.unpackbits(mat, axis=1, count=nbits)
    return majority_from_unpacked(unpacked, tie=tie)


def majority_from_unpacked(unpacked: np.ndarray, tie: Tie = Tie.ZERO) -> BitVector:
    """Majority over pre-unpacked rows (one bit per uint8 cell).

    Lets iteration loops keep a single unpacked copy of the data instead of
    calling ``unpackbits`` per step.
    """
    count, nbits = unpacked.shape
    if count == 0:
        raise ValueError("majority of an empty set")
    twice = 2 * unpacked.sum(axis=0, dtype=np.int64)
    if tie is Tie.ZERO:
        bits = twice > count
    else:
        bits = twice >= count
    packed = np.packbits(bits)
    buf = np.zeros(_padded_nbytes(nbits), dtype=np.uint8)
    buf[: packed.size] = packed
    return BitVector(buf, nbits, _trusted=True)
