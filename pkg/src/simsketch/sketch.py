"""Keyed similarity-preserving sketch constructions.

Two constructions are provided, both parametrized by a secret key and a
decimal compression rate ``delta``:

``BINARY_SAMPLE``
    For bit payloads. A keyed sample (without replacement) of ``n_out`` input
    positions, re-ordered by a second keyed shuffle, then XORed with a keyed
    mask. Because every record is masked with the same keyed pad, pairwise
    Hamming distance between two sketches equals the Hamming distance of the
    two position-subsampled inputs exactly.

``REAL_PROJECTION``
    For vectors of unsigned 8-bit values. A keyed random projection with
    zero-mean entries of variance ``1/n_out`` (sign entries drawn from the
    keyed stream), plus a keyed offset, quantized to ``quant_bits`` with a
    fixed global scale derived only from the input range [0, 255] and the
    dimensions, never from data statistics. Euclidean distances are preserved
    in expectation and are exactly invariant to the offset before
    quantization.

Both are pure functions of (key, params): equal inputs build sketchers that
produce bit-identical sketches.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

import numpy as np

from .bitvec import BitVector, and_similarity, hamming
from .keys import KeyedRandom, SecretKey, derive_stream

DELTA_MIN = Decimal("1.5")
DELTA_MAX = Decimal("16")
MIN_OUT = 8

_TAG_POSITIONS = b"positions"
_TAG_OUT_ORDER = b"outorder"
_TAG_MASK = b"mask"
_TAG_PROJ_SIGN = b"projsign"
_TAG_OFFSET = b"offset"
_TAG_CLASS_PERM = b"classperm"


class Scheme(enum.Enum):
    BINARY_SAMPLE = "binary-sample"
    REAL_PROJECTION = "real-projection"


class SimilarityMeasure(enum.Enum):
    """Total, symmetric scores over equal-length vectors; larger = more similar."""

    HAMMING_SIMILARITY = "hamming"   # n - d_H, on bit vectors
    AND_COUNT = "and"                # popcount(a AND b), on bit vectors
    EUCLIDEAN = "euclidean"          # negated L2 distance, on numeric vectors
    COSINE = "cosine"                # cosine similarity in [-1, 1]


def as_decimal_delta(value) -> Decimal:
    """Normalize a compression rate to an exact Decimal.

    Floats are converted through their shortest repr so that e.g. 3.5 means
    the decimal 3.5; pass a string for full control.
    """
    if isinstance(value, Decimal):
        d = value
    elif isinstance(value, int):
        d = Decimal(value)
    elif isinstance(value, float):
        d = Decimal(repr(value))
    elif isinstance(value, str):
        try:
            d = Decimal(value)
        except InvalidOperation as exc:
            raise ValueError(f"not a decimal compression rate: {value!r}") from exc
    else:
        raise TypeError(f"unsupported delta type {type(value).__name__}")
    return d


@dataclass(frozen=True)
class SketchParams:
    """Scheme selector, compression rate and shapes; fully determines a
    sketcher together with a secret key.

    ``n_out`` defaults to floor(n_in / delta); an explicit value overrides
    the default (used to pin published output shapes).
    """

    scheme: Scheme
    delta: Decimal
    n_in: int
    n_out: int = 0
    quant_bits: int = 8

    def __post_init__(self):
        object.__setattr__(self, "delta", as_decimal_delta(self.delta))
        if not (DELTA_MIN <= self.delta <= DELTA_MAX):
            raise ValueError(f"delta must lie in [{DELTA_MIN}, {DELTA_MAX}]")
        if self.n_in < 1:
            raise ValueError("n_in must be positive")
        if self.n_out == 0:
            object.__setattr__(self, "n_out", int(Decimal(self.n_in) / self.delta))
        if self.n_out < MIN_OUT:
            raise ValueError(f"n_out must be at least {MIN_OUT}")
        if self.n_out > self.n_in:
            raise ValueError("n_out cannot exceed n_in")
        if not (2 <= self.quant_bits <= 16):
            raise ValueError("quant_bits must lie in [2, 16]")

    @property
    def delta_str(self) -> str:
        return str(self.delta)


def derive_positions(key: SecretKey, n_in: int, n_out: int) -> np.ndarray:
    """Keyed uniform sample of ``n_out`` distinct positions in [0, n_in).

    Implemented as a key-seeded partial Fisher-Yates shuffle; the positions
    come out in shuffle order (selection and output ordering are decoupled,
    a separate keyed shuffle orders the sketch).
    """
    if n_out > n_in:
        raise ValueError("cannot sample more positions than exist")
    if n_out < 1:
        raise ValueError("need at least one position")
    return KeyedRandom(key, _TAG_POSITIONS).partial_shuffle(n_in, n_out)


@dataclass(frozen=True)
class IndexPermutation:
    """Keyed bijection on [0, count) for one class of records."""

    class_id: int
    mapping: np.ndarray = field(compare=False)

    def __post_init__(self):
        m = np.asarray(self.mapping, dtype=np.int64)
        if m.ndim != 1 or not np.array_equal(np.sort(m), np.arange(m.size)):
            raise ValueError("mapping must be a bijection on [0, count)")
        m.setflags(write=False)
        object.__setattr__(self, "mapping", m)

    def __len__(self) -> int:
        return int(self.mapping.size)

    def apply(self, i: int) -> int:
        return int(self.mapping[i])

    def inverse(self) -> "IndexPermutation":
        inv = np.empty_like(self.mapping)
        inv[self.mapping] = np.arange(self.mapping.size)
        return IndexPermutation(self.class_id, inv)


def derive_permutation(key: SecretKey, class_id: int, count: int) -> IndexPermutation:
    """Keyed full shuffle of [0, count) for one class id."""
    if count < 1:
        raise ValueError("count must be at least 1")
    if not 0 <= class_id < 2**64:
        raise ValueError("class_id out of range")
    rng = KeyedRandom(key, _TAG_CLASS_PERM, salt=class_id.to_bytes(8, "big"))
    return IndexPermutation(class_id, rng.permutation(count))


class Sketcher:
    """Applies one sketch construction under a fixed (key, params) pair."""

    def __init__(self, key: SecretKey, params: SketchParams):
        self.key = key
        self.params = params
        p = params
        if p.scheme is Scheme.BINARY_SAMPLE:
            self.positions = derive_positions(key, p.n_in, p.n_out)
            self.out_order = KeyedRandom(key, _TAG_OUT_ORDER).permutation(p.n_out)
            # out[i] = x[gather[i]], then XOR with the keyed mask
            self._gather = self.positions[self.out_order]
            mask_bytes = derive_stream(key, _TAG_MASK, (p.n_out + 7) // 8)
            self.mask = BitVector(np.frombuffer(mask_bytes, dtype=np.uint8), p.n_out)
        else:
            nbits = p.n_out * p.n_in
            sign_bytes = derive_stream(key, _TAG_PROJ_SIGN, (nbits + 7) // 8)
            bits = np.unpackbits(np.frombuffer(sign_bytes, dtype=np.uint8), count=nbits)
            signs = bits.reshape(p.n_out, p.n_in).astype(np.float64) * 2.0 - 1.0
            self.matrix = signs / math.sqrt(p.n_out)
            self.half_range = 2.0 * 255.0 * math.sqrt(p.n_in / p.n_out)
            self.step = self.half_range / float(2 ** (p.quant_bits - 1))
            off = np.frombuffer(derive_stream(key, _TAG_OFFSET, 8 * p.n_out), dtype=">u8")
            u01 = (off >> np.uint64(11)).astype(np.float64) * 2.0**-53
            self.offset = (u01 - 0.5) * (self.half_range / 4.0)

    # -- binary sampling ------------------------------------------------

    def sketch_bits(self, x: BitVector) -> BitVector:
        if self.params.scheme is not Scheme.BINARY_SAMPLE:
            raise ValueError("sketcher is not a binary-sample construction")
        if x.nbits != self.params.n_in:
            raise ValueError(f"expected {self.params.n_in} bits, got {x.nbits}")
        bits = x.to_bits()[self._gather]
        out = BitVector.from_bits(bits)
        return out ^ self.mask

    def sketch_bits_rows(self, payloads: np.ndarray) -> np.ndarray:
        """Sketch a (count, ceil(n_in/8)) packed payload matrix.

        Returns a (count, ceil(n_out/8)) packed matrix, canonical rows.
        """
        p = self.params
        if p.scheme is not Scheme.BINARY_SAMPLE:
            raise ValueError("sketcher is not a binary-sample construction")
        if payloads.shape[1] != (p.n_in + 7) // 8:
            raise ValueError("payload byte width does not match n_in")
        out_bytes = (p.n_out + 7) // 8
        mask_row = self.mask.buffer[:out_bytes]
        out = np.empty((payloads.shape[0], out_bytes), dtype=np.uint8)
        # chunk so the unpacked bit matrix stays near 128 MB
        chunk = max(1, (1 << 27) // max(p.n_in, 1))
        for lo in range(0, payloads.shape[0], chunk):
            hi = min(lo + chunk, payloads.shape[0])
            bits = np.unpackbits(payloads[lo:hi], axis=1, count=p.n_in)
            out[lo:hi] = np.packbits(bits[:, self._gather], axis=1)
        out ^= mask_row
        return out

    # -- real projection --------------------------------------------------

    def project(self, x, with_offset: bool = True) -> np.ndarray:
        """Unquantized projection of one record (float64)."""
        vec = self._check_values(np.asarray(x))
        y = self.matrix @ vec.astype(np.float64)
        if with_offset:
            y = y + self.offset
        return y

    def sketch_values(self, x) -> np.ndarray:
        """Sketch one record of n_in unsigned 8-bit values."""
        y = self.project(x, with_offset=True)
        return self._quantize(y[np.newaxis, :])[0]

    def sketch_values_rows(self, rows: np.ndarray) -> np.ndarray:
        p = self.params
        if p.scheme is not Scheme.REAL_PROJECTION:
            raise ValueError("sketcher is not a real-projection construction")
        rows = np.asarray(rows)
        if rows.ndim != 2 or rows.shape[1] != p.n_in:
            raise ValueError(f"expected rows of {p.n_in} values")
        out = np.empty((rows.shape[0], p.n_out), dtype=self._out_dtype())
        chunk = 8192
        for lo in range(0, rows.shape[0], chunk):
            hi = min(lo + chunk, rows.shape[0])
            block = self._check_values_matrix(rows[lo:hi]).astype(np.float64)
            y = block @ self.matrix.T + self.offset
            out[lo:hi] = self._quantize(y)
        return out

    def _check_values(self, vec: np.ndarray) -> np.ndarray:
        p = self.params
        if p.scheme is not Scheme.REAL_PROJECTION:
            raise ValueError("sketcher is not a real-projection construction")
        if vec.ndim != 1 or vec.shape[0] != p.n_in:
            raise ValueError(f"expected {p.n_in} values, got shape {vec.shape}")
        return self._check_values_matrix(vec[np.newaxis, :])[0]

    @staticmethod
    def _check_values_matrix(block: np.ndarray) -> np.ndarray:
        if block.dtype != np.uint8:
            arr = np.asarray(block)
            if not np.issubdtype(arr.dtype, np.integer):
                if not np.all(arr == np.floor(arr)):
                    raise ValueError("payload values must be integers")
                arr = arr.astype(np.int64)
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("payload values must lie in [0, 255]")
            block = arr.astype(np.uint8)
        return block

    def _out_dtype(self):
        return np.uint8 if self.params.quant_bits <= 8 else np.uint16

    def _quantize(self, y: np.ndarray) -> np.ndarray:
        qb = self.params.quant_bits
        mid = 1 << (qb - 1)
        codes = np.rint(y / self.step).astype(np.int64) + mid
        np.clip(codes, 0, (1 << qb) - 1, out=codes)
        return codes.astype(self._out_dtype())

    # -- generic -----------------------------------------------------------

    def sketch(self, x):
        if self.params.scheme is Scheme.BINARY_SAMPLE:
            return self.sketch_bits(x)
        return self.sketch_values(x)


def similarity(measure: SimilarityMeasure, a, b) -> float:
    """Symmetric similarity score; larger means more similar for every measure."""
    if measure in (SimilarityMeasure.HAMMING_SIMILARITY, SimilarityMeasure.AND_COUNT):
        if not isinstance(a, BitVector) or not isinstance(b, BitVector):
            raise TypeError(f"{measure.value} similarity needs bit vectors")
        if measure is SimilarityMeasure.HAMMING_SIMILARITY:
            return float(a.nbits - hamming(a, b))
        return float(and_similarity(a, b))
    if isinstance(a, BitVector) or isinstance(b, BitVector):
        raise TypeError(f"{measure.value} similarity needs numeric vectors")
    va = np.asarray(a, dtype=np.float64)
    vb = np.asarray(b, dtype=np.float64)
    if va.shape != vb.shape or va.ndim != 1:
        raise ValueError(f"length mismatch: {va.shape} vs {vb.shape}")
    if measure is SimilarityMeasure.EUCLIDEAN:
        return -float(np.linalg.norm(va - vb))
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for the zero vector")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))
