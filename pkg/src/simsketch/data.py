"""Dataset containers, synthetic generators, and file formats.

Two on-disk formats are supported:

* the IDX tensor container used by MNIST-family datasets (u8 tensors,
  big-endian dimension headers), and
* the HAI1 record container defined in this package for plaintext and
  protected datasets (see ``write_hai1`` for the byte layout).

All readers reject malformed input by raising :class:`DataFormatError`
with a diagnostic; they never crash on truncated or bit-flipped files.
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

import numpy as np

from .bitvec import BitVector, matrix_from_payloads, vector_from_row
from .keys import SecretKey
from .sketch import Scheme, Sketcher, derive_permutation

MAGIC = b"HAI1"
VERSION = 1

SCHEME_PLAINTEXT_BITS = 0
SCHEME_PLAINTEXT_U8 = 1
SCHEME_BINARY_SAMPLE = 2
SCHEME_REAL_PROJECTION = 3

FLAG_LABELS = 0x01
FLAG_PERMUTED = 0x02

LABEL_ABSENT = 0xFFFF

IDX_MAGIC_IMAGES = 0x00000803
IDX_MAGIC_LABELS = 0x00000801


class DataFormatError(ValueError):
    """A container failed structural validation; message says where."""


class PayloadKind(enum.Enum):
    BITS = "bits"
    U8 = "u8"


_KIND_BY_SCHEME = {
    SCHEME_PLAINTEXT_BITS: PayloadKind.BITS,
    SCHEME_PLAINTEXT_U8: PayloadKind.U8,
    SCHEME_BINARY_SAMPLE: PayloadKind.BITS,
    SCHEME_REAL_PROJECTION: PayloadKind.U8,
}


@dataclass(frozen=True)
class DatasetMeta:
    """Record-level layout: payload kind, shapes, and protection state.

    ``n_out`` is 0 and ``delta`` is "0" for plaintext datasets; protected
    datasets carry the sketch output length and the exact decimal rate used.
    """

    scheme_id: int
    delta: str
    n_in: int
    n_out: int
    record_len_bytes: int
    permuted: bool = False

    def __post_init__(self):
        if self.scheme_id not in _KIND_BY_SCHEME:
            raise DataFormatError(f"unknown scheme id {self.scheme_id}")
        if self.n_in < 1:
            raise DataFormatError("n_in must be positive")
        plaintext = self.scheme_id in (SCHEME_PLAINTEXT_BITS, SCHEME_PLAINTEXT_U8)
        if plaintext:
            if self.n_out != 0:
                raise DataFormatError("plaintext datasets carry n_out = 0")
            if self.delta != "0":
                raise DataFormatError('plaintext datasets carry delta "0"')
        else:
            if self.n_out < 1:
                raise DataFormatError("protected datasets need n_out >= 1")
            try:
                if Decimal(self.delta) <= 0:
                    raise DataFormatError("delta must be positive")
            except InvalidOperation as exc:
                raise DataFormatError(f"bad delta string {self.delta!r}") from exc
        expect = self._expected_record_len()
        if self.record_len_bytes != expect:
            raise DataFormatError(
                f"record_len_bytes {self.record_len_bytes} inconsistent with "
                f"scheme {self.scheme_id} shapes (expected {expect})"
            )

    def _expected_record_len(self) -> int:
        if self.scheme_id == SCHEME_PLAINTEXT_BITS:
            return (self.n_in + 7) // 8
        if self.scheme_id == SCHEME_PLAINTEXT_U8:
            return self.n_in
        if self.scheme_id == SCHEME_BINARY_SAMPLE:
            return (self.n_out + 7) // 8
        # quantized values may be 1 or 2 bytes wide
        if self.record_len_bytes == 2 * self.n_out:
            return 2 * self.n_out
        return self.n_out

    @property
    def payload_kind(self) -> PayloadKind:
        return _KIND_BY_SCHEME[self.scheme_id]

    @property
    def is_plaintext(self) -> bool:
        return self.scheme_id in (SCHEME_PLAINTEXT_BITS, SCHEME_PLAINTEXT_U8)

    @property
    def nbits(self) -> int:
        """Logical bit length of a record, for bit payloads."""
        if self.payload_kind is not PayloadKind.BITS:
            raise ValueError("not a bit-payload dataset")
        return self.n_in if self.scheme_id == SCHEME_PLAINTEXT_BITS else self.n_out

    @property
    def n_values(self) -> int:
        """Values per record, for u8-vector payloads."""
        if self.payload_kind is not PayloadKind.U8:
            raise ValueError("not a value-payload dataset")
        return self.n_in if self.scheme_id == SCHEME_PLAINTEXT_U8 else self.n_out

    @property
    def value_itemsize(self) -> int:
        return self.record_len_bytes // self.n_values


def plaintext_bits_meta(nbits: int) -> DatasetMeta:
    return DatasetMeta(SCHEME_PLAINTEXT_BITS, "0", nbits, 0, (nbits + 7) // 8)


def plaintext_u8_meta(n_values: int) -> DatasetMeta:
    return DatasetMeta(SCHEME_PLAINTEXT_U8, "0", n_values, 0, n_values)


class IndexedDataset:
    """Ordered records of (index, optional label, fixed-width payload)."""

    def __init__(self, meta: DatasetMeta, indexes, labels, payloads: np.ndarray):
        indexes = np.asarray(indexes, dtype=np.int64)
        payloads = np.ascontiguousarray(payloads, dtype=np.uint8)
        if payloads.ndim != 2 or payloads.shape[1] != meta.record_len_bytes:
            raise DataFormatError(
                f"payload matrix must be (count, {meta.record_len_bytes})"
            )
        count = payloads.shape[0]
        if indexes.ndim != 1 or indexes.size != count:
            raise DataFormatError("one index per record required")
        if indexes.size and (indexes.min() < 0 or indexes.max() >= 2**32):
            raise DataFormatError("indexes must fit in u32")
        if np.unique(indexes).size != indexes.size:
            raise DataFormatError("duplicate record index")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.ndim != 1 or labels.size != count:
                raise DataFormatError("one label per record required")
            if labels.size and (labels.min() < 0 or labels.max() >= LABEL_ABSENT):
                raise DataFormatError("labels must lie in [0, 0xFFFE]")
        if meta.payload_kind is PayloadKind.BITS:
            nbits = meta.nbits
            rem = nbits % 8
            if rem and count and np.any(payloads[:, -1] & (0xFF >> rem)):
                raise DataFormatError("nonzero pad bits in bit payloads")
        self.meta = meta
        self.indexes = indexes
        self.labels = labels
        self.payloads = payloads

    def __len__(self) -> int:
        return int(self.payloads.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexedDataset):
            return NotImplemented
        same_labels = (
            self.labels is None
            and other.labels is None
            or self.labels is not None
            and other.labels is not None
            and np.array_equal(self.labels, other.labels)
        )
        return (
            self.meta == other.meta
            and np.array_equal(self.indexes, other.indexes)
            and same_labels
            and np.array_equal(self.payloads, other.payloads)
        )

    # -- payload views ----------------------------------------------------

    def bit_matrix(self) -> np.ndarray:
        """Kernel-width packed bit matrix (see bitvec batch helpers)."""
        return matrix_from_payloads(self.payloads, self.meta.nbits)

    def vector(self, row: int) -> BitVector:
        return vector_from_row(self.bit_matrix(), row, self.meta.nbits)

    def values(self) -> np.ndarray:
        """(count, n_values) matrix of quantized or raw u8 values."""
        n = self.meta.n_values
        if self.meta.value_itemsize == 1:
            return self.payloads
        return self.payloads.view(">u2").reshape(len(self), n)

    def class_members(self) -> dict:
        """Class id -> ascending record index values; needs labels."""
        if self.labels is None:
            raise ValueError("dataset has no labels")
        out = {}
        for cls in np.unique(self.labels):
            members = np.sort(self.indexes[self.labels == cls])
            out[int(cls)] = members
        return out

    def payload_bytes_total(self) -> int:
        return int(self.payloads.size)


# -- synthetic generators -------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    """Planted-prototype Bernoulli model for bit-record corpora."""

    seed: int
    n_train: int = 2_000
    n_val: int = 200
    n_feat: int = 49_955
    classes: int = 2
    p_base: float = 0.5
    p_flip: float = 0.1

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("classes must be at least 2")
        # p_flip = 0 gives prototype-exact records (useful as a fixture)
        if not 0.0 <= self.p_flip < 0.5:
            raise ValueError("p_flip must lie in [0, 0.5)")
        if not 0.0 < self.p_base < 1.0:
            raise ValueError("p_base must lie in (0, 1)")
        if self.n_train < 1 or self.n_val < 0 or self.n_feat < 1:
            raise ValueError("shape parameters must be positive")


def _sample_split(rng, prototypes, labels, n_feat, p_flip):
    count = labels.size
    payloads = np.empty((count, (n_feat + 7) // 8), dtype=np.uint8)
    chunk = max(1, (1 << 25) // max(n_feat, 1))
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        flips = rng.random((hi - lo, n_feat), dtype=np.float32) < p_flip
        bits = prototypes[labels[lo:hi]] ^ flips
        payloads[lo:hi] = np.packbits(bits, axis=1)
    return payloads


def gen_synthetic_cyber(cfg: SynthConfig):
    """Two-split corpus of planted-class bit records.

    Each class gets a hidden prototype with independent Bernoulli(p_base)
    bits; every record is its class prototype with independent per-bit flips
    at rate p_flip. Expected within-class Hamming distance is therefore
    2*p_flip*(1-p_flip)*n_feat. Labels cycle 0,1,...,classes-1 by position.
    """
    rng = np.random.default_rng(cfg.seed)
    prototypes = rng.random((cfg.classes, cfg.n_feat), dtype=np.float32) < cfg.p_base
    meta = plaintext_bits_meta(cfg.n_feat)

    def split(count):
        labels = np.arange(count, dtype=np.int64) % cfg.classes
        payloads = _sample_split(rng, prototypes, labels, cfg.n_feat, cfg.p_flip)
        return IndexedDataset(meta, np.arange(count), labels, payloads)

    return split(cfg.n_train), split(cfg.n_val)


def _smooth_field(rng, side: int, passes: int = 5) -> np.ndarray:
    """Zero-mean unit-variance random field with spatial correlation."""
    f = rng.normal(size=(side, side))
    for _ in range(passes):
        f = (
            f
            + np.roll(f, 1, axis=0)
            + np.roll(f, -1, axis=0)
            + np.roll(f, 1, axis=1)
            + np.roll(f, -1, axis=1)
        ) / 5.0
    return (f - f.mean()) / f.std()


def gen_synthetic_images(
    seed: int,
    n_train: int = 60_000,
    n_val: int = 10_000,
    classes: int = 10,
    side: int = 28,
    noise: float = 16.0,
    max_shift: int = 2,
):
    """Grey-level image stand-in corpus shaped like the 28x28 ten-class
    benchmarks: bright class-specific objects on a dark background.

    Each class template is a smoothed random field thresholded into an object
    mask with a graded intensity profile. Records vary by brightness scale,
    small spatial shift and pixel noise, so pairwise L2 distances span a wide
    range (small within a class, large across classes) the way photographic
    corpora do.
    """
    rng = np.random.default_rng(seed)
    n_feat = side * side
    templates = np.empty((classes, side, side))
    for c in range(classes):
        field = _smooth_field(rng, side)
        # object covers roughly 30-60% of the frame, area varies by class
        cut = np.quantile(field, 0.40 + 0.05 * (c % 5))
        mask = field > cut
        lo, hi = field.min(), field.max()
        profile = (field - lo) / (hi - lo)
        templates[c] = mask * (90.0 + 165.0 * profile)
    meta = plaintext_u8_meta(n_feat)

    def split(count):
        labels = rng.integers(0, classes, size=count).astype(np.int64)
        rows = np.empty((count, n_feat), dtype=np.uint8)
        chunk = 4096
        for lo_i in range(0, count, chunk):
            hi_i = min(lo_i + chunk, count)
            block = templates[labels[lo_i:hi_i]]
            scale = rng.uniform(0.45, 1.0, size=hi_i - lo_i)
            sx = rng.integers(-max_shift, max_shift + 1, size=hi_i - lo_i)
            sy = rng.integers(-max_shift, max_shift + 1, size=hi_i - lo_i)
            for i in range(hi_i - lo_i):
                img = scale[i] * np.roll(block[i], (sx[i], sy[i]), axis=(0, 1))
                rows[lo_i + i] = np.clip(
                    img + rng.normal(0.0, noise, size=img.shape), 0, 255
                ).reshape(-1)
        return IndexedDataset(meta, np.arange(count), labels, rows)

    return split(n_train), split(n_val)


# -- IDX tensor files ------------------------------------------------------


def read_idx(images_path, labels_path=None) -> IndexedDataset:
    """Read an IDX u8 image tensor, optionally merging an IDX label file."""
    raw = _read_file(images_path)
    if len(raw) < 16:
        raise DataFormatError(f"{images_path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", raw[:16])
    if magic != IDX_MAGIC_IMAGES:
        raise DataFormatError(f"{images_path}: bad IDX magic {magic:#010x}")
    need = 16 + count * rows * cols
    if len(raw) != need:
        raise DataFormatError(
            f"{images_path}: expected {need} bytes for {count} images, got {len(raw)}"
        )
    payloads = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(
        count, rows * cols
    )
    labels = None
    if labels_path is not None:
        lraw = _read_file(labels_path)
        if len(lraw) < 8:
            raise DataFormatError(f"{labels_path}: truncated IDX header")
        lmagic, lcount = struct.unpack(">II", lraw[:8])
        if lmagic != IDX_MAGIC_LABELS:
            raise DataFormatError(f"{labels_path}: bad IDX magic {lmagic:#010x}")
        if lcount != count:
            raise DataFormatError(
                f"label count {lcount} does not match image count {count}"
            )
        if len(lraw) != 8 + count:
            raise DataFormatError(f"{labels_path}: truncated IDX label data")
        labels = np.frombuffer(lraw, dtype=np.uint8, offset=8).astype(np.int64)
    meta = plaintext_u8_meta(rows * cols)
    return IndexedDataset(meta, np.arange(count), labels, payloads.copy())


def write_idx(dataset: IndexedDataset, images_path, labels_path=None, shape=None):
    """Write a u8-vector dataset as IDX image (and optional label) files."""
    if dataset.meta.scheme_id != SCHEME_PLAINTEXT_U8:
        raise ValueError("IDX export is defined for plaintext u8 datasets")
    n = dataset.meta.n_values
    if shape is None:
        side = int(round(n**0.5))
        if side * side != n:
            raise ValueError("record length is not square; pass shape=(rows, cols)")
        shape = (side, side)
    rows, cols = shape
    if rows * cols != n:
        raise ValueError(f"shape {shape} does not cover {n} values")
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_MAGIC_IMAGES, len(dataset), rows, cols))
        fh.write(dataset.payloads.tobytes())
    if labels_path is not None:
        if dataset.labels is None:
            raise ValueError("dataset has no labels to export")
        with open(labels_path, "wb") as fh:
            fh.write(struct.pack(">II", IDX_MAGIC_LABELS, len(dataset)))
            fh.write(dataset.labels.astype(np.uint8).tobytes())


def _read_file(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except FileNotFoundError as exc:
        raise DataFormatError(f"{path}: no such file") from exc


# -- HAI1 record container --------------------------------------------------
#
# Layout, all integers big-endian:
#   magic "HAI1" | version u16 | scheme u8 | flags u8 |
#   delta u16 length + ASCII decimal | n_in u32 | n_out u32 |
#   record_len_bytes u32 | count u32 |
#   count records of: index u32 | label u16 (0xFFFF = absent) | payload.
# flags: bit0 = labels present; bit1 = record order keyed-permuted per class.


def write_hai1(dataset: IndexedDataset, path, strip_labels: bool = False):
    meta = dataset.meta
    labels = None if strip_labels else dataset.labels
    flags = (FLAG_LABELS if labels is not None else 0) | (
        FLAG_PERMUTED if meta.permuted else 0
    )
    delta_ascii = meta.delta.encode("ascii")
    head = b"".join(
        (
            MAGIC,
            struct.pack(">HBB", VERSION, meta.scheme_id, flags),
            struct.pack(">H", len(delta_ascii)),
            delta_ascii,
            struct.pack(
                ">IIII", meta.n_in, meta.n_out, meta.record_len_bytes, len(dataset)
            ),
        )
    )
    rec = np.zeros(len(dataset), dtype=_record_dtype(meta.record_len_bytes))
    rec["index"] = dataset.indexes
    rec["label"] = LABEL_ABSENT if labels is None else labels
    rec["payload"] = dataset.payloads
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(rec.tobytes())


def read_hai1(path) -> IndexedDataset:
    raw = _read_file(path)
    if len(raw) < 8:
        raise DataFormatError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise DataFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, scheme_id, flags = struct.unpack(">HBB", raw[4:8])
    if version != VERSION:
        raise DataFormatError(f"{path}: unsupported version {version}")
    if flags & ~(FLAG_LABELS | FLAG_PERMUTED):
        raise DataFormatError(f"{path}: unknown flag bits {flags:#04x}")
    if len(raw) < 10:
        raise DataFormatError(f"{path}: truncated delta length")
    (dlen,) = struct.unpack(">H", raw[8:10])
    body = 10 + dlen
    if len(raw) < body + 16:
        raise DataFormatError(f"{path}: truncated header fields")
    try:
        delta = raw[10:body].decode("ascii")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: delta is not ASCII") from exc
    n_in, n_out, record_len, count = struct.unpack(">IIII", raw[body : body + 16])
    meta = DatasetMeta(
        scheme_id, delta, n_in, n_out, record_len, permuted=bool(flags & FLAG_PERMUTED)
    )
    rec_dtype = _record_dtype(record_len)
    need = body + 16 + count * rec_dtype.itemsize
    if len(raw) != need:
        raise DataFormatError(
            f"{path}: expected {need} bytes for {count} records, got {len(raw)}"
        )
    rec = np.frombuffer(raw, dtype=rec_dtype, offset=body + 16)
    indexes = rec["index"].astype(np.int64)
    labeled = bool(flags & FLAG_LABELS)
    raw_labels = rec["label"].astype(np.int64)
    if labeled:
        if np.any(raw_labels == LABEL_ABSENT):
            raise DataFormatError(f"{path}: absent label in labeled container")
        labels = raw_labels
    else:
        if np.any(raw_labels != LABEL_ABSENT):
            raise DataFormatError(f"{path}: label bytes set in unlabeled container")
        labels = None
    payloads = rec["payload"].reshape(count, record_len).copy()
    return IndexedDataset(meta, indexes, labels, payloads)


def _record_dtype(record_len: int) -> np.dtype:
    return np.dtype([("index", ">u4"), ("label", ">u2"), ("payload", "u1", (record_len,))])


# -- protection ---------------------------------------------------------------


def protect_dataset(
    dataset: IndexedDataset,
    sketcher: Sketcher,
    permute_classes: bool,
    key: SecretKey,
) -> IndexedDataset:
    """Sketch every payload; optionally permute record contents per class.

    The permutation moves payload content between positions of the same
    class: the record at in-class rank i (by ascending index value) lands at
    rank perm.apply(i). Index and label columns stay positional, so labels
    remain correct and the index column is the transposition handle.
    """
    meta = dataset.meta
    p = sketcher.params
    if not meta.is_plaintext:
        raise ValueError("dataset is already protected")
    if p.scheme is Scheme.BINARY_SAMPLE:
        if meta.payload_kind is not PayloadKind.BITS:
            raise ValueError("binary sampling needs bit payloads")
        if meta.n_in != p.n_in:
            raise ValueError(f"sketcher expects {p.n_in} bits, dataset has {meta.n_in}")
        sketched = sketcher.sketch_bits_rows(dataset.payloads)
        record_len = (p.n_out + 7) // 8
        scheme_id = SCHEME_BINARY_SAMPLE
    else:
        if meta.payload_kind is not PayloadKind.U8:
            raise ValueError("real projection needs u8-vector payloads")
        if meta.n_in != p.n_in:
            raise ValueError(
                f"sketcher expects {p.n_in} values, dataset has {meta.n_in}"
            )
        codes = sketcher.sketch_values_rows(dataset.payloads)
        if codes.dtype == np.uint8:
            sketched = codes
        else:
            sketched = codes.astype(">u2").view(np.uint8).reshape(len(dataset), -1)
        record_len = sketched.shape[1]
        scheme_id = SCHEME_REAL_PROJECTION

    if permute_classes:
        if dataset.labels is None:
            raise ValueError("per-class permutation needs labels")
        sketched = sketched.copy()
        order = np.argsort(dataset.indexes, kind="stable")
        for cls in np.unique(dataset.labels):
            ps = order[dataset.labels[order] == cls]  # rows, ascending index
            perm = derive_permutation(key, int(cls), ps.size)
            sketched[ps[perm.mapping]] = sketched[ps].copy()

    out_meta = DatasetMeta(
        scheme_id,
        p.delta_str,
        p.n_in,
        p.n_out,
        record_len,
        permuted=permute_classes,
    )
    return IndexedDataset(out_meta, dataset.indexes, dataset.labels, sketched)


def class_permutations(key: SecretKey, dataset: IndexedDataset) -> dict:
    """Re-derive the per-class permutations used by protect_dataset."""
    return {
        cls: derive_permutation(key, cls, members.size)
        for cls, members in dataset.class_members().items()
    }


def protection_index_map(dataset: IndexedDataset, key: SecretKey) -> np.ndarray:
    """src[p] = row position whose plaintext content landed at row p."""
    src = np.arange(len(dataset), dtype=np.int64)
    if dataset.labels is None:
        return src
    order = np.argsort(dataset.indexes, kind="stable")
    for cls in np.unique(dataset.labels):
        ps = order[dataset.labels[order] == cls]
        perm = derive_permutation(key, int(cls), ps.size)
        src[ps[perm.mapping]] = ps
    return src


def export_record_files(dataset: IndexedDataset, directory, prefix: str) -> list:
    """One payload file per record, named `{prefix}-{index}-{label}`."""
    if dataset.labels is None:
        raise ValueError("record export needs labels for the name suffix")
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i in range(len(dataset)):
        name = f"{prefix}-{int(dataset.indexes[i]):03d}-{int(dataset.labels[i])}"
        path = os.path.join(directory, name)
        with open(path, "wb") as fh:
            fh.write(dataset.payloads[i].tobytes())
        paths.append(path)
    return paths
