"""Secret keys and deterministic keyed randomness.

Every derived object in this package (sample positions, output order, masks,
projection matrices, per-class permutations) is a pure function of a 256-bit
secret key plus a short domain tag. The stream construction is BLAKE2b in
keyed mode: block ``i`` of a stream is

    BLAKE2b-512(counter_be64(i), key=K, person=domain_tag, salt=salt)

so distinct domain tags (and salts) give independent-looking streams and any
single key-bit flip avalanches through the whole output.
"""

from __future__ import annotations

import hashlib
import os
import stat
import warnings
from dataclasses import dataclass

import numpy as np

KEY_BYTES = 32
_BLOCK = 64
MAX_TAG_BYTES = 16  # BLAKE2b personalization field limit


@dataclass(frozen=True)
class SecretKey:
    """A 256-bit opaque secret. The all-zero key is rejected."""

    data: bytes

    def __post_init__(self):
        if not isinstance(self.data, bytes) or len(self.data) != KEY_BYTES:
            raise ValueError(f"secret key must be exactly {KEY_BYTES} bytes")
        if self.data == bytes(KEY_BYTES):
            raise ValueError("all-zero secret key rejected")

    @classmethod
    def generate(cls) -> "SecretKey":
        while True:
            raw = os.urandom(KEY_BYTES)
            if raw != bytes(KEY_BYTES):
                return cls(raw)

    @classmethod
    def from_hex(cls, text: str) -> "SecretKey":
        text = text.strip()
        if len(text) != 2 * KEY_BYTES:
            raise ValueError(f"expected {2 * KEY_BYTES} hex characters")
        return cls(bytes.fromhex(text))

    def to_hex(self) -> str:
        return self.data.hex()

    def __repr__(self) -> str:  # never leak key material in logs
        return "SecretKey(****)"


def _check_tag(domain_tag: bytes) -> bytes:
    if isinstance(domain_tag, str):
        domain_tag = domain_tag.encode("ascii")
    if not domain_tag:
        raise ValueError("domain_tag must be non-empty")
    if len(domain_tag) > MAX_TAG_BYTES:
        raise ValueError(f"domain_tag longer than {MAX_TAG_BYTES} bytes")
    return domain_tag


def _block(key: SecretKey, tag: bytes, salt: bytes, counter: int) -> bytes:
    return hashlib.blake2b(
        counter.to_bytes(8, "big"),
        digest_size=_BLOCK,
        key=key.data,
        person=tag,
        salt=salt,
    ).digest()


def derive_stream(key: SecretKey, domain_tag: bytes | str, length: int,
                  salt: bytes = b"") -> bytes:
    """Deterministic keyed byte stream for one (key, domain_tag, salt) triple."""
    tag = _check_tag(domain_tag)
    if length < 1:
        raise ValueError("stream length must be at least 1")
    if len(salt) > 16:
        raise ValueError("salt longer than 16 bytes")
    nblocks = (length + _BLOCK - 1) // _BLOCK
    out = b"".join(_block(key, tag, salt, i) for i in range(nblocks))
    return out[:length]


class KeyedRandom:
    """Lazy reader over a keyed stream with unbiased integer draws."""

    def __init__(self, key: SecretKey, domain_tag: bytes | str, salt: bytes = b""):
        self._key = key
        self._tag = _check_tag(domain_tag)
        self._salt = salt
        self._counter = 0
        self._buf = b""
        self._pos = 0

    def take(self, n: int) -> bytes:
        out = bytearray()
        while n > 0:
            if self._pos >= len(self._buf):
                self._buf = _block(self._key, self._tag, self._salt, self._counter)
                self._counter += 1
                self._pos = 0
            chunk = self._buf[self._pos : self._pos + n]
            out += chunk
            self._pos += len(chunk)
            n -= len(chunk)
        return bytes(out)

    def randbelow(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection sampling."""
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        if n == 1:
            return 0
        nbits = (n - 1).bit_length()
        nbytes = (nbits + 7) // 8
        shift = 8 * nbytes - nbits
        while True:
            v = int.from_bytes(self.take(nbytes), "big") >> shift
            if v < n:
                return v

    def partial_shuffle(self, n: int, m: int) -> np.ndarray:
        """First ``m`` entries of a keyed Fisher-Yates shuffle of range(n)."""
        if m > n:
            raise ValueError("cannot draw more positions than exist")
        arr = np.arange(n, dtype=np.int64)
        for i in range(m):
            j = i + self.randbelow(n - i)
            arr[i], arr[j] = arr[j], arr[i]
        return arr[:m].copy()

    def permutation(self, n: int) -> np.ndarray:
        return self.partial_shuffle(n, n)


# -- key files ---------------------------------------------------------
#
# On-disk format: 64 lowercase hex characters followed by a newline. The
# file should not be readable by group or others; loading a laxer file only
# warns so shared test fixtures stay usable.

def save_key_file(key: SecretKey, path: str, force: bool = False) -> None:
    if os.path.exists(path) and not force:
        raise FileExistsError(f"{path} exists (use force to overwrite)")
    if os.path.exists(path):
        os.chmod(path, stat.S_IRUSR | stat.S_IWUSR)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(key.to_hex() + "\n")
    os.chmod(path, stat.S_IRUSR)


def load_key_file(path: str) -> SecretKey:
    mode = stat.S_IMODE(os.stat(path).st_mode)
    if mode & 0o077:
        warnings.warn(
            f"key file {path} is readable by group/others (mode {oct(mode)}); "
            "expected owner-read-only",
            stacklevel=2,
        )
    with open(path, "r", encoding="ascii") as fh:
        content = fh.read()
    if len(content) != 2 * KEY_BYTES + 1 or not content.endswith("\n"):
        raise ValueError("key file must hold 64 hex characters plus newline")
    return SecretKey.from_hex(content)
