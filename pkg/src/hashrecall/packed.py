"""Bit-packed binary code matrices and Hamming distance.

A code of d bits occupies ceil(d/64) little-endian u64 words per row.  Bit j
of a row lives in word j // 64 at bit position j % 64 (least significant bit
first); bit value 1 encodes a +1 code entry, 0 encodes -1.  Pad bits at
indices >= d are always zero, so XOR + popcount over whole words gives the
exact Hamming distance.

Packed-code file layout (little-endian):

    offset  size  field
    0       4     magic "COSB" (0x43 0x4F 0x53 0x42)
    4       1     format version, currently 1
    5       3     zero padding (u8 + u16)
    8       8     u64 row count
    16      8     u64 code length d in bits
    24      ...   count rows of ceil(d/64) u64 words
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

CODES_MAGIC = b"COSB"
CODES_VERSION = 1
_HEADER = struct.Struct("<4sBBHQQ")


def words_per_row(bits: int) -> int:
    return (bits + 63) // 64


def _pad_mask(bits: int) -> np.uint64:
    """Mask of valid bit positions within the last word of a row."""
    used = bits - 64 * (words_per_row(bits) - 1)
    if used == 64:
        return np.uint64(0xFFFFFFFFFFFFFFFF)
    return np.uint64((1 << used) - 1)


@dataclass(frozen=True, eq=False)
class PackedCodeMatrix:
    """Bit-packed +-1 codes: one row per item, bits LSB-first within u64 words."""

    words: np.ndarray
    bits: int

    def __post_init__(self):
        arr = np.ascontiguousarray(self.words, dtype=np.uint64)
        if arr.ndim != 2:
            raise ValueError("packed words must be 2-D")
        if self.bits <= 0:
            raise ValueError("bits must be positive")
        if arr.shape[1] != words_per_row(self.bits):
            raise ValueError(
                f"row has {arr.shape[1]} words, {self.bits} bits needs "
                f"{words_per_row(self.bits)}"
            )
        if arr.shape[0] > 0 and (arr[:, -1] & ~_pad_mask(self.bits)).any():
            raise ValueError("pad bits beyond the code length must be zero")
        object.__setattr__(self, "words", arr)

    @property
    def count(self) -> int:
        return self.words.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PackedCodeMatrix):
            return NotImplemented
        return self.bits == other.bits and bool((self.words == other.words).all())


def pack_bits(bits_matrix: np.ndarray) -> PackedCodeMatrix:
    """Pack a (count, d) boolean/0-1 matrix; True/1 means code value +1."""
    b = np.asarray(bits_matrix)
    if b.ndim != 2:
        raise ValueError("bit matrix must be 2-D")
    count, d = b.shape
    padded = words_per_row(d) * 64
    buf = np.zeros((count, padded), dtype=np.uint8)
    buf[:, :d] = b.astype(np.uint8)
    packed = np.packbits(buf, axis=1, bitorder="little")
    words = packed.view("<u8").reshape(count, words_per_row(d)).astype(np.uint64)
    return PackedCodeMatrix(words=words, bits=d)


def unpack_bits(codes: PackedCodeMatrix) -> np.ndarray:
    """Inverse of pack_bits: (count, d) uint8 matrix of 0/1 bit values."""
    raw = codes.words.astype("<u8").view(np.uint8).reshape(codes.count, -1)
    bits = np.unpackbits(raw, axis=1, bitorder="little")
    return bits[:, : codes.bits]


def pack_signs(signs: np.ndarray) -> PackedCodeMatrix:
    """Pack a +-1 matrix (positive entries become bit 1)."""
    return pack_bits(np.asarray(signs) > 0)


def unpack_signs(codes: PackedCodeMatrix) -> np.ndarray:
    """(count, d) int8 matrix with entries in {-1, +1}."""
    return (unpack_bits(codes).astype(np.int8) * 2) - 1


def hamming_distance(a: np.ndarray, b: np.ndarray) -> int:
    """Number of differing bits between two packed rows of equal word length."""
    a = np.asarray(a, dtype=np.uint64).ravel()
    b = np.asarray(b, dtype=np.uint64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]} words")
    return int(np.bitwise_count(a ^ b).sum())


def hamming_to_all(codes: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Hamming distance from one packed query row to every row of a word matrix."""
    q = np.asarray(query, dtype=np.uint64).reshape(1, -1)
    if codes.shape[1] != q.shape[1]:
        raise ValueError(f"length mismatch: {codes.shape[1]} vs {q.shape[1]} words")
    return np.bitwise_count(codes ^ q).sum(axis=1).astype(np.int64)


def write_packed_codes(codes: PackedCodeMatrix, path) -> None:
    header = _HEADER.pack(CODES_MAGIC, CODES_VERSION, 0, 0, codes.count, codes.bits)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(codes.words, dtype="<u8").tobytes())


def read_packed_codes(path) -> PackedCodeMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError(f"truncated header: {len(raw)} bytes, need {_HEADER.size}")
    magic, version, _z1, _z2, count, bits = _HEADER.unpack_from(raw)
    if magic != CODES_MAGIC:
        raise FormatError(f"bad magic: {magic!r}")
    if version != CODES_VERSION:
        raise FormatError(f"version mismatch: {version}")
    expected = count * words_per_row(bits) * 8
    payload = raw[_HEADER.size:]
    if len(payload) < expected:
        raise FormatError(
            f"truncated payload: {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise FormatError(f"trailing bytes: {len(payload) - expected}")
    words = (
        np.frombuffer(payload, dtype="<u8")
        .reshape(count, words_per_row(bits))
        .astype(np.uint64)
    )
    try:
        return PackedCodeMatrix(words=words, bits=bits)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
