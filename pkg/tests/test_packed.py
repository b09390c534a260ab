"""Bit packing, the packed-code file format, and Hamming distance."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hashrecall import (
    FormatError,
    PackedCodeMatrix,
    hamming_distance,
    hamming_to_all,
    pack_bits,
    pack_signs,
    read_packed_codes,
    unpack_bits,
    unpack_signs,
    write_packed_codes,
)


def bit_loop_hamming(a_bits: np.ndarray, b_bits: np.ndarray) -> int:
    """Oracle: count differing positions one bit at a time."""
    assert len(a_bits) == len(b_bits)
    return sum(1 for x, y in zip(a_bits, b_bits) if x != y)


class TestPacking:
    def test_low_nibble_example(self):
        """Signs (+1, -1, -1, +1) pack LSB-first into word 0x9."""
        codes = pack_signs(np.array([[1, -1, -1, 1]]))
        assert codes.bits == 4
        assert codes.words.shape == (1, 1)
        assert codes.words[0, 0] == 0x9

    def test_all_negative_rows_are_zero_words(self):
        codes = pack_signs(-np.ones((3, 130)))
        assert codes.words.shape == (3, 3)
        assert (codes.words == 0).all()

    def test_sign_zero_is_negative(self):
        codes = pack_signs(np.array([[0.0, 0.3, -0.2]]))
        assert unpack_bits(codes).tolist() == [[0, 1, 0]]

    def test_pack_matches_per_bit_loop(self):
        rng = np.random.default_rng(5)
        bits = rng.integers(0, 2, size=(20, 77), dtype=np.uint8)
        codes = pack_bits(bits)
        for i in range(20):
            for j in range(77):
                word = int(codes.words[i, j // 64])
                assert ((word >> (j % 64)) & 1) == bits[i, j]

    def test_pad_bits_zero(self):
        rng = np.random.default_rng(6)
        codes = pack_bits(rng.integers(0, 2, size=(8, 70)))
        assert (codes.words[:, -1] >> np.uint64(6) == 0).all()

    def test_nonzero_pad_rejected(self):
        with pytest.raises(ValueError, match="pad bits"):
            PackedCodeMatrix(words=np.array([[1 << 5]], dtype=np.uint64), bits=3)

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=1, max_value=200),
        st.integers(min_value=0, max_value=2**32 - 1),
    )
    def test_unpack_pack_identity(self, rows, bits, seed):
        rng = np.random.default_rng(seed)
        matrix = rng.integers(0, 2, size=(rows, bits), dtype=np.uint8)
        assert (unpack_bits(pack_bits(matrix)) == matrix).all()

    def test_signs_roundtrip(self):
        rng = np.random.default_rng(7)
        signs = rng.choice([-1, 1], size=(9, 100)).astype(np.int8)
        assert (unpack_signs(pack_signs(signs)) == signs).all()


class TestCodesFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        codes = pack_bits(rng.integers(0, 2, size=(12, 128)))
        path = tmp_path / "c.cosb"
        write_packed_codes(codes, path)
        raw = path.read_bytes()
        assert raw[:4] == b"COSB"
        assert len(raw) == 24 + 12 * 2 * 8
        assert read_packed_codes(path) == codes

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.cosb"
        path.write_bytes(b"XXSB" + bytes(20))
        with pytest.raises(FormatError, match="bad magic"):
            read_packed_codes(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "c.cosb"
        path.write_bytes(struct.pack("<4sBBHQQ", b"COSB", 7, 0, 0, 0, 1))
        with pytest.raises(FormatError, match="version mismatch"):
            read_packed_codes(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "c.cosb"
        path.write_bytes(struct.pack("<4sBBHQQ", b"COSB", 1, 0, 0, 2, 64) + bytes(8))
        with pytest.raises(FormatError, match="truncated payload"):
            read_packed_codes(path)

    def test_trailing(self, tmp_path):
        path = tmp_path / "c.cosb"
        path.write_bytes(struct.pack("<4sBBHQQ", b"COSB", 1, 0, 0, 1, 64) + bytes(8) + b"zz")
        with pytest.raises(FormatError, match="trailing bytes"):
            read_packed_codes(path)

    def test_dirty_pad_bits_rejected(self, tmp_path):
        path = tmp_path / "c.cosb"
        payload = struct.pack("<Q", 1 << 40)
        path.write_bytes(struct.pack("<4sBBHQQ", b"COSB", 1, 0, 0, 1, 32) + payload)
        with pytest.raises(FormatError, match="pad bits"):
            read_packed_codes(path)


class TestHamming:
    def test_identical_is_zero(self):
        rng = np.random.default_rng(9)
        codes = pack_bits(rng.integers(0, 2, size=(1, 128)))
        assert hamming_distance(codes.words[0], codes.words[0]) == 0

    def test_complementary_128(self):
        bits = np.random.default_rng(10).integers(0, 2, size=(1, 128), dtype=np.uint8)
        a = pack_bits(bits)
        b = pack_bits(1 - bits)
        assert hamming_distance(a.words[0], b.words[0]) == 128

    def test_matches_bit_loop_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            d = int(rng.integers(1, 200))
            x = rng.integers(0, 2, size=(1, d), dtype=np.uint8)
            y = rng.integers(0, 2, size=(1, d), dtype=np.uint8)
            expected = bit_loop_hamming(x[0], y[0])
            assert hamming_distance(pack_bits(x).words[0], pack_bits(y).words[0]) == expected

    def test_gram_identity(self):
        """hamming(a, b) == (d - dot(signs_a, signs_b)) / 2 exactly."""
        rng = np.random.default_rng(12)
        signs = rng.choice([-1, 1], size=(30, 128)).astype(np.int64)
        codes = pack_signs(signs)
        for i in range(0, 30, 3):
            for j in range(0, 30, 7):
                dot = int(signs[i] @ signs[j])
                assert hamming_distance(codes.words[i], codes.words[j]) == (128 - dot) // 2

    def test_hamming_to_all_matches_rowwise(self):
        rng = np.random.default_rng(13)
        codes = pack_bits(rng.integers(0, 2, size=(40, 96)))
        q = pack_bits(rng.integers(0, 2, size=(1, 96)))
        bulk = hamming_to_all(codes.words, q.words[0])
        for i in range(40):
            assert bulk[i] == hamming_distance(codes.words[i], q.words[0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            hamming_distance(np.zeros(2, dtype=np.uint64), np.zeros(3, dtype=np.uint64))
