"""Parity attachment against an integer-arithmetic long-division oracle."""

import numpy as np
import pytest

from ntnlink import nr_pbch_tx as tx

# x^24+x^23+x^21+x^20+x^17+x^15+x^13+x^12+x^8+x^4+x^2+x+1
POLY_INT = 0b1101100101011000100010111


def crc24_oracle(payload_bits: np.ndarray) -> np.ndarray:
    """Polynomial long division done on Python integers."""
    value = 0
    for b in payload_bits:
        value = (value << 1) | int(b)
    value <<= 24
    divisor = POLY_INT << (len(payload_bits) - 1)
    for shift in range(len(payload_bits)):
        if value & (1 << (24 + len(payload_bits) - 1 - shift)):
            value ^= divisor >> shift
    return np.array([(value >> (23 - i)) & 1 for i in range(24)], dtype=np.uint8)


def test_zero_payload_gives_zero_parity():
    out = tx.attach_crc24(np.zeros(32, dtype=np.uint8))
    assert out.shape == (56,)
    assert not out[32:].any()


def test_parity_matches_long_division_oracle():
    rng = np.random.default_rng(21)
    for _ in range(200):
        payload = rng.integers(0, 2, 32).astype(np.uint8)
        out = tx.attach_crc24(payload)
        np.testing.assert_array_equal(out[32:], crc24_oracle(payload))


def test_every_single_bit_flip_is_detected():
    rng = np.random.default_rng(22)
    block = tx.attach_crc24(rng.integers(0, 2, 32).astype(np.uint8))
    assert tx.crc24_check(block)
    for pos in range(56):
        corrupted = block.copy()
        corrupted[pos] ^= 1
        assert not tx.crc24_check(corrupted), f"missed flip at {pos}"


def test_attach_then_check_is_consistent():
    rng = np.random.default_rng(23)
    for _ in range(300):
        assert tx.crc24_check(tx.attach_crc24(rng.integers(0, 2, 32).astype(np.uint8)))


def test_wrong_lengths_raise():
    with pytest.raises(ValueError):
        tx.attach_crc24(np.zeros(31, dtype=np.uint8))
    with pytest.raises(ValueError):
        tx.crc24_check(np.zeros(55, dtype=np.uint8))
