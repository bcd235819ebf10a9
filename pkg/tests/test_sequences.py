"""Sequence generators: alphabets, correlation separation, scrambling algebra."""

import numpy as np
import pytest

from ntnlink.sequences import (
    gen_dmrs, gen_pss, gen_sss, gold_sequence, scramble, scrambling_sequence,
)


def gold_reference(c_init: int, length: int, offset: int = 0) -> np.ndarray:
    """Plain one-sample-at-a-time recurrence, independent of the blocked version."""
    n = length + offset + 1600 + 31
    x1 = np.zeros(n, np.uint8)
    x2 = np.zeros(n, np.uint8)
    x1[0] = 1
    for i in range(31):
        x2[i] = (c_init >> i) & 1
    for i in range(n - 31):
        x1[i + 31] = x1[i + 3] ^ x1[i]
        x2[i + 31] = x2[i + 3] ^ x2[i + 2] ^ x2[i + 1] ^ x2[i]
    s = slice(1600 + offset, 1600 + offset + length)
    return x1[s] ^ x2[s]


@pytest.mark.parametrize("c_init,length,offset", [
    (0, 128, 0), (1, 64, 0), (1007, 864, 2592), (2**31 - 1, 100, 7), (54321, 2000, 0),
])
def test_gold_matches_reference_recurrence(c_init, length, offset):
    np.testing.assert_array_equal(
        gold_sequence(c_init, length, offset), gold_reference(c_init, length, offset))


def test_pss_alphabet_and_length():
    for nid2 in range(3):
        seq = gen_pss(nid2)
        assert seq.shape == (127,)
        assert set(np.unique(seq)) == {-1.0, 1.0}


def test_pss_cross_correlation_separation():
    """Self peak dominates the other sequences by > 4x.

    The three sequences are cyclic shifts of one another, so the
    separation that matters is at the receiver's alignment: the aligned
    (zero-lag) sequence correlation and the time-domain matched filter
    over all sample lags.
    """
    seqs = [gen_pss(k) for k in range(3)]
    for a in range(3):
        auto = abs(np.dot(seqs[a], seqs[a]))
        for b in range(3):
            if a != b:
                assert auto / abs(np.dot(seqs[a], seqs[b])) > 4.0

    # time-domain: modulate each sequence on its subcarriers and correlate
    waves = []
    for seq in seqs:
        spec = np.zeros(256, dtype=complex)
        spec[(np.arange(127) + 56 - 120) % 256] = seq
        waves.append(np.fft.ifft(spec))
    for a in range(3):
        auto = np.abs(np.correlate(waves[a], waves[a], mode="full")).max()
        for b in range(3):
            if a == b:
                continue
            cross = np.abs(np.correlate(waves[a], waves[b], mode="full")).max()
            assert auto / cross > 4.0


def test_sss_unit_power_and_distinctness():
    rng = np.random.default_rng(31)
    seen = set()
    for _ in range(40):
        nid1, nid2 = int(rng.integers(336)), int(rng.integers(3))
        seq = gen_sss(nid1, nid2)
        assert np.allclose(np.abs(seq), 1.0)
        seen.add(seq.tobytes())
    assert len(seen) > 35  # collisions would indicate a broken construction


def test_dmrs_length_and_power():
    seq = gen_dmrs(123, issb=0, half_frame=0)
    assert seq.shape == (144,)
    np.testing.assert_allclose(np.abs(seq), 1.0, atol=1e-12)


def test_dmrs_depends_on_cell_and_block_index():
    assert not np.array_equal(gen_dmrs(1), gen_dmrs(2))
    assert not np.array_equal(gen_dmrs(1, issb=0), gen_dmrs(1, issb=1))
    assert not np.array_equal(gen_dmrs(1, half_frame=0), gen_dmrs(1, half_frame=1))


def test_scramble_is_an_involution():
    rng = np.random.default_rng(32)
    bits = rng.integers(0, 2, 864).astype(np.uint8)
    np.testing.assert_array_equal(scramble(scramble(bits, 77), 77), bits)


def test_scramble_of_zero_is_the_sequence_itself():
    zero = np.zeros(864, dtype=np.uint8)
    np.testing.assert_array_equal(
        scramble(zero, 500, phase=2), scrambling_sequence(500, 864, phase=2))


def test_distinct_cells_scramble_differently():
    rng = np.random.default_rng(33)
    zero = np.zeros(864, dtype=np.uint8)
    for _ in range(100):
        a, b = rng.choice(1008, size=2, replace=False)
        assert np.any(scramble(zero, int(a)) != scramble(zero, int(b)))


def test_sequence_argument_validation():
    with pytest.raises(ValueError):
        gen_pss(3)
    with pytest.raises(ValueError):
        gen_sss(336, 0)
    with pytest.raises(ValueError):
        gen_dmrs(1008)
    with pytest.raises(ValueError):
        gen_dmrs(5, issb=4)
