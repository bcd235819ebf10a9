"""Polar codec: round trips, rate-matching branches, list behavior."""

import numpy as np
import pytest

from ntnlink.polar import PolarCode, polar_transform


def hard_llrs(bits: np.ndarray, magnitude: float = 8.0) -> np.ndarray:
    return magnitude * (1.0 - 2.0 * bits.astype(np.float64))


def test_broadcast_configuration_sizes():
    pc = PolarCode()
    assert pc.n_code == 512
    assert pc.k == 56 and pc.e == 864
    assert len(pc.message_positions) == 56
    assert pc.frozen_mask.sum() == 512 - 56


def test_encode_output_length_and_determinism():
    pc = PolarCode()
    rng = np.random.default_rng(41)
    bits = rng.integers(0, 2, 56).astype(np.uint8)
    a = pc.encode(bits)
    assert a.shape == (864,)
    np.testing.assert_array_equal(a, pc.encode(bits))


def test_repetition_tail_repeats_the_head():
    pc = PolarCode()
    coded = pc.encode(np.ones(56, dtype=np.uint8))
    np.testing.assert_array_equal(coded[512:864], coded[:864 - 512])


@pytest.mark.parametrize("list_size", [1, 8])
def test_clean_round_trip(list_size):
    pc = PolarCode()
    rng = np.random.default_rng(42)
    for _ in range(100):
        bits = rng.integers(0, 2, 56).astype(np.uint8)
        decoded, ok = pc.decode(hard_llrs(pc.encode(bits)), list_size=list_size)
        assert ok
        np.testing.assert_array_equal(decoded, bits)


def test_noisy_round_trip_with_list_decoding():
    pc = PolarCode()
    rng = np.random.default_rng(43)
    errors = 0
    for _ in range(60):
        bits = rng.integers(0, 2, 56).astype(np.uint8)
        x = 1.0 - 2.0 * pc.encode(bits).astype(np.float64)
        y = x + 0.7 * rng.standard_normal(864)
        decoded, _ = pc.decode(2.0 * y / 0.49, list_size=8)
        errors += not np.array_equal(decoded, bits)
    assert errors == 0  # rate 56/864 has enormous margin at this noise level


def test_crc_assisted_selection_prefers_a_passing_candidate():
    pc = PolarCode()
    rng = np.random.default_rng(44)
    bits = rng.integers(0, 2, 56).astype(np.uint8)

    def fake_crc(candidate):
        return bool(np.array_equal(candidate, bits))

    llrs = hard_llrs(pc.encode(bits), magnitude=0.9)
    llrs += 0.8 * rng.standard_normal(864)
    decoded, ok = pc.decode(llrs, list_size=8, crc_ok=fake_crc)
    if ok:
        np.testing.assert_array_equal(decoded, bits)


def test_pure_noise_reports_crc_failure():
    pc = PolarCode()
    rng = np.random.default_rng(45)
    always_fail = 0
    for _ in range(20):
        _, ok = pc.decode(rng.standard_normal(864), list_size=8,
                          crc_ok=lambda c: False)
        always_fail += not ok
    assert always_fail == 20


@pytest.mark.parametrize("k,e", [(7, 20), (16, 24), (12, 48)])
def test_shortened_and_punctured_configurations_round_trip(k, e):
    pc = PolarCode(k=k, e=e, n_max=9, input_interleave=False)
    rng = np.random.default_rng(46)
    for _ in range(50):
        bits = rng.integers(0, 2, k).astype(np.uint8)
        decoded, _ = pc.decode(hard_llrs(pc.encode(bits)), list_size=4)
        np.testing.assert_array_equal(decoded, bits)


def test_rate_recovery_folds_repeats_additively():
    pc = PolarCode()
    llrs = np.zeros(864)
    llrs[0] = 1.0
    llrs[512] = 2.5  # repeats position 0 of the interleaved word
    folded = pc.rate_recover(llrs)
    target = pc.sub_block_perm[0]
    assert folded[target] == pytest.approx(3.5)


def test_polar_transform_is_an_involution():
    rng = np.random.default_rng(47)
    u = rng.integers(0, 2, 256).astype(np.uint8)
    np.testing.assert_array_equal(polar_transform(polar_transform(u)), u)


def test_invalid_arguments():
    pc = PolarCode()
    with pytest.raises(ValueError):
        pc.encode(np.zeros(55, dtype=np.uint8))
    with pytest.raises(ValueError):
        pc.decode(np.zeros(863), list_size=8)
    with pytest.raises(ValueError):
        pc.decode(np.zeros(864), list_size=0)
    with pytest.raises(ValueError):
        polar_transform(np.zeros(100, dtype=np.uint8))
