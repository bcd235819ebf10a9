"""Channel impairments: draw statistics, unitarity, noise calibration."""

import math

import numpy as np
import pytest

from ntnlink import ntn_channel as ch
from ntnlink import nr_pbch_tx as tx
from ntnlink import nr_rx
from ntnlink.frame import IqFrame

FS = 3.84e6


def tone(freq_frac: float, n: int = 8192) -> IqFrame:
    t = np.arange(n)
    return IqFrame(np.exp(2j * np.pi * freq_frac * t), FS)


class TestDrawProfile:
    def test_cfo_stays_within_half_scs(self):
        cfos = np.array([
            ch.draw_profile([90, i], 15e3, FS, 10.0).cfo_hz for i in range(5000)])
        assert np.abs(cfos).max() <= 7500.0

    def test_cfo_mean_matches_uniform_moments(self):
        n = 100_000
        cfos = np.array([
            ch.draw_profile([91, i], 15e3, FS, 10.0).cfo_hz for i in range(n)])
        # U(-7500, 7500): mean 0, std = 15000/sqrt(12)
        bound = 3 * (15000 / math.sqrt(12)) / math.sqrt(n)
        assert abs(cfos.mean()) < bound

    def test_fixed_seed_reproduces_profile(self):
        assert ch.draw_profile(5, 15e3, FS, 3.0) == ch.draw_profile(5, 15e3, FS, 3.0)

    def test_delay_split_is_consistent(self):
        for i in range(200):
            p = ch.draw_profile([92, i], 15e3, FS, 0.0, (0.0, 1e-3))
            assert 0.0 <= p.fractional_delay_samples < 1.0
            total = p.integer_delay_samples + p.fractional_delay_samples
            assert 0.0 <= total <= 1e-3 * FS

    def test_empty_delay_range_rejected(self):
        with pytest.raises(ValueError):
            ch.draw_profile(0, 15e3, FS, 0.0, (1e-3, 0.0))
        with pytest.raises(ValueError):
            ch.draw_profile(0, -1.0, FS, 0.0)


class TestCfo:
    def test_zero_offset_is_identity(self):
        f = tone(0.1, 64)
        np.testing.assert_array_equal(ch.apply_cfo(f, 0.0).samples, f.samples)

    def test_magnitudes_preserved(self):
        rng = np.random.default_rng(93)
        f = IqFrame(rng.standard_normal(1000) + 1j * rng.standard_normal(1000), FS)
        out = ch.apply_cfo(f, 1234.5)
        np.testing.assert_allclose(np.abs(out.samples), np.abs(f.samples), rtol=1e-12)

    def test_quarter_rate_cycles_through_axes(self):
        f = IqFrame(np.ones(8, dtype=complex), FS)
        out = ch.apply_cfo(f, FS / 4).samples
        np.testing.assert_allclose(out[:4], [1, 1j, -1, -1j], atol=1e-12)


class TestDelay:
    def test_zero_delay_is_identity(self):
        f = tone(0.07, 256)
        np.testing.assert_array_equal(ch.apply_delay(f, 0, 0.0).samples, f.samples)

    def test_integer_shift_moves_an_impulse(self):
        imp = np.zeros(64, dtype=complex)
        imp[0] = 1.0
        out = ch.apply_delay(IqFrame(imp, FS), 5, 0.0).samples
        assert np.argmax(np.abs(out)) == 5
        assert not out[:5].any()

    def test_half_sample_delay_on_a_tone(self):
        """Analytic oracle: delaying a tone at 0.1 fs by mu lags its phase
        by 2 pi 0.1 mu with unit gain."""
        f = tone(0.1)
        out = ch.apply_delay(f, 0, 0.5).samples
        mid = slice(200, -200)
        expected = np.exp(2j * np.pi * 0.1 * (np.arange(8192)[mid] - 0.5))
        assert np.abs(np.abs(out[mid]) - 1.0).max() < 0.01
        assert np.abs(np.angle(out[mid] / expected)).max() < 0.01

    def test_power_preserved_on_occupied_band(self):
        grid = tx.build_ssb_grid(tx.MibPayload(sfn=9), tx.CellIdentity(55))
        wave = tx.ofdm_modulate(grid)
        for mu in (0.2, 0.5, 0.9):
            out = ch.apply_delay(wave, 3, mu)
            ratio = np.sum(np.abs(out.samples) ** 2) / np.sum(np.abs(wave.samples) ** 2)
            assert abs(ratio - 1.0) < 0.01

    def test_invalid_fraction_rejected(self):
        with pytest.raises(ValueError):
            ch.apply_delay(tone(0.1, 64), 0, 1.0)


class TestAwgn:
    def test_infinite_snr_is_identity(self):
        f = tone(0.05, 128)
        np.testing.assert_array_equal(
            ch.apply_awgn(f, math.inf, seed=1).samples, f.samples)

    def test_snr_calibration_within_tolerance(self):
        n = 200_000
        f = tone(0.05, n)
        for target in (0.0, 10.0, 20.0):
            out = ch.apply_awgn(f, target, seed=int(target) + 7)
            noise_power = np.mean(np.abs(out.samples - f.samples) ** 2)
            measured = 10 * np.log10(1.0 / noise_power)
            assert abs(measured - target) < 0.2

    def test_seeded_noise_is_reproducible(self):
        f = tone(0.05, 512)
        a = ch.apply_awgn(f, 5.0, seed=99).samples
        b = ch.apply_awgn(f, 5.0, seed=99).samples
        np.testing.assert_array_equal(a, b)

    def test_zero_power_frame_rejected(self):
        with pytest.raises(ValueError):
            ch.apply_awgn(IqFrame(np.zeros(16, dtype=complex), FS), 10.0, seed=0)


class TestSimulate:
    def test_identity_profile_returns_input(self):
        f = tone(0.03, 512)
        prof = ch.ChannelProfile(snr_db=math.inf)
        np.testing.assert_array_equal(ch.simulate(f, prof).samples, f.samples)

    def test_composition_equals_manual_chaining(self):
        f = tone(0.03, 2048)
        prof = ch.ChannelProfile(snr_db=12.0, cfo_hz=400.0,
                                 integer_delay_samples=7,
                                 fractional_delay_samples=0.3, seed=17)
        manual = ch.apply_awgn(
            ch.apply_cfo(ch.apply_delay(f, 7, 0.3), 400.0), 12.0, seed=17)
        np.testing.assert_array_equal(ch.simulate(f, prof).samples, manual.samples)

    def test_awgn_only_ber_matches_q_function(self):
        """Hard-decision QPSK error rate vs the closed-form at 10 dB."""
        rng = np.random.default_rng(94)
        bits = rng.integers(0, 2, 1_000_000).astype(np.uint8)
        syms = tx.qpsk_modulate(bits)
        prof = ch.ChannelProfile(snr_db=10.0, seed=4242)
        noisy = ch.simulate(IqFrame(syms, FS), prof)
        ber = nr_rx.compute_ber(bits, nr_rx.qpsk_demod_hard(noisy.samples))
        expected = 0.5 * math.erfc(math.sqrt(10.0) / math.sqrt(2.0))
        assert abs(ber - expected) / expected < 0.15

    def test_invalid_profile_rejected(self):
        with pytest.raises(ValueError):
            ch.ChannelProfile(snr_db=10.0, fractional_delay_samples=1.5)
        with pytest.raises(ValueError):
            ch.ChannelProfile(snr_db=math.nan)
