"""Receiver stages: extraction, channel estimation, MMSE, decoding, BER."""

import math

import numpy as np
import pytest

from ntnlink import ntn_channel as ch
from ntnlink import nr_pbch_tx as tx
from ntnlink import nr_rx
from ntnlink.frame import IqFrame
from ntnlink.sequences import gen_dmrs

CFG = tx.OfdmConfig()


def clean_setup(seed=0, n_cell_id=None, sfn=None):
    rng = np.random.default_rng([seed, 3])
    cell = tx.CellIdentity(int(rng.integers(1008)) if n_cell_id is None else n_cell_id)
    mib = tx.MibPayload(sfn=int(rng.integers(1024)) if sfn is None else sfn)
    grid = tx.build_ssb_grid(mib, cell)
    burst = tx.build_ssb_burst(grid, CFG, burst_len_s=0.002, ssb_offset_s=0.0005)
    return cell, mib, grid, burst


class TestExtract:
    def test_noiseless_extraction_recovers_the_grid(self):
        cell, mib, grid, burst = clean_setup(1)
        sync = nr_rx.detect_pss(burst, CFG)
        sync = nr_rx.detect_sss(burst, sync, CFG)
        rx_grid = nr_rx.extract_ssb(burst, sync, CFG)
        rms = np.sqrt(np.mean(np.abs(rx_grid.res - grid.res) ** 2))
        assert rms < 1e-6

    def test_compensated_cfo_leaves_small_per_re_magnitude_error(self):
        cell, mib, grid, burst = clean_setup(2)
        shifted = ch.apply_cfo(burst, 3000.0)
        sync = nr_rx.detect_pss(shifted, CFG)
        sync = nr_rx.detect_sss(shifted, sync, CFG)
        rx_grid = nr_rx.extract_ssb(shifted, sync, CFG)
        occupied = np.abs(grid.res) > 0
        mag_err = np.abs(np.abs(rx_grid.res[occupied]) - np.abs(grid.res[occupied]))
        assert mag_err.max() < 0.02

    def test_timing_beyond_frame_end_raises(self):
        cell, mib, grid, burst = clean_setup(3)
        sync = nr_rx.detect_pss(burst, CFG)
        bad = type(sync)(timing_offset_samples=len(burst), coarse_cfo_hz=0.0,
                         n_id_2=sync.n_id_2, n_id_1=0)
        with pytest.raises(ValueError):
            nr_rx.extract_ssb(burst, bad, CFG)


def received_grid_with_noise(cell, grid, h, noise_sigma, seed):
    """Clean grid scaled by a flat channel plus direct per-RE noise."""
    rng = np.random.default_rng(seed)
    res = grid.res * h
    noise = (rng.standard_normal(res.shape) + 1j * rng.standard_normal(res.shape))
    res = res + noise_sigma / np.sqrt(2) * noise
    return tx.SsbGrid(res=res, dmrs_mask=grid.dmrs_mask, data_mask=grid.data_mask)


class TestChannelEstimate:
    def test_flat_unit_channel_noiseless(self):
        cell, mib, grid, _ = clean_setup(4)
        est = nr_rx.estimate_channel(grid, cell)
        np.testing.assert_allclose(est.h, 1.0, atol=1e-6)
        assert est.noise_var < 1e-12

    def test_rotated_channel_phase_recovered(self):
        cell, mib, grid, _ = clean_setup(5)
        h = np.exp(1j * np.pi / 4)
        errs = []
        for trial in range(50):
            noisy = received_grid_with_noise(cell, grid, h, 10 ** (-20 / 20), trial)
            est = nr_rx.estimate_channel(noisy, cell)
            errs.append(np.abs(np.angle(est.h_data / h)))
        assert np.mean(errs) < np.deg2rad(2.0)

    def test_noise_var_estimate_within_quarter(self):
        cell, mib, grid, _ = clean_setup(6)
        sigma2 = 10 ** (-10 / 10)
        estimates = [
            nr_rx.estimate_channel(
                received_grid_with_noise(cell, grid, 1.0, np.sqrt(sigma2), t), cell
            ).noise_var
            for t in range(200)
        ]
        assert abs(np.mean(estimates) - sigma2) / sigma2 < 0.25


class TestMmse:
    def make(self, h, nv):
        cell, mib, grid, _ = clean_setup(7)
        est = nr_rx.ChannelEstimate(h=np.full(576, h, dtype=complex), noise_var=nv)
        return grid, est

    def test_unit_channel_zero_noise_is_identity(self):
        grid, est = self.make(1.0, 0.0)
        eq = nr_rx.mmse_equalize(grid, est)
        np.testing.assert_allclose(eq.symbols, grid.extract_data(), atol=1e-9)

    def test_gain_two_zero_noise_halves(self):
        grid, est = self.make(2.0, 0.0)
        eq = nr_rx.mmse_equalize(grid, est)
        np.testing.assert_allclose(eq.symbols, grid.extract_data() / 2, atol=1e-9)

    def test_infinite_noise_shrinks_to_zero(self):
        grid, est = self.make(1.0, 1e12)
        assert np.abs(nr_rx.mmse_equalize(grid, est).symbols).max() < 1e-9

    def test_matches_zero_forcing_at_tiny_noise(self):
        grid, est = self.make(0.5 + 0.5j, 1e-12)
        eq = nr_rx.mmse_equalize(grid, est)
        zf = grid.extract_data() / (0.5 + 0.5j)
        np.testing.assert_allclose(eq.symbols, zf, rtol=1e-9)


class TestDecode:
    def test_clean_chain_recovers_payload(self):
        for seed in range(30):
            cell, mib, grid, burst = clean_setup(seed)
            result = nr_rx.decode_burst(burst, nr_rx.RxConfig(ofdm=CFG))
            assert result.crc_pass
            assert result.n_cell_id == cell.n_cell_id
            assert result.mib == mib

    def test_random_symbols_fail_the_parity_check(self):
        rng = np.random.default_rng(73)
        cell = tx.CellIdentity(10)
        for _ in range(50):
            syms = (rng.standard_normal(432) + 1j * rng.standard_normal(432))
            llrs = nr_rx.descramble_llrs(
                nr_rx.qpsk_llrs(syms, 0.1), cell.n_cell_id, 0)
            _, ok = nr_rx.pbch_decode(llrs, cell)
            assert not ok

    def test_hard_bit_descramble_matches_llr_descramble(self):
        rng = np.random.default_rng(74)
        bits = rng.integers(0, 2, 864).astype(np.uint8)
        llrs = 1.0 - 2.0 * bits.astype(np.float64)
        a = nr_rx.descramble_bits(bits, 321, 1)
        b = nr_rx.descramble_llrs(llrs, 321, 1) < 0
        np.testing.assert_array_equal(a.astype(bool), b)

    def test_decode_of_hard_symbol_inputs(self):
        """Network outputs carry no noise estimate: nominal scaling path."""
        cell, mib, grid, _ = clean_setup(8)
        syms = grid.extract_data()
        llrs = nr_rx.descramble_llrs(
            nr_rx.qpsk_llrs(syms, nr_rx.NN_NOMINAL_NOISE_VAR), cell.n_cell_id, 0)
        payload, ok = nr_rx.pbch_decode(llrs, cell)
        assert ok and tx.unpack_mib_payload(payload) == mib


class TestBer:
    def test_identical_is_zero(self):
        bits = np.ones(100, dtype=np.uint8)
        assert nr_rx.compute_ber(bits, bits) == 0.0

    def test_complement_is_one(self):
        bits = np.zeros(64, dtype=np.uint8)
        assert nr_rx.compute_ber(bits, 1 - bits) == 1.0

    def test_length_mismatch_raises(self):
        with pytest.raises(ValueError):
            nr_rx.compute_ber(np.zeros(3, np.uint8), np.zeros(4, np.uint8))

    def test_qpsk_ber_against_the_q_function(self):
        rng = np.random.default_rng(75)
        bits = rng.integers(0, 2, 400_000).astype(np.uint8)
        frame = IqFrame(tx.qpsk_modulate(bits), 1.0)
        noisy = ch.apply_awgn(frame, 10.0, seed=55)
        ber = nr_rx.compute_ber(bits, nr_rx.qpsk_demod_hard(noisy.samples))
        expected = 0.5 * math.erfc(math.sqrt(10.0) / math.sqrt(2.0))
        assert abs(ber - expected) / expected < 0.15


def test_full_chain_determinism():
    cell, mib, grid, burst = clean_setup(9)
    prof = ch.draw_profile(77, CFG.scs_hz, CFG.sample_rate_hz, 10.0)
    noisy = ch.simulate(burst, prof)
    a = nr_rx.decode_burst(noisy, nr_rx.RxConfig(ofdm=CFG))
    b = nr_rx.decode_burst(noisy, nr_rx.RxConfig(ofdm=CFG))
    np.testing.assert_array_equal(a.payload_bits, b.payload_bits)
    np.testing.assert_array_equal(a.equalized.symbols, b.equalized.symbols)
