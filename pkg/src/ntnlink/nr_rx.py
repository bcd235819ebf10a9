"""Classical broadcast-channel receiver.

Pipeline: time-domain PSS search with split-symbol correlation (timing,
sequence index and coarse carrier offset), SSS identification, OFDM
demodulation of the detected block, pilot-based least-squares channel
estimation with per-symbol frequency interpolation, per-RE MMSE
equalization, soft demodulation, descrambling, polar list decoding and the
24-bit parity check.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .frame import IqFrame
from .polar import PolarCode
from .sequences import gen_dmrs, gen_pss, gen_sss, scramble, scrambling_sequence
from . import nr_pbch_tx as tx

__all__ = [
    "SyncResult", "ChannelEstimate", "EqualizedBlock", "RxConfig", "DecodeResult",
    "PssNotFoundError", "SssAmbiguousError",
    "detect_pss", "detect_sss", "extract_ssb", "estimate_channel", "mmse_equalize",
    "qpsk_demod_hard", "qpsk_llrs", "descramble_bits", "descramble_llrs",
    "pbch_decode", "compute_ber", "decode_burst",
]

STAGE_POST_SYNC = "post_sync"
STAGE_POST_MMSE = "post_mmse"
STAGE_POST_NN = "post_nn"
_STAGES = (STAGE_POST_SYNC, STAGE_POST_MMSE, STAGE_POST_NN)

NN_NOMINAL_NOISE_VAR = 0.1  # LLR scaling when decoding bare symbols (no noise estimate)
_MMSE_EPS = 1e-12


class PssNotFoundError(RuntimeError):
    """No primary-sync correlation peak cleared the detection threshold."""


class SssAmbiguousError(RuntimeError):
    """Secondary-sync correlation did not single out a cell group."""


@dataclass
class SyncResult:
    """Detected block timing/frequency and cell identity components."""

    timing_offset_samples: int
    coarse_cfo_hz: float
    n_id_2: int
    n_id_1: int | None = None
    correlation_peak: float = 0.0
    peak_to_side: float = 0.0

    @property
    def n_cell_id(self) -> int:
        if self.n_id_1 is None:
            raise ValueError("cell group not resolved yet (run detect_sss)")
        return 3 * self.n_id_1 + self.n_id_2


@dataclass
class ChannelEstimate:
    """Per-RE response over [432 data REs, 144 pilot REs] plus noise power."""

    h: np.ndarray
    noise_var: float

    def __post_init__(self) -> None:
        self.h = np.asarray(self.h, dtype=np.complex128)
        if self.h.shape != (576,):
            raise ValueError(f"channel estimate must cover 576 REs, got {self.h.shape}")
        if not np.isfinite(self.noise_var) or self.noise_var < 0:
            raise ValueError(f"noise_var must be finite and >= 0, got {self.noise_var}")

    @property
    def h_data(self) -> np.ndarray:
        return self.h[:432]

    @property
    def h_dmrs(self) -> np.ndarray:
        return self.h[432:]


@dataclass
class EqualizedBlock:
    """432 data-RE symbols tagged with the pipeline stage that produced them."""

    symbols: np.ndarray
    stage: str

    def __post_init__(self) -> None:
        self.symbols = np.asarray(self.symbols, dtype=np.complex128)
        if self.symbols.shape != (432,):
            raise ValueError(f"expected 432 symbols, got {self.symbols.shape}")
        if self.stage not in _STAGES:
            raise ValueError(f"stage must be one of {_STAGES}, got {self.stage!r}")


@dataclass(frozen=True)
class RxConfig:
    """Receiver knobs; defaults mirror the single-beam transmit setup."""

    ofdm: tx.OfdmConfig = tx.OfdmConfig()
    issb: int = 0
    half_frame: int = 0
    strict_standard: bool = True
    list_size: int = 8
    pss_threshold: float = 6.0
    sss_threshold: float = 3.0


# -- synchronization -----------------------------------------------------------

_REF_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _pss_half_ffts(cfg: tx.OfdmConfig, n_id_2: int, length: int) -> tuple[np.ndarray, np.ndarray]:
    """FFTs of the two reference half-symbols, zero-padded to the frame length."""
    key = (cfg.fft_size, cfg.cp_samples, n_id_2, length)
    if key not in _REF_CACHE:
        spec = np.zeros(cfg.fft_size, dtype=np.complex128)
        spec[cfg.subcarrier_bins()[tx._SYNC_K0 : tx._SYNC_K0 + 127]] = gen_pss(n_id_2)
        ref = np.fft.ifft(spec) * np.sqrt(cfg.fft_size)
        half = cfg.fft_size // 2
        pad1 = np.zeros(length, dtype=np.complex128)
        pad2 = np.zeros(length, dtype=np.complex128)
        pad1[:half] = ref[:half]
        pad2[half : 2 * half] = ref[half:]
        _REF_CACHE[key] = (np.conj(np.fft.fft(pad1)), np.conj(np.fft.fft(pad2)))
    return _REF_CACHE[key]


def detect_pss(frame: IqFrame, cfg: tx.OfdmConfig = tx.OfdmConfig(),
               threshold: float = 6.0) -> SyncResult:
    """Search the three primary sequences over all time lags.

    Correlates each half of the reference symbol separately so the metric
    tolerates carrier offsets up to half a subcarrier spacing; the coarse
    offset estimate comes from the phase step between the two halves. Ties
    resolve to the earliest lag.
    """
    y = frame.samples
    n = y.size
    if n < cfg.ssb_samples:
        raise PssNotFoundError(f"frame of {n} samples cannot hold a full block")
    yf = np.fft.fft(y)
    half = cfg.fft_size // 2
    # Lags where the full block (including the leading prefix) stays in range.
    max_lag = n - (3 * cfg.symbol_samples + cfg.fft_size)
    best = None
    for n_id_2 in range(3):
        r1f, r2f = _pss_half_ffts(cfg, n_id_2, n)
        c1 = np.fft.ifft(yf * r1f)
        c2 = np.fft.ifft(yf * r2f)
        metric = np.abs(c1) + np.abs(c2)
        metric[max_lag + 1 :] = 0.0
        lag = int(np.argmax(metric))
        peak = float(metric[lag])
        side = float(np.median(metric[: max_lag + 1]))
        if best is None or peak > best[0]:
            best = (peak, side, n_id_2, lag, c1[lag], c2[lag])
    peak, side, n_id_2, lag, c1, c2 = best
    if lag < cfg.cp_samples:
        # Prefix would start before the frame; treat as undetectable.
        raise PssNotFoundError("detected block truncated at the frame head")
    ratio = peak / side if side > 0 else 0.0
    if ratio < threshold:
        raise PssNotFoundError(
            f"no correlation peak above threshold (ratio {ratio:.2f} < {threshold})")
    phase_step = np.angle(c2 * np.conj(c1))
    cfo = phase_step * cfg.sample_rate_hz / (2 * np.pi * half)
    return SyncResult(
        timing_offset_samples=lag,
        coarse_cfo_hz=float(cfo),
        n_id_2=n_id_2,
        correlation_peak=peak,
        peak_to_side=ratio,
    )


def _derotated(frame: IqFrame, cfo_hz: float) -> np.ndarray:
    n = np.arange(len(frame))
    return frame.samples * np.exp(-2j * np.pi * cfo_hz * n / frame.sample_rate_hz)


_SSS_BANKS: dict[int, np.ndarray] = {}


def _sss_bank(n_id_2: int) -> np.ndarray:
    """336x127 matrix of all secondary sequences for one n_id_2."""
    if n_id_2 not in _SSS_BANKS:
        _SSS_BANKS[n_id_2] = np.stack([gen_sss(i, n_id_2) for i in range(336)])
    return _SSS_BANKS[n_id_2]


def detect_sss(frame: IqFrame, sync: SyncResult, cfg: tx.OfdmConfig = tx.OfdmConfig(),
               threshold: float = 3.0) -> SyncResult:
    """Resolve the cell group by matching all 336 secondary sequences."""
    w0 = sync.timing_offset_samples + 2 * cfg.symbol_samples
    if w0 + cfg.fft_size > len(frame):
        raise ValueError("frame too short to contain the secondary-sync symbol")
    y = _derotated(frame, sync.coarse_cfo_hz)
    spec = np.fft.fft(y[w0 : w0 + cfg.fft_size]) / np.sqrt(cfg.fft_size)
    rx = spec[cfg.subcarrier_bins()[tx._SYNC_K0 : tx._SYNC_K0 + 127]]
    scores = np.abs(_sss_bank(sync.n_id_2) @ rx)
    n_id_1 = int(np.argmax(scores))
    peak = float(scores[n_id_1])
    side = float(np.median(scores))
    ratio = peak / side if side > 0 else 0.0
    if ratio < threshold:
        raise SssAmbiguousError(
            f"cell group ambiguous (ratio {ratio:.2f} < {threshold})")
    return replace(sync, n_id_1=n_id_1)


def extract_ssb(frame: IqFrame, sync: SyncResult,
                cfg: tx.OfdmConfig = tx.OfdmConfig(), issb: int = 0) -> tx.SsbGrid:
    """Derotate by the coarse offset and demodulate the four block symbols."""
    start = sync.timing_offset_samples - cfg.cp_samples
    if start < 0 or start + cfg.ssb_samples > len(frame):
        raise ValueError("detected timing places the block outside the frame")
    y = _derotated(frame, sync.coarse_cfo_hz)
    res = tx.ofdm_demodulate(y, cfg, start=start)
    data_mask, dmrs_mask = tx.pbch_re_masks(sync.n_cell_id)
    return tx.SsbGrid(res=res, issb=issb, dmrs_mask=dmrs_mask, data_mask=data_mask)


# -- channel estimation and equalization ----------------------------------------

def _smooth3(values: np.ndarray) -> np.ndarray:
    """Length-3 moving average, shortened at the ends.

    Unbiased on constant and linear-ramp channels (symmetric window), and
    it cuts pilot noise enough to hold the phase-accuracy budget.
    """
    if values.size < 3:
        return values
    out = values.copy()
    out[1:-1] = (values[:-2] + values[1:-1] + values[2:]) / 3.0
    out[0] = (values[0] + values[1]) / 2.0
    out[-1] = (values[-2] + values[-1]) / 2.0
    return out


def estimate_channel(grid: tx.SsbGrid, cell: tx.CellIdentity, issb: int = 0,
                     half_frame: int = 0) -> ChannelEstimate:
    """Least-squares estimate at the pilots, linearly interpolated in frequency.

    Raw per-pilot estimates are smoothed over three neighbors, then
    interpolated per symbol with nearest-pilot extrapolation at the band
    edges. Noise power comes from the raw adjacent-pilot differences
    (spacing of exactly four subcarriers), which cancel the channel.
    """
    ref = gen_dmrs(cell.n_cell_id, issb, half_frame)
    h_data_parts, h_dmrs_parts, diffs = [], [], []
    pos = 0
    for sym in (1, 2, 3):
        pilot_k = np.nonzero(grid.dmrs_mask[:, sym])[0]
        data_k = np.nonzero(grid.data_mask[:, sym])[0]
        ls = grid.res[pilot_k, sym] / ref[pos : pos + pilot_k.size]
        pos += pilot_k.size
        adjacent = np.diff(pilot_k) == 4
        d = np.diff(ls)[adjacent]
        if d.size:
            diffs.append(d)
        # Smooth each contiguous pilot run separately (the middle symbol
        # has two disjoint edge blocks).
        smoothed = ls.copy()
        run_start = 0
        for i in range(ls.size):
            last = i == ls.size - 1 or pilot_k[i + 1] - pilot_k[i] != 4
            if last:
                smoothed[run_start : i + 1] = _smooth3(ls[run_start : i + 1])
                run_start = i + 1
        h_dmrs_parts.append(smoothed)
        h_data_parts.append(
            np.interp(data_k, pilot_k, smoothed.real)
            + 1j * np.interp(data_k, pilot_k, smoothed.imag)
        )
    deltas = np.concatenate(diffs)
    noise_var = float(np.mean(np.abs(deltas) ** 2) / 2.0)
    h = np.concatenate(h_data_parts + h_dmrs_parts)
    return ChannelEstimate(h=h, noise_var=noise_var)


def mmse_equalize(grid: tx.SsbGrid, est: ChannelEstimate) -> EqualizedBlock:
    """Per-RE minimum mean squared error combining of the data symbols."""
    y = grid.extract_data()
    h = est.h_data
    den = np.maximum(np.abs(h) ** 2 + est.noise_var, _MMSE_EPS)
    return EqualizedBlock(symbols=np.conj(h) * y / den, stage=STAGE_POST_MMSE)


# -- demodulation, descrambling, decoding ----------------------------------------

def qpsk_demod_hard(symbols: np.ndarray) -> np.ndarray:
    """Sign-based bit decisions, interleaved I/Q; zero maps to bit 0."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    bits = np.empty(2 * symbols.size, dtype=np.uint8)
    bits[0::2] = symbols.real < 0
    bits[1::2] = symbols.imag < 0
    return bits


def qpsk_llrs(symbols: np.ndarray, noise_var: float) -> np.ndarray:
    """Per-bit log-likelihood ratios (positive favors bit 0).

    The downstream min-sum decoder is invariant to a common positive
    scale, so noise_var only matters when mixing observations.
    """
    symbols = np.asarray(symbols, dtype=np.complex128)
    nv = max(float(noise_var), _MMSE_EPS)
    llrs = np.empty(2 * symbols.size, dtype=np.float64)
    scale = 2.0 * np.sqrt(2.0) / nv
    llrs[0::2] = scale * symbols.real
    llrs[1::2] = scale * symbols.imag
    return llrs


def descramble_bits(bits: np.ndarray, n_cell_id: int, phase: int = 0) -> np.ndarray:
    """Hard-bit descrambling (the scrambling XOR is an involution)."""
    return scramble(bits, n_cell_id, phase)


def descramble_llrs(llrs: np.ndarray, n_cell_id: int, phase: int = 0) -> np.ndarray:
    """Flip LLR signs where the scrambling sequence carries a one."""
    llrs = np.asarray(llrs, dtype=np.float64)
    seq = scrambling_sequence(n_cell_id, llrs.size, phase)
    return llrs * (1.0 - 2.0 * seq.astype(np.float64))


def pbch_decode(
    llrs: np.ndarray,
    cell: tx.CellIdentity,
    strict_standard: bool = True,
    list_size: int = 8,
) -> tuple[np.ndarray, bool]:
    """Descrambled LLRs -> (32-bit payload, crc_pass).

    List decoding with parity-assisted candidate selection, then the first
    scrambling is undone using the phase bits the scrambler left clear, and
    the payload interleaving is inverted. Decode failure surfaces as
    crc_pass=False, never an exception.
    """
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape != (tx.CODED_BITS,):
        raise ValueError(f"expected {tx.CODED_BITS} LLRs, got shape {llrs.shape}")
    code = tx._code(strict_standard)
    block, crc_pass = code.decode(llrs, list_size=list_size, crc_ok=tx.crc24_check)
    scrambled = block[: tx.PAYLOAD_BITS]
    pos_b2, pos_b1, _ = tx.unscrambled_positions(strict_standard)
    v = 2 * int(scrambled[pos_b2]) + int(scrambled[pos_b1])
    skip = set(tx.unscrambled_positions(strict_standard))
    s = tx.payload_scramble_sequence(cell.n_cell_id, v, skip)
    interleaved = scrambled ^ s
    if strict_standard:
        payload = interleaved[tx._PAYLOAD_PERM]
    else:
        payload = interleaved
    return payload, crc_pass


def compute_ber(tx_bits: np.ndarray, rx_bits: np.ndarray) -> float:
    """Hamming distance over length."""
    tx_bits = np.asarray(tx_bits, dtype=np.uint8)
    rx_bits = np.asarray(rx_bits, dtype=np.uint8)
    if tx_bits.shape != rx_bits.shape:
        raise ValueError(f"length mismatch: {tx_bits.shape} vs {rx_bits.shape}")
    return float(np.mean(tx_bits != rx_bits))


# -- full receive chain -----------------------------------------------------------

@dataclass
class DecodeResult:
    """Everything a burst yields on the way to the 32-bit payload."""

    sync: SyncResult
    grid: tx.SsbGrid
    channel: ChannelEstimate
    equalized: EqualizedBlock
    payload_bits: np.ndarray
    crc_pass: bool

    @property
    def n_cell_id(self) -> int:
        return self.sync.n_cell_id

    @property
    def mib(self) -> tx.MibPayload:
        return tx.unpack_mib_payload(self.payload_bits)


def decode_burst(frame: IqFrame, cfg: RxConfig = RxConfig()) -> DecodeResult:
    """Run the complete classical pipeline on one burst."""
    sync = detect_pss(frame, cfg.ofdm, threshold=cfg.pss_threshold)
    sync = detect_sss(frame, sync, cfg.ofdm, threshold=cfg.sss_threshold)
    grid = extract_ssb(frame, sync, cfg.ofdm, issb=cfg.issb)
    cell = tx.CellIdentity(sync.n_cell_id)
    est = estimate_channel(grid, cell, cfg.issb, cfg.half_frame)
    eq = mmse_equalize(grid, est)
    llrs = qpsk_llrs(eq.symbols, est.noise_var)
    llrs = descramble_llrs(llrs, cell.n_cell_id, phase=cfg.issb % 4)
    payload, crc_pass = pbch_decode(llrs, cell, cfg.strict_standard, cfg.list_size)
    return DecodeResult(
        sync=sync, grid=grid, channel=est, equalized=eq,
        payload_bits=payload, crc_pass=crc_pass,
    )
