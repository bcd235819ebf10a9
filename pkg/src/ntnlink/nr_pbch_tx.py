"""Broadcast-channel transmitter: payload packing through OFDM baseband.

Bit chain (strict standard mode): pack the 32-bit payload, interleave it,
first scrambling (cell id + frame-number phase), CRC-24C attachment, polar
encoding rate-matched to 864 bits, second scrambling, QPSK to 432 symbols,
mapping onto the 240x4 block grid together with PSS/SSS/DMRS, and OFDM
modulation with normal cyclic prefix.

Payload bit table (position: content), fixed so tests can hand-pack:

    0      message choice bit (constant 0)
    1-6    frame number bits 9..4, MSB first
    7      common subcarrier spacing flag (0: {15,60} kHz, 1: {30,120} kHz)
    8-11   subcarrier offset bits 3..0
    12     type-A DMRS position (0: pos2, 1: pos3)
    13-20  control-resource config byte, MSB first
    21     cell barred flag
    22     intra-frequency reselection flag
    23     spare bit
    24-27  frame number bits 3..0, MSB first
    28     half-frame bit
    29     subcarrier offset bit 4
    30-31  reserved (constant 0)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frame import IqFrame
from .polar import PolarCode
from .sequences import gen_dmrs, gen_pss, gen_sss, gold_sequence, scramble

__all__ = [
    "CellIdentity", "MibPayload", "OfdmConfig", "SsbGrid",
    "build_mib_payload", "unpack_mib_payload", "attach_crc24", "crc24_check",
    "payload_interleave_perm", "payload_scramble_sequence", "unscrambled_positions",
    "scrambling_phase_of_sfn",
    "pbch_encode", "qpsk_modulate", "map_ssb_grid",
    "ofdm_modulate", "ofdm_demodulate", "encode_pbch", "build_ssb_grid",
    "build_ssb_burst",
]

PAYLOAD_BITS = 32
CODED_BITS = 864
DATA_RE_COUNT = 432
DMRS_RE_COUNT = 144
GRID_SUBCARRIERS = 240
GRID_SYMBOLS = 4
_SYNC_K0 = 56  # first subcarrier of the 127-length sync sequences

# x^24+x^23+x^21+x^20+x^17+x^15+x^13+x^12+x^8+x^4+x^2+x+1, zero-initialized register
CRC24C_POLY_BITS = np.array(
    [1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 1],
    dtype=np.uint8,
)

# Payload interleaving pattern over the 32-bit broadcast payload.
PAYLOAD_PERM_TABLE = (
    16, 23, 18, 17, 8, 30, 10, 6, 24, 7, 0, 5, 3, 2, 1, 4,
    9, 11, 12, 13, 14, 15, 19, 20, 21, 22, 25, 26, 27, 28, 29, 31,
)

_SFN_MSB_POS = tuple(range(1, 7))
_SFN_LSB_POS = tuple(range(24, 28))
_HRF_POS = 28
_BLOCK_INDEX_POS = (29, 30, 31)


@dataclass(frozen=True)
class CellIdentity:
    """Physical cell id 0..1007 with its two sync-sequence components."""

    n_cell_id: int

    def __post_init__(self) -> None:
        if not 0 <= self.n_cell_id <= 1007:
            raise ValueError(f"n_cell_id must be 0..1007, got {self.n_cell_id}")

    @property
    def n_id_1(self) -> int:
        return self.n_cell_id // 3

    @property
    def n_id_2(self) -> int:
        return self.n_cell_id % 3


@dataclass
class MibPayload:
    """Master information fields carried by the 32-bit broadcast payload."""

    sfn: int = 0
    scs_common: int = 15
    ssb_subcarrier_offset: int = 0
    dmrs_typeA_pos: int = 2
    pdcch_config_sib1: int = 0
    cell_barred: bool = False
    intra_freq_reselection: bool = False
    half_frame_bit: bool = False
    spare: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.sfn <= 1023:
            raise ValueError(f"sfn out of range 0..1023: {self.sfn}")
        if self.scs_common not in (15, 30, 60, 120):
            raise ValueError(f"scs_common must be one of 15/30/60/120 kHz: {self.scs_common}")
        if not 0 <= self.ssb_subcarrier_offset <= 31:
            raise ValueError(
                f"ssb_subcarrier_offset out of range 0..31: {self.ssb_subcarrier_offset}")
        if self.dmrs_typeA_pos not in (2, 3):
            raise ValueError(f"dmrs_typeA_pos must be 2 or 3: {self.dmrs_typeA_pos}")
        if not 0 <= self.pdcch_config_sib1 <= 255:
            raise ValueError(
                f"pdcch_config_sib1 out of range 0..255: {self.pdcch_config_sib1}")
        if self.spare not in (0, 1):
            raise ValueError(f"spare must be a single bit: {self.spare}")


def _int_to_bits(value: int, width: int) -> np.ndarray:
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


def _bits_to_int(bits: np.ndarray) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def build_mib_payload(mib: MibPayload) -> np.ndarray:
    """Pack the fields into the 32-bit payload per the bit table above."""
    a = np.zeros(PAYLOAD_BITS, dtype=np.uint8)
    a[1:7] = _int_to_bits(mib.sfn >> 4, 6)
    a[7] = 1 if mib.scs_common in (30, 120) else 0
    a[8:12] = _int_to_bits(mib.ssb_subcarrier_offset & 0xF, 4)
    a[12] = 1 if mib.dmrs_typeA_pos == 3 else 0
    a[13:21] = _int_to_bits(mib.pdcch_config_sib1, 8)
    a[21] = int(mib.cell_barred)
    a[22] = int(mib.intra_freq_reselection)
    a[23] = mib.spare
    a[24:28] = _int_to_bits(mib.sfn & 0xF, 4)
    a[28] = int(mib.half_frame_bit)
    a[29] = (mib.ssb_subcarrier_offset >> 4) & 1
    return a


def unpack_mib_payload(bits: np.ndarray, fr2: bool = False) -> MibPayload:
    """Inverse of build_mib_payload; fr2 selects the 60/120 kHz reading."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (PAYLOAD_BITS,):
        raise ValueError(f"expected {PAYLOAD_BITS} bits, got shape {bits.shape}")
    scs_flag = int(bits[7])
    scs = (60 if scs_flag == 0 else 120) if fr2 else (15 if scs_flag == 0 else 30)
    return MibPayload(
        sfn=(_bits_to_int(bits[1:7]) << 4) | _bits_to_int(bits[24:28]),
        scs_common=scs,
        ssb_subcarrier_offset=(int(bits[29]) << 4) | _bits_to_int(bits[8:12]),
        dmrs_typeA_pos=3 if bits[12] else 2,
        pdcch_config_sib1=_bits_to_int(bits[13:21]),
        cell_barred=bool(bits[21]),
        intra_freq_reselection=bool(bits[22]),
        half_frame_bit=bool(bits[28]),
        spare=int(bits[23]),
    )


# -- CRC ---------------------------------------------------------------------

def _crc24_remainder(bits: np.ndarray) -> np.ndarray:
    reg = np.concatenate([bits.astype(np.uint8), np.zeros(24, dtype=np.uint8)])
    for i in range(bits.size):
        if reg[i]:
            reg[i : i + 25] ^= CRC24C_POLY_BITS
    return reg[-24:]


def attach_crc24(payload: np.ndarray) -> np.ndarray:
    """Append the 24 CRC parity bits to a 32-bit payload."""
    payload = np.asarray(payload, dtype=np.uint8)
    if payload.shape != (PAYLOAD_BITS,):
        raise ValueError(f"expected {PAYLOAD_BITS} payload bits, got shape {payload.shape}")
    return np.concatenate([payload, _crc24_remainder(payload)])


def crc24_check(bits: np.ndarray) -> bool:
    """True when the 56-bit CRC-attached block has zero remainder."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.shape != (PAYLOAD_BITS + 24,):
        raise ValueError(f"expected {PAYLOAD_BITS + 24} bits, got shape {bits.shape}")
    reg = bits.copy()
    for i in range(PAYLOAD_BITS):
        if reg[i]:
            reg[i : i + 25] ^= CRC24C_POLY_BITS
    return not reg[-24:].any()


# -- payload interleaving and first scrambling --------------------------------

def payload_interleave_perm() -> np.ndarray:
    """Permutation perm with interleaved[perm[i]] = payload[i].

    Frame-number bits, the half-frame bit and the block-index/reserved tail
    each walk their own region of the pattern table; everything else takes
    the remaining slots in payload order.
    """
    counters = {"sfn": 0, "hrf": 10, "ssb": 11, "other": 14}
    perm = np.zeros(PAYLOAD_BITS, dtype=np.int64)
    for i in range(PAYLOAD_BITS):
        if i in _SFN_MSB_POS or i in _SFN_LSB_POS:
            cls = "sfn"
        elif i == _HRF_POS:
            cls = "hrf"
        elif i in _BLOCK_INDEX_POS:
            cls = "ssb"
        else:
            cls = "other"
        perm[i] = PAYLOAD_PERM_TABLE[counters[cls]]
        counters[cls] += 1
    return perm


_PAYLOAD_PERM = payload_interleave_perm()
# Bits left clear by the first scrambling: half-frame bit and the 2nd/3rd
# LSBs of the frame number, addressed in the interleaved domain.
_UNSCRAMBLED_PAYLOAD_POS = {
    int(_PAYLOAD_PERM[25]),  # frame number bit 2
    int(_PAYLOAD_PERM[26]),  # frame number bit 1
    int(_PAYLOAD_PERM[28]),  # half-frame bit
}


def unscrambled_positions(strict_standard: bool = True) -> tuple[int, int, int]:
    """Payload positions the first scrambling leaves clear.

    Returns (frame-number bit 2, frame-number bit 1, half-frame bit) in the
    domain the scrambler runs in: interleaved positions in strict mode,
    raw payload positions otherwise. A receiver reads the scrambling phase
    from the first two.
    """
    if strict_standard:
        return int(_PAYLOAD_PERM[25]), int(_PAYLOAD_PERM[26]), int(_PAYLOAD_PERM[28])
    return 25, 26, 28


def payload_scramble_sequence(n_cell_id: int, v: int,
                              positions: set[int] | None = None) -> np.ndarray:
    """32-bit first-scrambling mask at phase v in 0..3.

    Positions in ``positions`` (default: the standard unscrambled trio in
    the interleaved domain) stay zero so a receiver can read the phase
    back out of the decoded word.
    """
    if not 0 <= v <= 3:
        raise ValueError(f"scrambling phase must be 0..3, got {v}")
    skip = _UNSCRAMBLED_PAYLOAD_POS if positions is None else positions
    m = PAYLOAD_BITS - len(skip)
    c = gold_sequence(n_cell_id, (v + 1) * m)
    s = np.zeros(PAYLOAD_BITS, dtype=np.uint8)
    j = 0
    for i in range(PAYLOAD_BITS):
        if i not in skip:
            s[i] = c[v * m + j]
            j += 1
    return s


def scrambling_phase_of_sfn(sfn: int) -> int:
    """First-scrambling phase: the 2nd and 3rd LSBs of the frame number."""
    return (sfn >> 1) & 0b11


# -- channel coding ------------------------------------------------------------

_PBCH_CODE = PolarCode(k=56, e=CODED_BITS, n_max=9, input_interleave=True)
_PBCH_CODE_PLAIN = PolarCode(k=56, e=CODED_BITS, n_max=9, input_interleave=False)


def _code(strict_standard: bool = True) -> PolarCode:
    return _PBCH_CODE if strict_standard else _PBCH_CODE_PLAIN


def pbch_encode(bits56: np.ndarray, strict_standard: bool = True) -> np.ndarray:
    """56 CRC-attached bits -> 864 coded bits (polar N=512, repetition)."""
    bits56 = np.asarray(bits56, dtype=np.uint8)
    if bits56.shape != (56,):
        raise ValueError(f"expected 56 bits, got shape {bits56.shape}")
    return _code(strict_standard).encode(bits56)


# -- modulation ----------------------------------------------------------------

def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped QPSK: pairs (b0,b1) -> ((1-2b0) + j(1-2b1))/sqrt(2)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 2:
        raise ValueError(f"bit count must be even, got {bits.size}")
    i = 1.0 - 2.0 * bits[0::2]
    q = 1.0 - 2.0 * bits[1::2]
    return (i + 1j * q) / np.sqrt(2.0)


# -- resource grid -------------------------------------------------------------

def _pbch_symbol_subcarriers(symbol: int) -> np.ndarray:
    if symbol in (1, 3):
        return np.arange(GRID_SUBCARRIERS)
    if symbol == 2:
        return np.concatenate([np.arange(0, 48), np.arange(192, 240)])
    raise ValueError(f"no broadcast data on symbol {symbol}")


def pbch_re_masks(n_cell_id: int) -> tuple[np.ndarray, np.ndarray]:
    """(data_mask, dmrs_mask), each 240x4 boolean, pilot comb at cell id mod 4."""
    v = n_cell_id % 4
    data = np.zeros((GRID_SUBCARRIERS, GRID_SYMBOLS), dtype=bool)
    dmrs = np.zeros((GRID_SUBCARRIERS, GRID_SYMBOLS), dtype=bool)
    for sym in (1, 2, 3):
        k = _pbch_symbol_subcarriers(sym)
        pilot = (k % 4) == v
        dmrs[k[pilot], sym] = True
        data[k[~pilot], sym] = True
    return data, dmrs


@dataclass
class SsbGrid:
    """240-subcarrier x 4-symbol block grid with its RE bookkeeping masks.

    Mapping order for data and pilots is ascending subcarrier within
    symbol, symbols 1, 2, 3 in that order.
    """

    res: np.ndarray
    issb: int = 0
    dmrs_mask: np.ndarray = field(default=None)  # type: ignore[assignment]
    data_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.res = np.asarray(self.res, dtype=np.complex128)
        if self.res.shape != (GRID_SUBCARRIERS, GRID_SYMBOLS):
            raise ValueError(f"grid must be 240x4, got {self.res.shape}")
        if not 0 <= self.issb <= 3:
            raise ValueError(f"issb must be 0..3, got {self.issb}")

    def _ordered(self, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ks, ls = [], []
        for sym in (1, 2, 3):
            k = np.nonzero(mask[:, sym])[0]
            ks.append(k)
            ls.append(np.full(k.size, sym))
        return np.concatenate(ks), np.concatenate(ls)

    def extract_data(self) -> np.ndarray:
        k, l = self._ordered(self.data_mask)
        return self.res[k, l]

    def extract_dmrs(self) -> np.ndarray:
        k, l = self._ordered(self.dmrs_mask)
        return self.res[k, l]

    def scatter_data(self, symbols: np.ndarray) -> None:
        k, l = self._ordered(self.data_mask)
        self.res[k, l] = symbols

    def scatter_dmrs(self, symbols: np.ndarray) -> None:
        k, l = self._ordered(self.dmrs_mask)
        self.res[k, l] = symbols


def map_ssb_grid(
    symbols: np.ndarray,
    dmrs: np.ndarray,
    pss: np.ndarray,
    sss: np.ndarray,
    cell: CellIdentity,
    issb: int = 0,
) -> SsbGrid:
    """Place data, pilots and sync sequences onto a fresh grid."""
    symbols = np.asarray(symbols, dtype=np.complex128)
    dmrs = np.asarray(dmrs, dtype=np.complex128)
    if symbols.shape != (DATA_RE_COUNT,):
        raise ValueError(f"expected {DATA_RE_COUNT} data symbols, got {symbols.shape}")
    if dmrs.shape != (DMRS_RE_COUNT,):
        raise ValueError(f"expected {DMRS_RE_COUNT} pilots, got {dmrs.shape}")
    if len(pss) != 127 or len(sss) != 127:
        raise ValueError("sync sequences must have length 127")
    data_mask, dmrs_mask = pbch_re_masks(cell.n_cell_id)
    grid = SsbGrid(
        res=np.zeros((GRID_SUBCARRIERS, GRID_SYMBOLS), dtype=np.complex128),
        issb=issb, dmrs_mask=dmrs_mask, data_mask=data_mask,
    )
    grid.res[_SYNC_K0 : _SYNC_K0 + 127, 0] = pss
    grid.res[_SYNC_K0 : _SYNC_K0 + 127, 2] = sss
    grid.scatter_data(symbols)
    grid.scatter_dmrs(dmrs)
    return grid


# -- OFDM ----------------------------------------------------------------------

@dataclass(frozen=True)
class OfdmConfig:
    """Numerology: FFT size, subcarrier spacing and normal-CP length.

    The default 256-point FFT at 15 kHz gives the 3.84 MHz rate that fits
    the 5 MHz minimum channel bandwidth; the cyclic prefix scales from the
    2048-FFT reference length of 144 samples.
    """

    fft_size: int = 256
    scs_hz: float = 15e3
    cp_samples: int | None = None

    def __post_init__(self) -> None:
        if self.fft_size < GRID_SUBCARRIERS:
            raise ValueError(
                f"fft_size {self.fft_size} too small for {GRID_SUBCARRIERS} subcarriers")
        if self.cp_samples is None:
            object.__setattr__(self, "cp_samples", (144 * self.fft_size) // 2048)

    @property
    def sample_rate_hz(self) -> float:
        return self.fft_size * self.scs_hz

    @property
    def symbol_samples(self) -> int:
        return self.fft_size + self.cp_samples

    @property
    def ssb_samples(self) -> int:
        return GRID_SYMBOLS * self.symbol_samples

    def subcarrier_bins(self) -> np.ndarray:
        """FFT bin of each grid subcarrier (grid centered on DC)."""
        return (np.arange(GRID_SUBCARRIERS) - GRID_SUBCARRIERS // 2) % self.fft_size


def ofdm_modulate(grid: SsbGrid, cfg: OfdmConfig = OfdmConfig()) -> IqFrame:
    """Grid -> time-domain samples: per-symbol IFFT plus cyclic prefix."""
    bins = cfg.subcarrier_bins()
    out = np.zeros(cfg.ssb_samples, dtype=np.complex128)
    for sym in range(GRID_SYMBOLS):
        spec = np.zeros(cfg.fft_size, dtype=np.complex128)
        spec[bins] = grid.res[:, sym]
        t = np.fft.ifft(spec) * np.sqrt(cfg.fft_size)
        start = sym * cfg.symbol_samples
        out[start : start + cfg.cp_samples] = t[-cfg.cp_samples :]
        out[start + cfg.cp_samples : start + cfg.symbol_samples] = t
    return IqFrame(samples=out, sample_rate_hz=cfg.sample_rate_hz)


def ofdm_demodulate(samples: np.ndarray, cfg: OfdmConfig = OfdmConfig(),
                    start: int = 0) -> np.ndarray:
    """Time samples -> 240x4 grid, FFT windows placed right after each prefix."""
    samples = np.asarray(samples, dtype=np.complex128)
    need = start + GRID_SYMBOLS * cfg.symbol_samples
    if start < 0 or need > samples.size:
        raise ValueError(
            f"window [{start}, {need}) outside frame of {samples.size} samples")
    bins = cfg.subcarrier_bins()
    res = np.empty((GRID_SUBCARRIERS, GRID_SYMBOLS), dtype=np.complex128)
    for sym in range(GRID_SYMBOLS):
        w0 = start + sym * cfg.symbol_samples + cfg.cp_samples
        spec = np.fft.fft(samples[w0 : w0 + cfg.fft_size]) / np.sqrt(cfg.fft_size)
        res[:, sym] = spec[bins]
    return res


# -- full transmit chain ---------------------------------------------------------

def encode_pbch(mib: MibPayload, cell: CellIdentity, issb: int = 0,
                strict_standard: bool = True) -> np.ndarray:
    """Master-information fields -> 864 on-air coded bits."""
    a = build_mib_payload(mib)
    if strict_standard:
        interleaved = np.empty_like(a)
        interleaved[_PAYLOAD_PERM] = a
    else:
        interleaved = a
    skip = _UNSCRAMBLED_PAYLOAD_POS if strict_standard else {25, 26, 28}
    s = payload_scramble_sequence(cell.n_cell_id, scrambling_phase_of_sfn(mib.sfn), skip)
    scrambled = interleaved ^ s
    coded = pbch_encode(attach_crc24(scrambled), strict_standard)
    return scramble(coded, cell.n_cell_id, phase=issb % 4)


def build_ssb_grid(mib: MibPayload, cell: CellIdentity, issb: int = 0,
                   half_frame: int = 0, strict_standard: bool = True) -> SsbGrid:
    """Everything up to (and including) the resource grid."""
    bits = encode_pbch(mib, cell, issb, strict_standard)
    return map_ssb_grid(
        qpsk_modulate(bits),
        gen_dmrs(cell.n_cell_id, issb, half_frame),
        gen_pss(cell.n_id_2),
        gen_sss(cell.n_id_1, cell.n_id_2),
        cell,
        issb,
    )


def build_ssb_burst(
    grid: SsbGrid,
    cfg: OfdmConfig = OfdmConfig(),
    burst_len_s: float = 0.02,
    ssb_offset_s: float = 0.005,
) -> IqFrame:
    """Embed one modulated block in an otherwise silent burst.

    Default framing: a 20 ms burst (one block period) with the block at
    the 5 ms half-frame boundary.
    """
    wave = ofdm_modulate(grid, cfg)
    total = int(round(burst_len_s * cfg.sample_rate_hz))
    offset = int(round(ssb_offset_s * cfg.sample_rate_hz))
    if offset < 0 or offset + len(wave) > total:
        raise ValueError("block does not fit inside the requested burst")
    samples = np.zeros(total, dtype=np.complex128)
    samples[offset : offset + len(wave)] = wave.samples
    return IqFrame(samples=samples, sample_rate_hz=cfg.sample_rate_hz)
