"""Pseudo-random and synchronization sequences of the NR downlink.

Gold sequence per TS 38.211 5.2.1, PSS/SSS per 7.4.2, PBCH DMRS per 7.4.1.4
and the generic scrambling XOR used by the broadcast-channel bit chain.
"""

from __future__ import annotations

import numpy as np

_NC = 1600  # Gold sequence warm-up offset


def gold_sequence(c_init: int, length: int, offset: int = 0) -> np.ndarray:
    """Length-31 Gold sequence c(offset) .. c(offset+length-1) as uint8 bits.

    x1 starts at 0b1, x2 is loaded with c_init (LSB first); both advance
    through the 1600-step warm-up before output is taken.
    """
    if not 0 <= c_init < 2**31:
        raise ValueError(f"c_init out of range: {c_init}")
    if length < 0 or offset < 0:
        raise ValueError("length and offset must be non-negative")
    total = length + offset
    n = total + _NC + 31
    x1 = np.zeros(n, dtype=np.uint8)
    x2 = np.zeros(n, dtype=np.uint8)
    x1[0] = 1
    for i in range(31):
        x2[i] = (c_init >> i) & 1
    # Both recurrences reach back at least 28 samples, so blocks of 28
    # outputs can be produced with whole-array XORs.
    i = 0
    while i < n - 31:
        j = min(i + 28, n - 31)
        x1[i + 31 : j + 31] = x1[i + 3 : j + 3] ^ x1[i:j]
        x2[i + 31 : j + 31] = (
            x2[i + 3 : j + 3] ^ x2[i + 2 : j + 2] ^ x2[i + 1 : j + 1] ^ x2[i:j]
        )
        i = j
    return (x1[_NC + offset : _NC + total] ^ x2[_NC + offset : _NC + total]).astype(np.uint8)


def gen_pss(n_id_2: int) -> np.ndarray:
    """127-entry BPSK primary synchronization sequence for n_id_2 in 0..2."""
    if n_id_2 not in (0, 1, 2):
        raise ValueError(f"n_id_2 must be 0..2, got {n_id_2}")
    x = np.zeros(127, dtype=np.int8)
    x[:7] = [0, 1, 1, 0, 1, 1, 1]
    for i in range(127 - 7):
        x[i + 7] = x[i + 4] ^ x[i]
    shift = (np.arange(127) + 43 * n_id_2) % 127
    return (1 - 2 * x[shift]).astype(np.float64)


def gen_sss(n_id_1: int, n_id_2: int) -> np.ndarray:
    """127-entry BPSK secondary synchronization sequence."""
    if not 0 <= n_id_1 <= 335:
        raise ValueError(f"n_id_1 must be 0..335, got {n_id_1}")
    if n_id_2 not in (0, 1, 2):
        raise ValueError(f"n_id_2 must be 0..2, got {n_id_2}")
    x0 = np.zeros(127, dtype=np.int8)
    x1 = np.zeros(127, dtype=np.int8)
    x0[:7] = [1, 0, 0, 0, 0, 0, 0]
    x1[:7] = [1, 0, 0, 0, 0, 0, 0]
    for i in range(127 - 7):
        x0[i + 7] = x0[i + 4] ^ x0[i]
        x1[i + 7] = x1[i + 1] ^ x1[i]
    m0 = 15 * (n_id_1 // 112) + 5 * n_id_2
    m1 = n_id_1 % 112
    n = np.arange(127)
    return ((1 - 2 * x0[(n + m0) % 127]) * (1 - 2 * x1[(n + m1) % 127])).astype(np.float64)


def gen_dmrs(n_cell_id: int, issb: int = 0, half_frame: int = 0, l_max: int = 4) -> np.ndarray:
    """144 QPSK pilot symbols for the broadcast-channel DMRS.

    The Gold seed folds the cell id and the block index; for l_max=4 the
    half-frame bit extends the effective index.
    """
    if not 0 <= n_cell_id <= 1007:
        raise ValueError(f"n_cell_id must be 0..1007, got {n_cell_id}")
    if half_frame not in (0, 1):
        raise ValueError(f"half_frame must be 0 or 1, got {half_frame}")
    if l_max == 4:
        if not 0 <= issb <= 3:
            raise ValueError(f"issb must be 0..3 for l_max=4, got {issb}")
        ibar = issb % 4 + 4 * half_frame
    else:
        if not 0 <= issb < l_max:
            raise ValueError(f"issb must be 0..{l_max - 1}, got {issb}")
        ibar = issb % 8
    c_init = (
        2**11 * (ibar + 1) * (n_cell_id // 4 + 1) + 2**6 * (ibar + 1) + n_cell_id % 4
    )
    c = gold_sequence(c_init, 2 * 144).astype(np.float64)
    return ((1 - 2 * c[0::2]) + 1j * (1 - 2 * c[1::2])) / np.sqrt(2.0)


def scrambling_sequence(n_cell_id: int, length: int, phase: int = 0) -> np.ndarray:
    """Gold scrambling bits seeded by the cell id, taken at phase*length offset."""
    if phase < 0:
        raise ValueError(f"phase must be non-negative, got {phase}")
    return gold_sequence(n_cell_id, length, offset=phase * length)


def scramble(bits: np.ndarray, n_cell_id: int, phase: int = 0) -> np.ndarray:
    """XOR a bit vector with the cell-seeded scrambling sequence (involution)."""
    bits = np.asarray(bits, dtype=np.uint8)
    seq = scrambling_sequence(n_cell_id, bits.size, phase)
    return bits ^ seq
