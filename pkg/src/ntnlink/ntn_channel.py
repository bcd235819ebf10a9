"""Synthetic satellite-link impairments: delay, carrier offset, and noise.

One channel realization applies, in physical order, an integer-plus-
fractional propagation delay (the geostationary path), a carrier frequency
offset drawn uniformly within one subcarrier spacing, and white Gaussian
noise calibrated to a target per-sample SNR over the occupied samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frame import IqFrame

__all__ = [
    "ChannelProfile", "draw_profile", "apply_cfo", "apply_delay",
    "apply_awgn", "simulate", "occupied_power",
]

SINC_TAPS = 64  # Hann-windowed interpolator length
_OCCUPIED_REL_POWER = 1e-3  # sample counts as occupied above this fraction of peak


@dataclass(frozen=True)
class ChannelProfile:
    """One realization: SNR, carrier offset, split delay and the noise seed."""

    snr_db: float
    cfo_hz: float = 0.0
    integer_delay_samples: int = 0
    fractional_delay_samples: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.fractional_delay_samples < 1.0:
            raise ValueError(
                f"fractional delay must be in [0,1), got {self.fractional_delay_samples}")
        if self.integer_delay_samples < 0:
            raise ValueError("integer delay must be non-negative")
        if not (math.isfinite(self.snr_db) or self.snr_db == math.inf):
            raise ValueError(f"snr_db must be finite or +inf, got {self.snr_db}")


def draw_profile(
    seed: int,
    scs_hz: float,
    sample_rate_hz: float,
    snr_db: float,
    geo_delay_range_s: tuple[float, float] = (0.0, 1e-3),
) -> ChannelProfile:
    """Draw one realization: CFO ~ U(-scs/2, scs/2), delay ~ U(range).

    The total delay splits into integer and fractional sample parts at the
    given sample rate. Only the sub-frame remainder of the geostationary
    path matters to a per-burst simulator, hence the short default range.
    """
    if scs_hz <= 0:
        raise ValueError(f"scs_hz must be positive, got {scs_hz}")
    lo, hi = geo_delay_range_s
    if lo < 0 or hi < lo:
        raise ValueError(f"invalid delay range {geo_delay_range_s}")
    rng = np.random.default_rng(seed)
    cfo = rng.uniform(-scs_hz / 2, scs_hz / 2)
    delay_samples = rng.uniform(lo, hi) * sample_rate_hz
    int_delay = int(np.floor(delay_samples))
    return ChannelProfile(
        snr_db=snr_db,
        cfo_hz=cfo,
        integer_delay_samples=int_delay,
        fractional_delay_samples=delay_samples - int_delay,
        seed=seed,
    )


def apply_cfo(frame: IqFrame, cfo_hz: float) -> IqFrame:
    """Rotate sample n by exp(j 2 pi cfo n / fs); magnitudes unchanged."""
    if cfo_hz == 0.0:
        return frame.with_samples(frame.samples.copy())
    n = np.arange(len(frame))
    rot = np.exp(2j * np.pi * cfo_hz * n / frame.sample_rate_hz)
    return frame.with_samples(frame.samples * rot)


def _fractional_delay_kernel(mu: float) -> np.ndarray:
    """Hann-windowed sinc taps delaying by mu in [0,1) samples."""
    k = np.arange(SINC_TAPS) - (SINC_TAPS // 2 - 1)  # -31 .. 32
    window = np.hanning(SINC_TAPS + 2)[1:-1]
    return window * np.sinc(k - mu)


def apply_delay(frame: IqFrame, integer_delay: int, fractional_delay: float) -> IqFrame:
    """Shift by whole samples (zero-filled head) plus interpolated fraction."""
    if integer_delay < 0:
        raise ValueError("integer delay must be non-negative")
    if not 0.0 <= fractional_delay < 1.0:
        raise ValueError(f"fractional delay must be in [0,1), got {fractional_delay}")
    x = frame.samples
    if fractional_delay != 0.0:
        h = _fractional_delay_kernel(fractional_delay)
        x = np.convolve(x, h)[SINC_TAPS // 2 - 1 : SINC_TAPS // 2 - 1 + x.size]
    if integer_delay:
        shifted = np.zeros_like(x)
        shifted[integer_delay:] = x[: x.size - integer_delay]
        x = shifted
    elif fractional_delay == 0.0:
        x = x.copy()
    return frame.with_samples(x)


def occupied_power(samples: np.ndarray) -> float:
    """Mean power over samples carrying signal (above 1e-3 of peak power)."""
    p = np.abs(samples) ** 2
    peak = p.max()
    if peak == 0.0:
        return 0.0
    mask = p > _OCCUPIED_REL_POWER * peak
    return float(p[mask].mean())


def apply_awgn(frame: IqFrame, snr_db: float, seed: int) -> IqFrame:
    """Add circular complex Gaussian noise at the target per-sample SNR.

    Noise variance is measured occupied signal power / 10^(snr/10) and is
    added across the whole frame. snr_db = +inf is the no-noise sentinel.
    """
    if snr_db == math.inf:
        return frame.with_samples(frame.samples.copy())
    power = occupied_power(frame.samples)
    if power == 0.0:
        raise ValueError("cannot set an SNR on a zero-power frame")
    sigma2 = power / 10.0 ** (snr_db / 10.0)
    rng = np.random.default_rng(seed)
    noise = np.sqrt(sigma2 / 2.0) * (
        rng.standard_normal(len(frame)) + 1j * rng.standard_normal(len(frame))
    )
    return frame.with_samples(frame.samples + noise)


def simulate(frame: IqFrame, profile: ChannelProfile) -> IqFrame:
    """Delay, then carrier offset, then noise; deterministic under the seed."""
    out = apply_delay(frame, profile.integer_delay_samples, profile.fractional_delay_samples)
    out = apply_cfo(out, profile.cfo_hz)
    return apply_awgn(out, profile.snr_db, profile.seed)
