"""Complex baseband sample container shared by the TX, channel and RX stages."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class IqFrame:
    """Unit-scale complex baseband samples plus capture metadata.

    samples are complex128; sample_rate_hz must be positive and the frame
    non-empty. gain_db is optional capture metadata carried through untouched.
    """

    samples: np.ndarray
    sample_rate_hz: float
    center_freq_hz: float = 0.0
    gain_db: float | None = None

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("IqFrame requires a non-empty 1-D sample vector")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    def __len__(self) -> int:
        return self.samples.size

    def with_samples(self, samples: np.ndarray) -> "IqFrame":
        """Copy of this frame carrying new samples, metadata unchanged."""
        return replace(self, samples=samples)
