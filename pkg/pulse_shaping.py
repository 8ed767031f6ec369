"""
Raised-cosine pulse used to sample cluster rays onto channel taps
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PulseShape:
    """Analytic raised-cosine pulse p(t) with symbol period `period` (s)"""
    roll_off: float = 1.0
    period: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.roll_off <= 1.0:
            raise ValueError(f"roll_off must be in [0, 1], got {self.roll_off}")
        if self.period <= 0:
            raise ValueError(f"period must be positive, got {self.period}")

    def __call__(self, t):
        """
        Evaluate the pulse at arbitrary real times (seconds).
        Accepts scalars or arrays and returns the same shape.
        """
        x = np.asarray(t, dtype=float) / self.period
        beta = self.roll_off
        h = np.sinc(x)
        if beta == 0.0:
            return h

        denom = 1.0 - (2.0 * beta * x) ** 2
        singular = np.isclose(np.abs(x), 1.0 / (2.0 * beta), rtol=0.0, atol=1e-12)
        safe = np.where(singular, 1.0, denom)
        h = h * np.cos(np.pi * beta * x) / safe
        # limit value at |t| = T/(2*beta)
        return np.where(singular, (np.pi / 4.0) * np.sinc(1.0 / (2.0 * beta)), h)

    @classmethod
    def for_bandwidth(cls, bandwidth, roll_off=1.0):
        """Pulse sampled at Ts = 1/bandwidth"""
        return cls(roll_off=roll_off, period=1.0 / bandwidth)
