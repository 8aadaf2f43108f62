"""Pulsed SFWM pair source: prepared biphoton state and pair-number statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .quantum import SYMMETRIC_PREP, TimeBinPreparation


@dataclass(frozen=True)
class PumpConfig:
    rep_rate_hz: float = 1e9
    bin_separation_ps: int = 100
    prep: TimeBinPreparation = field(default_factory=lambda: SYMMETRIC_PREP)
    pulse_fwhm_ps: float = 9.2

    def __post_init__(self):
        if self.rep_rate_hz <= 0 or self.bin_separation_ps <= 0:
            raise ValueError("rep_rate_hz and bin_separation_ps must be positive")
        if 2 * self.bin_separation_ps >= self.period_ps:
            raise ValueError("early/late pattern does not fit in one clock period")
        if not 0 <= self.pulse_fwhm_ps < self.bin_separation_ps:
            raise ValueError("pulse_fwhm_ps must be below the bin separation")

    @property
    def period_ps(self) -> int:
        return int(round(1e12 / self.rep_rate_hz))


@dataclass(frozen=True)
class PairStatistics:
    mu: float = 0.01  # mean pairs per clock cycle

    def __post_init__(self):
        if not 0.0 <= self.mu < 0.5:
            raise ValueError(f"mu={self.mu!r} outside the supported range [0, 0.5)")


def prepared_state(prep: TimeBinPreparation) -> np.ndarray:
    """alpha|00> + beta e^{i theta_s}|11>."""
    return np.array([prep.alpha, 0.0, 0.0, prep.beta * np.exp(1j * prep.theta_s)], dtype=complex)


def sample_pairs(stats: PairStatistics, rng: np.random.Generator, n_cycles: int = 1) -> np.ndarray:
    """Pair count per clock cycle, Poisson with mean mu."""
    return rng.poisson(stats.mu, size=n_cycles)


@dataclass(frozen=True)
class CarResult:
    car: float
    signal: int
    accidentals: int
    lower_bound: bool  # True when no accidentals were seen; car is then inf

    @property
    def car_lower_bound(self) -> float:
        return float(self.signal) / max(self.accidentals, 1)


def car_estimate(stream_a: np.ndarray, stream_b: np.ndarray, window_ps: int, period_ps: int) -> CarResult:
    """Coincidence-to-accidental ratio.

    Signal counts are coincidences at zero delay, accidentals those with one
    stream shifted by a clock period.
    """
    from .analysis import count_coincidences

    sig = count_coincidences(stream_a, stream_b, window_ps, 0).total
    acc = count_coincidences(stream_a, stream_b, window_ps, period_ps).total
    if acc == 0:
        return CarResult(math.inf, sig, 0, True)
    return CarResult(sig / acc, sig, acc, False)


def mu_for_car(target_car: float) -> float:
    """First-order guess: accidentals per true coincidence is about mu."""
    if target_car <= 1:
        raise ValueError("target CAR must exceed 1")
    return 1.0 / (target_car - 1.0)
