"""BBM92 post-processing: sifting, finite-key bounds and loss sweeps."""

from .bounds import (
    ChernoffBound,
    KeyLength,
    KeyRateReport,
    SecurityParams,
    SerflingBound,
    asymptotic_fraction,
    asymptotic_rate,
    binary_entropy,
    chernoff_key_length,
    key_length,
    key_rate_report,
    kl_divergence,
    serfling_key_length,
)
from .sifting import SiftedBlock, ZWindowResult, optimize_z_window, sift, sift_streams
from .sweep import SWEEP_COLUMNS, SweepPoint, acquire, skr_vs_loss_sweep

__all__ = [
    "ChernoffBound", "KeyLength", "KeyRateReport", "SecurityParams", "SerflingBound",
    "asymptotic_fraction", "asymptotic_rate", "binary_entropy", "chernoff_key_length", "key_length",
    "key_rate_report", "kl_divergence", "serfling_key_length", "SiftedBlock", "ZWindowResult",
    "optimize_z_window", "sift", "sift_streams", "SWEEP_COLUMNS", "SweepPoint", "acquire", "skr_vs_loss_sweep",
]
