"""Secret-key length under asymptotic and finite-size phase-error bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from ..quantum import binary_entropy

__all__ = [
    "SecurityParams", "PhaseErrorBound", "SerflingBound", "ChernoffBound", "KeyLength",
    "key_length", "serfling_key_length", "chernoff_key_length", "asymptotic_fraction",
    "asymptotic_rate", "KeyRateReport", "key_rate_report", "binary_entropy", "kl_divergence",
]

BISECTION_TOL = 1e-10


@dataclass(frozen=True)
class SecurityParams:
    eps_sec: float = 1e-10
    eps_cor: float = 1e-10
    f_ec: float = 1.16

    def __post_init__(self):
        if not (0 < self.eps_sec < 1 and 0 < self.eps_cor < 1):
            raise ValueError("eps_sec and eps_cor must lie in (0, 1)")
        if self.f_ec < 1:
            raise ValueError("f_ec must be >= 1")

    @property
    def overhead_bits(self) -> float:
        return math.log2(2.0 / (self.eps_sec**2 * self.eps_cor))


class PhaseErrorBound(Protocol):
    name: str

    def upper(self, q_test: float, n_key: float, n_test: float, eps: float) -> float:
        """Upper confidence bound on the key-basis phase-error rate."""


@dataclass(frozen=True)
class SerflingBound:
    name: str = "serfling"

    def upper(self, q_test, n_key, n_test, eps):
        nu = math.sqrt((n_key + n_test) * (n_test + 1) / (n_key * n_test**2) * math.log(2.0 / eps))
        return q_test + nu


def kl_divergence(p: float, q: float) -> float:
    """Binary Kullback-Leibler divergence D(p || q) in nats."""
    out = 0.0
    if p > 0:
        out += p * math.log(p / q)
    if p < 1:
        out += (1 - p) * math.log((1 - p) / (1 - q))
    return out


@dataclass(frozen=True)
class ChernoffBound:
    name: str = "chernoff"

    def upper(self, q_test, n_key, n_test, eps):
        target = math.log(1.0 / eps) / n_test
        lo, hi = q_test, 1.0
        if target <= 0:
            return q_test
        # D(q || x) grows monotonically for x > q; find the smallest x reaching target
        while hi - lo > BISECTION_TOL:
            mid = 0.5 * (lo + hi)
            if mid >= 1.0 or kl_divergence(q_test, mid) >= target:
                hi = mid
            else:
                lo = mid
        return hi


@dataclass(frozen=True)
class KeyLength:
    bits: int
    q_upper: float
    aborted: bool

    def __int__(self) -> int:
        return self.bits


def _check_counts(n_key, n_test):
    if n_key <= 0 or n_test <= 0:
        raise ValueError("n_key and n_test must be positive")


def key_length(n_key: float, n_test: float, q_key: float, q_test: float,
               params: SecurityParams, bound: PhaseErrorBound) -> KeyLength:
    """l = floor(n_key (1 - h(Q_U)) - f n_key h(Q_key) - log2(2 / (eps_sec^2 eps_cor)))."""
    _check_counts(n_key, n_test)
    qu = bound.upper(q_test, n_key, n_test, params.eps_sec)
    if qu >= 0.5:
        return KeyLength(0, qu, True)
    ell = n_key * (1 - binary_entropy(qu)) - params.f_ec * n_key * binary_entropy(q_key) - params.overhead_bits
    if ell <= 0:
        return KeyLength(0, qu, True)
    return KeyLength(int(math.floor(ell)), qu, False)


def _block_args(block):
    return block.n_key, block.n_test, block.qber_key, block.qber_test


def serfling_key_length(block, params: SecurityParams = SecurityParams()) -> KeyLength:
    return key_length(*_block_args(block), params, SerflingBound())


def chernoff_key_length(block, params: SecurityParams = SecurityParams()) -> KeyLength:
    return key_length(*_block_args(block), params, ChernoffBound())


def asymptotic_fraction(q_key: float, q_test: float, f_ec: float = 1.16) -> float:
    return max(0.0, 1.0 - binary_entropy(q_test) - f_ec * binary_entropy(q_key))


def asymptotic_rate(sifted_rate_hz: float, q_key: float, q_test: float, f_ec: float = 1.16,
                    q: float = 1.0) -> float:
    """Key rate in the infinite-block limit.

    ``sifted_rate_hz`` is the key-basis sifted rate; ``q`` is an optional
    extra sifting factor for callers that pass a raw coincidence rate.
    """
    for name, v in (("q_key", q_key), ("q_test", q_test), ("q", q)):
        if not 0 <= v <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    return float(q * sifted_rate_hz * asymptotic_fraction(q_key, q_test, f_ec))


@dataclass(frozen=True)
class KeyRateReport:
    qber_key: float
    qber_test: float
    skr_asymptotic: float
    skr_serfling: float
    skr_chernoff: float
    block_size: float
    key_length_bits: dict = field(default_factory=dict)
    aborted: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "qber_key": self.qber_key,
            "qber_test": self.qber_test,
            "skr_asym": self.skr_asymptotic,
            "skr_serfling": self.skr_serfling,
            "skr_chernoff": self.skr_chernoff,
            "block_size": self.block_size,
        }
        for k, v in self.key_length_bits.items():
            out[f"key_length_{k}"] = v
        return out


def key_rate_report(block, params: SecurityParams = SecurityParams(), block_size: float | None = None) -> KeyRateReport:
    """Key rates for one acquisition, evaluated on blocks of ``block_size`` key bits.

    The test-basis count per block is scaled with the observed test/key ratio.
    Rates convert bits per block into bits per second with the observed
    key-basis sifted rate.
    """
    if block.acquisition_duration_s <= 0:
        raise ValueError("acquisition duration must be positive")
    key_rate = block.n_key / block.acquisition_duration_s
    asym = asymptotic_rate(key_rate, block.qber_key, block.qber_test, params.f_ec)
    n = float(block.n_key if block_size is None else block_size)
    lengths, aborted, rates = {}, {}, {}
    if n > 0 and block.n_test > 0 and block.n_key > 0:
        nt = n * block.n_test / block.n_key
        for bound in (SerflingBound(), ChernoffBound()):
            kl = key_length(n, nt, block.qber_key, block.qber_test, params, bound)
            lengths[bound.name], aborted[bound.name] = kl.bits, kl.aborted
            rates[bound.name] = kl.bits / n * key_rate
    else:
        for name in ("serfling", "chernoff"):
            lengths[name], aborted[name], rates[name] = 0, True, 0.0
    return KeyRateReport(block.qber_key, block.qber_test, asym, rates["serfling"], rates["chernoff"], n,
                         lengths, aborted)
