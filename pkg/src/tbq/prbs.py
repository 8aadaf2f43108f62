"""Maximal-length PRBS generators used for active basis selection."""

from __future__ import annotations

import math

import numpy as np

# second feedback tap for x^n + x^k + 1; the first is always the MSB
TAPS = {7: 6, 9: 5}


class PrbsGenerator:
    """Fibonacci LFSR producing PRBS7 (x^7+x^6+1) or PRBS9 (x^9+x^5+1)."""

    def __init__(self, order: int, state: int | None = None):
        if order not in TAPS:
            raise ValueError(f"unsupported PRBS order {order}; choose from {sorted(TAPS)}")
        self.order = order
        self.tap = TAPS[order]
        self.mask = (1 << order) - 1
        self.state = self.mask if state is None else int(state)
        if self.state & self.mask == 0 or self.state != self.state & self.mask:
            raise ValueError("LFSR state must be a non-zero value of `order` bits")

    @property
    def period(self) -> int:
        return (1 << self.order) - 1

    def next_bit(self) -> int:
        if self.state == 0:
            raise ValueError("LFSR is stuck in the all-zero state")
        bit = ((self.state >> (self.order - 1)) ^ (self.state >> (self.tap - 1))) & 1
        self.state = ((self.state << 1) | bit) & self.mask
        return bit

    def bits(self, n: int) -> np.ndarray:
        return np.fromiter((self.next_bit() for _ in range(n)), dtype=np.int8, count=n)


def prbs_period_bits(order: int, state: int | None = None) -> np.ndarray:
    """One full period of the sequence starting from `state`."""
    gen = PrbsGenerator(order, state)
    return gen.bits(gen.period)


def measure_period(bits: np.ndarray) -> int:
    """Smallest p with bits[i] == bits[i + p] for all i (brute force)."""
    bits = np.asarray(bits)
    n = len(bits)
    for p in range(1, n):
        if np.array_equal(bits[p:], bits[: n - p]):
            return p
    return n


def joint_period(*orders: int) -> int:
    return math.lcm(*((1 << o) - 1 for o in orders))
