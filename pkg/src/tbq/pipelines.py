"""End-to-end measurement runs built from the simulator and the analyses."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .analysis import (
    CHSH_THETA_A,
    CHSH_THETA_B,
    DEFAULT_WINDOW_PS,
    FringeFit,
    chsh_s,
    correlator,
    fit_fringe,
    rounds_from_result,
    slot_layout,
)
from .device import ReceiverConfig, time_integrated_effects
from .events import ExperimentPlan, FixedPhase, iter_blocks
from .quantum import born_probability

FRINGE_PAIRS = ("A0B0", "A0B1", "A1B0", "A1B1")


def derive_seed(base: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(base), *path]).generate_state(1)[0])


def set_phases(plan: ExperimentPlan, theta_a: float, theta_b: float) -> ExperimentPlan:
    return replace(
        plan,
        basis_policy=FixedPhase(),
        alice=replace(plan.alice, receiver=plan.alice.receiver.with_phase(theta_a)),
        bob=replace(plan.bob, receiver=plan.bob.receiver.with_phase(theta_b)),
    )


def pair_table(plan: ExperimentPlan, window_ps: int = DEFAULT_WINDOW_PS, workers: int | None = None) -> np.ndarray:
    """2x2 round counts [[A0B0, A0B1], [A1B0, A1B1]] for one fixed setting."""
    rounds = rounds_from_result(iter_blocks(plan, workers), slot_layout(plan, window_ps))
    return rounds.pair_counts()


@dataclass(frozen=True)
class FringeScan:
    theta: np.ndarray
    counts: np.ndarray  # (n_points, 2, 2)
    fits: dict

    @property
    def visibility(self) -> float:
        return float(np.mean([f.visibility for f in self.fits.values()]))

    @property
    def sigma_visibility(self) -> float:
        s = np.array([f.sigma_visibility for f in self.fits.values()])
        return float(np.sqrt(np.sum(s**2)) / len(s))

    @property
    def bell_sigma(self) -> float:
        return (self.visibility - 1 / np.sqrt(2)) / self.sigma_visibility

    def curves(self) -> dict:
        flat = self.counts.reshape(len(self.theta), 4)
        return {name: flat[:, k] for k, name in enumerate(FRINGE_PAIRS)}


def fringe_scan(plan: ExperimentPlan, thetas, theta_b: float = 0.0, window_ps: int = DEFAULT_WINDOW_PS,
                workers: int | None = None) -> FringeScan:
    """Sweep Alice's phase with Bob fixed; one independent run per point."""
    thetas = np.asarray(thetas, dtype=float)
    counts = np.empty((thetas.size, 2, 2), dtype=np.int64)
    for i, th in enumerate(thetas):
        p = replace(set_phases(plan, th, theta_b), seed=derive_seed(plan.seed, i))
        counts[i] = pair_table(p, window_ps, workers)
    flat = counts.reshape(thetas.size, 4)
    fits = {name: fit_fringe(thetas, flat[:, k]) for k, name in enumerate(FRINGE_PAIRS)}
    return FringeScan(thetas, counts, fits)


@dataclass(frozen=True)
class ChshRun:
    counts: dict  # (i, j) -> 2x2 table
    s: float
    sigma_s: float

    def correlators(self) -> dict:
        return {k: correlator(v) for k, v in self.counts.items()}


def chsh_run(plan: ExperimentPlan, window_ps: int = DEFAULT_WINDOW_PS, workers: int | None = None) -> ChshRun:
    counts = {}
    for i, ta in enumerate(CHSH_THETA_A):
        for j, tb in enumerate(CHSH_THETA_B):
            p = replace(set_phases(plan, ta, tb), seed=derive_seed(plan.seed, i, j))
            counts[(i, j)] = pair_table(p, window_ps, workers)
    s, sig = chsh_s(counts)
    return ChshRun(counts, s, sig)


def chsh_probability_tables(rho: np.ndarray, receiver_a: ReceiverConfig, receiver_b: ReceiverConfig) -> dict:
    """Exact Born-rule outcome tables at the four CHSH settings."""
    out = {}
    for i, ta in enumerate(CHSH_THETA_A):
        for j, tb in enumerate(CHSH_THETA_B):
            ea = time_integrated_effects(receiver_a.with_phase(ta))
            eb = time_integrated_effects(receiver_b.with_phase(tb))
            out[(i, j)] = np.array([[born_probability(rho, np.kron(ea[pa], eb[pb])) for pb in ("plus", "minus")]
                                    for pa in ("plus", "minus")])
    return out


def analytic_chsh(rho: np.ndarray, receiver_a: ReceiverConfig, receiver_b: ReceiverConfig) -> float:
    return chsh_s(chsh_probability_tables(rho, receiver_a, receiver_b))[0]


__all__ = [
    "FRINGE_PAIRS", "FringeFit", "FringeScan", "ChshRun", "derive_seed", "set_phases", "pair_table",
    "fringe_scan", "chsh_run", "chsh_probability_tables", "analytic_chsh",
]
