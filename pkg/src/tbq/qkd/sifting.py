"""Basis reconciliation and QBER counting for BBM92 rounds."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..analysis import ClickTable, Rounds, SlotLayout, collect_rounds, slot_layout
from ..events import (
    CHANNELS,
    ActivePrbs,
    BasisSchedule,
    ExperimentPlan,
    FixedPhase,
    PassiveSplit,
    receiver_basis,
)
from ..quantum import binary_entropy

Z_GRID_PS = tuple(range(10, 51, 2))


@dataclass(frozen=True)
class SiftedBlock:
    n_key: int
    n_test: int
    e_key: int
    e_test: int
    key_basis: str
    test_basis: str
    acquisition_duration_s: float
    n_rounds: int = 0  # rounds with one click per side, before basis matching
    per_basis: dict = field(default_factory=dict)  # basis -> (n, e)

    def __post_init__(self):
        if not (0 <= self.e_key <= self.n_key and 0 <= self.e_test <= self.n_test):
            raise ValueError("error counts must lie in [0, n]")

    @property
    def qber_key(self) -> float:
        return self.e_key / self.n_key if self.n_key else 0.0

    @property
    def qber_test(self) -> float:
        return self.e_test / self.n_test if self.n_test else 0.0

    @property
    def sifting_factor(self) -> float:
        """Fraction of single-click rounds kept because the bases matched."""
        kept = sum(n for n, _ in self.per_basis.values())
        return kept / self.n_rounds if self.n_rounds else 0.0

    def scaled(self, factor: float) -> "SiftedBlock":
        """Same QBERs with counts scaled (used for analytic block sizes)."""
        return SiftedBlock(int(round(self.n_key * factor)), int(round(self.n_test * factor)),
                           int(round(self.e_key * factor)), int(round(self.e_test * factor)),
                           self.key_basis, self.test_basis, self.acquisition_duration_s * factor)


def default_roles(plan: ExperimentPlan) -> tuple[str, str]:
    """(key basis, test basis) for a plan's basis policy."""
    policy = plan.basis_policy
    if isinstance(policy, PassiveSplit):
        return "Z", "X"
    if isinstance(policy, ActivePrbs):
        return "Y", "X"
    return receiver_basis(plan.alice.receiver), "X"


_CHANNEL_NAMES = np.array(CHANNELS)


def _fixed_bases(plan: ExperimentPlan, side: str, n: int) -> np.ndarray:
    return np.full(n, receiver_basis(plan.station(side).receiver), dtype="<U5")


def round_bases(plan: ExperimentPlan, rounds: Rounds, schedule: BasisSchedule | None = None):
    """Basis label of each round for Alice and Bob."""
    policy = plan.basis_policy
    out = []
    for side, chan in (("A", rounds.a_channel), ("B", rounds.b_channel)):
        if isinstance(policy, PassiveSplit):
            is_z = np.char.endswith(_CHANNEL_NAMES[chan], "Z")
            x_label = receiver_basis(plan.station(side).receiver)
            out.append(np.where(is_z, "Z", x_label))
        elif isinstance(policy, ActivePrbs):
            if schedule is None:
                schedule = BasisSchedule(policy.order_a, policy.order_b)
            bits = schedule.bits(side, rounds.cycle)
            out.append(np.where(bits == 1, "Y", "X"))
        else:
            out.append(_fixed_bases(plan, side, len(rounds)))
    return out[0], out[1]


def round_bits(rounds: Rounds, bases_a: np.ndarray, bases_b: np.ndarray, bin_separation_ps: int):
    """Raw bit values.  X/Y: port 0 or 1.  Z on a bare detector: early slot
    0, late slot 1.  Z through a Reverse receiver: the late slot (2T) carries
    |0> and the early slot |1>.

    Bob's Y bits are flipped: P(theta) x P(theta) at theta = pi/2 on |Phi+>
    anti-correlates the same-index ports.
    """
    def side_bits(chan, slot, bases):
        names = _CHANNEL_NAMES[chan]
        port = np.char.endswith(names, "1").astype(np.int8)
        bare = np.char.endswith(names, "Z")
        z = np.where(bare, slot >= bin_separation_ps, slot == 0).astype(np.int8)
        return np.where(bases == "Z", z, port)

    ba = side_bits(rounds.a_channel, rounds.a_slot, bases_a)
    bb = side_bits(rounds.b_channel, rounds.b_slot, bases_b)
    bb = np.where(bases_b == "Y", 1 - bb, bb)
    return ba, bb


def sift(plan: ExperimentPlan, rounds: Rounds, schedule: BasisSchedule | None = None,
         roles: tuple[str, str] | None = None, duration_s: float | None = None) -> SiftedBlock:
    """Keep rounds with matching bases and count bit disagreements per basis."""
    key_b, test_b = roles or default_roles(plan)
    bases_a, bases_b = round_bases(plan, rounds, schedule)
    ba, bb = round_bits(rounds, bases_a, bases_b, plan.pump.bin_separation_ps)
    match = bases_a == bases_b
    per = {}
    for b in np.unique(bases_a[match]):
        sel = match & (bases_a == b)
        per[str(b)] = (int(sel.sum()), int(np.count_nonzero(ba[sel] != bb[sel])))
    nk, ek = per.get(key_b, (0, 0))
    nt, et = per.get(test_b, (0, 0))
    dur = plan.duration_s if duration_s is None else duration_s
    return SiftedBlock(nk, nt, ek, et, key_b, test_b, dur, len(rounds), per)


def sift_streams(plan: ExperimentPlan, streams, layout: SlotLayout | None = None, **kw) -> SiftedBlock:
    layout = layout or slot_layout(plan)
    return sift(plan, collect_rounds(streams, layout), **kw)


@dataclass(frozen=True)
class ZWindowResult:
    half_width_ps: int
    grid_ps: tuple
    scores: tuple
    qber_z: tuple
    n_key: tuple

    @property
    def best_qber(self) -> float:
        return self.qber_z[self.grid_ps.index(self.half_width_ps)]


def z_window_score(n_key: int, q: float, f_ec: float = 1.16) -> float:
    return n_key * (1.0 - f_ec * binary_entropy(q))


def optimize_z_window(plan: ExperimentPlan, streams, grid_ps=Z_GRID_PS, f_ec: float = 1.16) -> ZWindowResult:
    """Grid search over Z-slot half-widths maximizing n_key (1 - f h(Q_Z)).

    Ties go to the widest window.
    """
    if not any(v.size for v in streams.values()):
        raise ValueError("empty calibration sample")
    grid = tuple(int(g) for g in grid_ps)
    table = ClickTable(streams, slot_layout(plan))
    scores, qs, ns = [], [], []
    for hw in grid:
        block = sift(plan, table.rounds(slot_layout(plan, z_half_width_ps=hw)), roles=("Z", "X"))
        ns.append(block.n_key)
        qs.append(block.qber_key)
        scores.append(z_window_score(block.n_key, block.qber_key, f_ec))
    best = max(range(len(grid)), key=lambda i: (scores[i], grid[i]))
    return ZWindowResult(grid[best], grid, tuple(scores), tuple(qs), tuple(ns))
