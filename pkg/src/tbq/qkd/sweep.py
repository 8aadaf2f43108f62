"""Key rate and QBER versus added channel loss."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..analysis import rounds_from_result, slot_layout
from ..events import ExperimentPlan, basis_schedule, iter_blocks, worker_count
from .bounds import KeyRateReport, SecurityParams, key_rate_report
from .sifting import SiftedBlock, sift

DB_PER_KM = 0.2
SWEEP_COLUMNS = ("loss_db", "fiber_km_equiv", "qber_key", "qber_test", "skr_asym", "skr_serfling",
                 "skr_chernoff", "block_size")


@dataclass(frozen=True)
class SweepPoint:
    loss_db: float
    duration_s: float
    block: SiftedBlock
    report: KeyRateReport

    @property
    def fiber_km_equiv(self) -> float:
        return self.loss_db / DB_PER_KM

    def row(self) -> dict:
        r = self.report
        return {
            "loss_db": self.loss_db,
            "fiber_km_equiv": self.fiber_km_equiv,
            "qber_key": r.qber_key,
            "qber_test": r.qber_test,
            "skr_asym": r.skr_asymptotic,
            "skr_serfling": r.skr_serfling,
            "skr_chernoff": r.skr_chernoff,
            "block_size": r.block_size,
        }


def add_bob_loss(plan: ExperimentPlan, extra_db: float) -> ExperimentPlan:
    ch = plan.bob.channel
    return replace(plan, bob=replace(plan.bob, channel=replace(ch, loss_db=ch.loss_db + extra_db)))


def acquire(plan: ExperimentPlan, z_half_width_ps: int | None = None, workers: int | None = None) -> SiftedBlock:
    """Simulate a plan block by block and sift it without keeping the raw tags."""
    layout = slot_layout(plan, z_half_width_ps=z_half_width_ps)
    rounds = rounds_from_result(iter_blocks(plan, workers), layout)
    return sift(plan, rounds, basis_schedule(plan))


def _point_seed(base: int, index: int) -> int:
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def skr_vs_loss_sweep(template: ExperimentPlan, losses_db, params: SecurityParams = SecurityParams(),
                      block_size: float | None = None, z_half_width_ps: int | None = None,
                      target_test_events: int = 300, pilot_s: float = 0.1, max_duration_s: float = 20.0,
                      workers: int | None = None) -> list[SweepPoint]:
    """One simulation per added-loss point on Bob's link.

    A pilot at zero added loss measures the test-basis sifted rate; each
    point then runs long enough to collect about ``target_test_events``
    sifted test rounds at its expected (loss-scaled) rate, capped at
    ``max_duration_s``.  Point ``i`` uses seed (template seed, i) so results
    do not depend on how points are scheduled.
    """
    losses = [float(x) for x in losses_db]
    if any(x < 0 for x in losses):
        raise ValueError("added loss must be >= 0 dB")
    pilot = acquire(replace(template, duration_s=pilot_s, seed=_point_seed(template.seed, -1 % 2**32)),
                    z_half_width_ps, workers=1)
    rate0 = pilot.n_test / pilot_s

    def run(i, loss):
        plan = replace(add_bob_loss(template, loss), seed=_point_seed(template.seed, i))
        rate = rate0 * 10 ** (-loss / 10)
        dur = max_duration_s if rate <= 0 else min(max_duration_s, target_test_events / rate)
        # whole multiples of the pilot length keep the cycle count exact
        dur = max(template.duration_s, float(np.ceil(dur / pilot_s) * pilot_s))
        block = acquire(replace(plan, duration_s=dur), z_half_width_ps, workers=1)
        return SweepPoint(loss, dur, block, key_rate_report(block, params, block_size))

    n_workers = worker_count() if workers is None else max(1, workers)
    if n_workers == 1:
        return [run(i, x) for i, x in enumerate(losses)]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(lambda a: run(*a), enumerate(losses)))
