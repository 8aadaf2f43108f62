"""Monte Carlo time-tag generator.

Pairs are emitted once per clock cycle with Poisson statistics.  Instead of
looping over cycles, each (route, survival) class is drawn as an independent
Poisson process over the block (Poisson thinning), so the cost scales with
the number of detected photons rather than with the number of clock cycles.

The cycle range is cut into fixed-size blocks.  Block ``k`` always draws from
its own substream ``SeedSequence(seed, spawn_key=(k,))``, which makes the
output independent of how many workers process the blocks.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .device import ReceiverConfig, SwitchMode, receiver_effects, theta_total, transmission
from .prbs import prbs_period_bits
from .quantum import KET0, KET1, density_matrix, partial_trace, projector
from .source import PairStatistics, PumpConfig, prepared_state

log = logging.getLogger(__name__)

FWHM_TO_SIGMA = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))  # 1/2.3548

CHANNELS = ("A0", "A1", "AZ", "B0", "B1", "BZ")
CHANNEL_CODE = {name: i for i, name in enumerate(CHANNELS)}
SIDE_CHANNELS = {"A": ("A0", "A1", "AZ"), "B": ("B0", "B1", "BZ")}
DARK = -1


@dataclass(frozen=True)
class ChannelModel:
    loss_db: float = 0.0
    fiber_km: float = 0.0
    beta2_ps2_per_km: float = -21.7
    attenuation_db_per_km: float = 0.2

    def __post_init__(self):
        if self.loss_db < 0 or self.fiber_km < 0:
            raise ValueError("loss_db and fiber_km must be >= 0")

    @property
    def total_loss_db(self) -> float:
        return self.loss_db + self.attenuation_db_per_km * self.fiber_km


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float = 0.8
    dark_counts_per_s: float = 100.0
    jitter_fwhm_ps: float = 50.0
    dead_time_ns: float = 20.0
    max_rate_hz: float = 1.5e6

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        for name in ("dark_counts_per_s", "jitter_fwhm_ps", "dead_time_ns", "max_rate_hz"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class Station:
    """One user: fiber link, receiver chip and detectors.

    ``z_path_loss_db`` is the loss of the direct-to-detector arm used by the
    passive basis split; it is ignored otherwise.
    """

    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    channel: ChannelModel = field(default_factory=ChannelModel)
    detector: DetectorModel = field(default_factory=DetectorModel)
    z_path_loss_db: float = 0.0


@dataclass(frozen=True)
class FixedPhase:
    """Both receivers keep the configuration they were given."""


@dataclass(frozen=True)
class PassiveSplit:
    """A beam splitter sends each photon to a bare detector (Z) with p_z."""

    p_z_a: float = 0.5
    p_z_b: float = 0.5

    def __post_init__(self):
        if not (0 <= self.p_z_a <= 1 and 0 <= self.p_z_b <= 1):
            raise ValueError("p_z must lie in [0, 1]")


@dataclass(frozen=True)
class ActivePrbs:
    """Each receiver phase toggled every cycle by its own PRBS."""

    order_a: int = 7
    order_b: int = 9


@dataclass(frozen=True)
class ExperimentPlan:
    pump: PumpConfig = field(default_factory=PumpConfig)
    stats: PairStatistics = field(default_factory=PairStatistics)
    alice: Station = field(default_factory=Station)
    bob: Station = field(default_factory=Station)
    duration_s: float = 1e-3
    basis_policy: FixedPhase | PassiveSplit | ActivePrbs = field(default_factory=FixedPhase)
    seed: int = 0
    latency_ps: int = 300
    cycles_per_block: int = 1 << 22

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")
        if self.cycles_per_block <= 0:
            raise ValueError("cycles_per_block must be positive")
        T = self.pump.bin_separation_ps
        for st in (self.alice, self.bob):
            if st.receiver.bin_separation_ps != T:
                raise ValueError("receiver delay must match the source bin separation")
        if self.latency_ps + 2 * T >= self.pump.period_ps:
            raise ValueError("latency pushes arrivals past the clock period")

    @property
    def n_cycles(self) -> int:
        return int(round(self.duration_s * self.pump.rep_rate_hz))

    def station(self, side: str) -> Station:
        return self.alice if side == "A" else self.bob

    def with_seed(self, seed: int) -> "ExperimentPlan":
        return replace(self, seed=seed)


# ---------------------------------------------------------------- helpers


def basis_phase(bit: int, v_pi: float) -> float:
    """EO drive voltage for a PRBS bit with the heater at pi/4.

    Bit 0 gives -V_pi/4 (total phase 0, X basis); bit 1 gives +V_pi/4 (pi/2, Y).
    """
    return (v_pi / 4.0) if bit else (-v_pi / 4.0)


def dispersion_broadened_width(pulse_fwhm_ps: float, channel: ChannelModel) -> float:
    """FWHM of a transform-limited Gaussian after group-velocity dispersion."""
    if pulse_fwhm_ps <= 0:
        return 0.0
    gdd = channel.beta2_ps2_per_km * channel.fiber_km
    return float(pulse_fwhm_ps * np.sqrt(1.0 + (4.0 * np.log(2.0) * gdd / pulse_fwhm_ps**2) ** 2))


def arrival_sigma_ps(plan: ExperimentPlan, side: str) -> float:
    """Detector jitter and the dispersed wavepacket width, in quadrature."""
    st = plan.station(side)
    pulse = dispersion_broadened_width(plan.pump.pulse_fwhm_ps, st.channel)
    return float(np.hypot(st.detector.jitter_fwhm_ps, pulse) * FWHM_TO_SIGMA)


@dataclass(frozen=True)
class Outcome:
    effect: np.ndarray
    channel: str
    offset_ps: int


@dataclass(frozen=True)
class Route:
    """One optical path a photon can take at a station."""

    outcomes: tuple[Outcome, ...]
    survival: float
    basis: str  # 'X', 'Y', 'Z' or 'other'


def _receiver_outcomes(side: str, receiver: ReceiverConfig) -> tuple[Outcome, ...]:
    names = {"plus": f"{side}0", "minus": f"{side}1"}
    return tuple(Outcome(e.effect, names[e.port], e.time_offset_ps) for e in receiver_effects(receiver))


def receiver_basis(receiver: ReceiverConfig) -> str:
    if receiver.mode is SwitchMode.REVERSE:
        return "Z"
    if receiver.mode is SwitchMode.OVERLAP:
        th = theta_total(receiver)
        if abs(th) < 1e-9:
            return "X"
        if abs(th - np.pi / 2) < 1e-9:
            return "Y"
    return "other"


def station_routes(plan: ExperimentPlan, side: str) -> tuple[list[Route], np.ndarray]:
    """Routes of one station and their selection probabilities.

    For ActivePrbs the probabilities are not used: route index = PRBS bit.
    """
    st = plan.station(side)
    base = transmission(st.channel.total_loss_db) * st.detector.efficiency
    rx_surv = base * transmission(st.receiver.insertion_loss_db)
    policy = plan.basis_policy
    if isinstance(policy, FixedPhase):
        return [Route(_receiver_outcomes(side, st.receiver), rx_surv, receiver_basis(st.receiver))], np.array([1.0])
    if isinstance(policy, PassiveSplit):
        p_z = policy.p_z_a if side == "A" else policy.p_z_b
        T = plan.pump.bin_separation_ps
        z_out = (Outcome(projector(KET0), f"{side}Z", 0), Outcome(projector(KET1), f"{side}Z", T))
        z = Route(z_out, base * transmission(st.z_path_loss_db), "Z")
        x = Route(_receiver_outcomes(side, st.receiver), rx_surv, receiver_basis(st.receiver))
        return [z, x], np.array([p_z, 1.0 - p_z])
    if isinstance(policy, ActivePrbs):
        routes = []
        for bit in (0, 1):
            rx = replace(st.receiver, drive_voltage=basis_phase(bit, st.receiver.v_pi))
            routes.append(Route(_receiver_outcomes(side, rx), rx_surv, receiver_basis(rx)))
        return routes, np.array([0.5, 0.5])
    raise TypeError(f"unknown basis policy {policy!r}")


class BasisSchedule:
    """Per-cycle PRBS basis bits of both users (the active-selection log)."""

    def __init__(self, order_a: int, order_b: int):
        self.seq = {"A": prbs_period_bits(order_a), "B": prbs_period_bits(order_b)}

    def bits(self, side: str, cycles: np.ndarray) -> np.ndarray:
        seq = self.seq[side]
        return seq[np.asarray(cycles) % len(seq)]

    @property
    def joint_period(self) -> int:
        return int(np.lcm(len(self.seq["A"]), len(self.seq["B"])))


def basis_schedule(plan: ExperimentPlan) -> BasisSchedule | None:
    p = plan.basis_policy
    return BasisSchedule(p.order_a, p.order_b) if isinstance(p, ActivePrbs) else None


def _sample_index(rng: np.random.Generator, probs: np.ndarray, n: int) -> np.ndarray:
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, rng.random(n), side="right"), len(probs) - 1)


def _joint_table(rho: np.ndarray, ra: Route, rb: Route) -> np.ndarray:
    ea = np.array([o.effect for o in ra.outcomes])
    eb = np.array([o.effect for o in rb.outcomes])
    r = rho.reshape(2, 2, 2, 2)
    # P[i, j] = sum rho[k l, m n] Ea[i, m, k] Eb[j, n, l]
    p = np.einsum("klmn,imk,jnl->ij", r, ea, eb).real
    return np.clip(p, 0.0, None)


def _marginal(rho_side: np.ndarray, route: Route) -> np.ndarray:
    e = np.array([o.effect for o in route.outcomes])
    return np.clip(np.einsum("ij,kji->k", rho_side, e).real, 0.0, None)


# ---------------------------------------------------------------- engine


@dataclass
class Block:
    index: int
    first_cycle: int
    n_cycles: int
    times: dict[str, np.ndarray]
    truth: dict[str, np.ndarray]
    pairs: dict[str, int]


class _Model:
    """Precomputed per-plan quantities shared by all blocks."""

    def __init__(self, plan: ExperimentPlan):
        self.plan = plan
        self.rho = density_matrix(prepared_state(plan.pump.prep))
        self.rho_a = partial_trace(self.rho, "A")
        self.rho_b = partial_trace(self.rho, "B")
        self.period = plan.pump.period_ps
        self.routes = {}
        self.route_probs = {}
        for side in "AB":
            self.routes[side], self.route_probs[side] = station_routes(plan, side)
        self.schedule = basis_schedule(plan)
        self.sigma = {s: arrival_sigma_ps(plan, s) for s in "AB"}
        self.tables = {
            (i, j): _joint_table(self.rho, ra, rb)
            for i, ra in enumerate(self.routes["A"])
            for j, rb in enumerate(self.routes["B"])
        }
        self.marginals = {
            "A": [_marginal(self.rho_a, r) for r in self.routes["A"]],
            "B": [_marginal(self.rho_b, r) for r in self.routes["B"]],
        }
        self.channels = self._channels()

    def _channels(self) -> list[str]:
        names = []
        for side in "AB":
            used = {o.channel for r in self.routes[side] for o in r.outcomes}
            names += [c for c in SIDE_CHANNELS[side] if c in used]
        return names

    def categories(self, side: str) -> list[tuple[int | None, float]]:
        """(route index or None for PRBS-resolved, detection probability)."""
        routes = self.routes[side]
        if self.schedule is not None:
            surv = {r.survival for r in routes}
            if len(surv) != 1:
                raise ValueError("active selection requires equal loss in both bases")
            return [(None, surv.pop())]
        return [(i, p * r.survival) for i, (p, r) in enumerate(zip(self.route_probs[side], routes))]


def _block_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _generate_block(model: _Model, index: int, first: int, n: int) -> Block:
    plan = model.plan
    rng = _block_rng(plan.seed, index)
    mu = plan.stats.mu
    events = {c: ([], []) for c in model.channels}
    pairs: dict[str, int] = {}

    def emit(side, route_idx, out_idx, cycles):
        routes = model.routes[side]
        for r in np.unique(route_idx):
            sel_r = route_idx == r
            route = routes[r]
            for k, o in enumerate(route.outcomes):
                sel = sel_r & (out_idx == k)
                if not sel.any():
                    continue
                cyc = cycles[sel]
                t = cyc * model.period + plan.latency_ps + o.offset_ps
                t = t + np.rint(rng.normal(0.0, model.sigma[side], cyc.size)).astype(np.int64)
                events[o.channel][0].append(t)
                events[o.channel][1].append(np.full(cyc.size, o.offset_ps, dtype=np.int16))

    def resolve_routes(side, cat, cycles):
        if cat is None:
            return model.schedule.bits(side, cycles).astype(np.int64)
        return np.full(cycles.size, cat, dtype=np.int64)

    cats_a = model.categories("A") + [("lost", 0.0)]
    cats_b = model.categories("B") + [("lost", 0.0)]
    det_a = sum(p for _, p in cats_a[:-1])
    det_b = sum(p for _, p in cats_b[:-1])
    cats_a[-1] = ("lost", max(0.0, 1.0 - det_a))
    cats_b[-1] = ("lost", max(0.0, 1.0 - det_b))

    for ca, pa in cats_a:
        for cb, pb in cats_b:
            if ca == "lost" and cb == "lost":
                continue
            k = int(rng.poisson(mu * n * pa * pb))
            pairs[f"{ca}|{cb}"] = k
            if k == 0:
                continue
            cycles = first + rng.integers(0, n, k, dtype=np.int64)
            if ca != "lost" and cb != "lost":
                ra = resolve_routes("A", ca, cycles)
                rb = resolve_routes("B", cb, cycles)
                oa = np.empty(k, dtype=np.int64)
                ob = np.empty(k, dtype=np.int64)
                for i in range(len(model.routes["A"])):
                    for j in range(len(model.routes["B"])):
                        sel = (ra == i) & (rb == j)
                        m = int(sel.sum())
                        if m == 0:
                            continue
                        table = model.tables[(i, j)]
                        flat = _sample_index(rng, table.ravel(), m)
                        oa[sel], ob[sel] = np.divmod(flat, table.shape[1])
                emit("A", ra, oa, cycles)
                emit("B", rb, ob, cycles)
            else:
                side, cat = ("A", ca) if ca != "lost" else ("B", cb)
                rr = resolve_routes(side, cat, cycles)
                oo = np.empty(k, dtype=np.int64)
                for i in range(len(model.routes[side])):
                    sel = rr == i
                    m = int(sel.sum())
                    if m:
                        oo[sel] = _sample_index(rng, model.marginals[side][i], m)
                emit(side, rr, oo, cycles)

    t0 = first * model.period
    span = n * model.period
    for c in model.channels:
        det = plan.station(c[0]).detector
        k = int(rng.poisson(det.dark_counts_per_s * span * 1e-12))
        if k:
            events[c][0].append(t0 + rng.integers(0, span, k, dtype=np.int64))
            events[c][1].append(np.full(k, DARK, dtype=np.int16))

    times, truth = {}, {}
    for c in model.channels:
        if events[c][0]:
            t = np.concatenate(events[c][0])
            tr = np.concatenate(events[c][1])
            order = np.argsort(t, kind="stable")
            times[c], truth[c] = t[order], tr[order]
        else:
            times[c] = np.empty(0, dtype=np.int64)
            truth[c] = np.empty(0, dtype=np.int16)
    return Block(index, first, n, times, truth, pairs)


def apply_dead_time(times: np.ndarray, dead_ps: int, last: float = -np.inf) -> tuple[np.ndarray, float]:
    """Non-paralyzable dead time on a sorted stream.

    Returns the keep mask and the last accepted time (to carry into the next
    block).
    """
    n = times.size
    keep = np.ones(n, dtype=bool)
    if n == 0:
        return keep, last
    if dead_ps <= 0:
        return keep, float(times[-1])
    prev = np.concatenate(([last], times[:-1].astype(float)))
    carried = last  # last accepted time before a rejected event
    # an event whose raw gap to its predecessor is >= dead is always accepted
    for j in np.flatnonzero(times - prev < dead_ps):
        if j == 0:
            ref = last
        elif keep[j - 1]:
            ref = times[j - 1]
        else:
            ref = carried
        if times[j] - ref < dead_ps:
            keep[j] = False
            carried = ref
    return keep, float(times[keep][-1]) if keep.any() else last


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("TBQ_THREADS", "1")))
    except ValueError:
        return 1


def iter_blocks(plan: ExperimentPlan, workers: int | None = None) -> Iterator[Block]:
    """Generate blocks in order, with dead time applied across block edges."""
    model = _Model(plan)
    total = plan.n_cycles
    size = plan.cycles_per_block
    specs = [(i, s, min(size, total - s)) for i, s in enumerate(range(0, total, size))]
    workers = worker_count() if workers is None else max(1, workers)
    dead = {c: int(round(plan.station(c[0]).detector.dead_time_ns * 1000)) for c in model.channels}
    last = {c: -np.inf for c in model.channels}

    def finish(block: Block) -> Block:
        for c in model.channels:
            keep, last[c] = apply_dead_time(block.times[c], dead[c], last[c])
            block.times[c] = block.times[c][keep]
            block.truth[c] = block.truth[c][keep]
        return block

    if workers == 1:
        for spec in specs:
            yield finish(_generate_block(model, *spec))
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # bounded look-ahead keeps memory proportional to the worker count
        pending = []
        it = iter(specs)
        for spec in it:
            pending.append(pool.submit(_generate_block, model, *spec))
            if len(pending) >= 2 * workers:
                break
        for spec in it:
            yield finish(pending.pop(0).result())
            pending.append(pool.submit(_generate_block, model, *spec))
        for fut in pending:
            yield finish(fut.result())


@dataclass
class SimulationResult:
    plan: ExperimentPlan
    streams: dict[str, np.ndarray]
    truth: dict[str, np.ndarray]
    pairs: dict[str, int]
    schedule: BasisSchedule | None
    warnings: list[str] = field(default_factory=list)

    @property
    def duration_ps(self) -> int:
        return self.plan.n_cycles * self.plan.pump.period_ps

    def singles_rate(self, channel: str) -> float:
        return self.streams[channel].size / (self.duration_ps * 1e-12)


def run_simulation(plan: ExperimentPlan, workers: int | None = None) -> SimulationResult:
    """Simulate the whole plan and return merged per-channel time tags."""
    model_channels = _Model(plan).channels
    times = {c: [] for c in model_channels}
    truth = {c: [] for c in model_channels}
    pairs: dict[str, int] = {}
    for block in iter_blocks(plan, workers):
        for c in model_channels:
            times[c].append(block.times[c])
            truth[c].append(block.truth[c])
        for k, v in block.pairs.items():
            pairs[k] = pairs.get(k, 0) + v
    streams = {c: np.concatenate(times[c]) if times[c] else np.empty(0, np.int64) for c in model_channels}
    tr = {c: np.concatenate(truth[c]) if truth[c] else np.empty(0, np.int16) for c in model_channels}
    result = SimulationResult(plan, streams, tr, pairs, basis_schedule(plan))
    for c in model_channels:
        rate = result.singles_rate(c)
        limit = plan.station(c[0]).detector.max_rate_hz
        if limit and rate > limit:
            msg = f"channel {c} count rate {rate:.3g} Hz exceeds detector limit {limit:.3g} Hz"
            log.warning(msg)
            result.warnings.append(msg)
    return result
