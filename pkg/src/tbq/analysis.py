"""Time-tag analysis: rounds, coincidences, JTI maps, fringe fits and CHSH."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .events import CHANNEL_CODE, CHANNELS, Block, ExperimentPlan, SimulationResult, station_routes

DEFAULT_WINDOW_PS = 300

# Alice's two settings first, then Bob's.  With this order the CHSH
# combination E11 - E12 + E21 + E22 reaches +2 sqrt(2) on |Phi+>.
CHSH_THETA_A = (np.pi / 4, -np.pi / 4)
CHSH_THETA_B = (0.0, np.pi / 2)


class FitError(RuntimeError):
    pass


# ------------------------------------------------------------ rounds


@dataclass(frozen=True)
class SlotLayout:
    """Acceptance windows per channel, relative to the early-arrival time."""

    period_ps: int
    latency_ps: int
    windows: Mapping[str, tuple[tuple[int, int], ...]]  # channel -> ((center, half_width), ...)

    @property
    def guard_ps(self) -> int:
        # centres span [0, 2T]; split the remaining period evenly around them
        centers = [c for w in self.windows.values() for c, _ in w]
        span = max(centers) - min(centers) if centers else 0
        return (self.period_ps - span) // 2 - min(centers, default=0)


def slot_layout(plan: ExperimentPlan, window_ps: int = DEFAULT_WINDOW_PS,
                z_half_width_ps: int | None = None) -> SlotLayout:
    """Windows derived from the arrival offsets each channel can produce.

    A channel with one arrival offset gets +-window_ps; channels with several
    offsets get windows that meet halfway between neighbours, unless
    ``z_half_width_ps`` narrows the bare Z detectors.
    """
    offsets: dict[str, set[int]] = {}
    for side in "AB":
        routes, _ = station_routes(plan, side)
        for r in routes:
            for o in r.outcomes:
                offsets.setdefault(o.channel, set()).add(int(o.offset_ps))
    windows = {}
    for ch, offs in offsets.items():
        offs = sorted(offs)
        if len(offs) == 1:
            hw = window_ps
        else:
            hw = min(np.diff(offs)) // 2
            if ch.endswith("Z") and z_half_width_ps is not None:
                hw = min(hw, z_half_width_ps)
        windows[ch] = tuple((c, int(hw)) for c in offs)
    return SlotLayout(plan.pump.period_ps, plan.latency_ps, windows)


@dataclass
class Rounds:
    """Clock cycles with exactly one accepted click on each side."""

    cycle: np.ndarray
    a_channel: np.ndarray  # codes into CHANNELS
    a_slot: np.ndarray  # nominal offset of the accepted window
    a_rel: np.ndarray  # arrival time relative to the early-arrival time
    b_channel: np.ndarray
    b_slot: np.ndarray
    b_rel: np.ndarray
    discarded_multi: int = 0

    def __len__(self) -> int:
        return int(self.cycle.size)

    @classmethod
    def concatenate(cls, parts: list["Rounds"]) -> "Rounds":
        if not parts:
            e = np.empty(0, np.int64)
            return cls(e, e, e, e, e, e, e, 0)
        cols = ("cycle", "a_channel", "a_slot", "a_rel", "b_channel", "b_slot", "b_rel")
        return cls(*(np.concatenate([getattr(p, c) for p in parts]) for c in cols),
                   discarded_multi=sum(p.discarded_multi for p in parts))

    def select(self, mask: np.ndarray) -> "Rounds":
        cols = ("cycle", "a_channel", "a_slot", "a_rel", "b_channel", "b_slot", "b_rel")
        return Rounds(*(getattr(self, c)[mask] for c in cols), discarded_multi=self.discarded_multi)

    def pair_counts(self, a_channels=("A0", "A1"), b_channels=("B0", "B1")) -> np.ndarray:
        """Round counts for each (Alice channel, Bob channel) pair."""
        out = np.zeros((len(a_channels), len(b_channels)), dtype=np.int64)
        for i, ca in enumerate(a_channels):
            for j, cb in enumerate(b_channels):
                out[i, j] = np.count_nonzero((self.a_channel == CHANNEL_CODE[ca]) & (self.b_channel == CHANNEL_CODE[cb]))
        return out


class ClickTable:
    """All clicks of one acquisition indexed by clock cycle.

    Built once, it yields rounds for any layout sharing the same period,
    latency and guard, which makes window scans cheap.
    """

    def __init__(self, times: Mapping[str, np.ndarray], layout: SlotLayout):
        self.period_ps, self.latency_ps, self.guard_ps = layout.period_ps, layout.latency_ps, layout.guard_ps
        chans = [ch for ch in layout.windows if ch in times and times[ch].size]
        cyc, code, rel = [], [], []
        self.spans, start = {}, 0
        for ch in chans:
            self.spans[ch] = slice(start, start + times[ch].size)
            start += times[ch].size
            t = times[ch] - self.latency_ps
            c = (t + self.guard_ps) // self.period_ps
            cyc.append(c)
            code.append(np.full(t.size, CHANNEL_CODE[ch], dtype=np.int64))
            rel.append(t - c * self.period_ps)
        e = np.empty(0, np.int64)
        self.cycle_all = np.concatenate(cyc) if cyc else e
        self.channel = np.concatenate(code) if code else e
        self.rel = np.concatenate(rel) if rel else e
        self.is_a = np.array([CHANNELS[k][0] == "A" for k in range(len(CHANNELS))])[self.channel]
        self.cycles, self.index = np.unique(self.cycle_all, return_inverse=True)
        self.index = self.index.ravel()

    def _slots(self, layout: SlotLayout) -> np.ndarray:
        s = np.full(self.rel.size, -1, dtype=np.int64)
        for ch, wins in layout.windows.items():
            if ch not in self.spans:
                continue
            span = self.spans[ch]
            r, out = self.rel[span], s[span]
            for center, hw in wins:
                out[np.abs(r - center) <= hw] = center
        return s

    def rounds(self, layout: SlotLayout) -> Rounds:
        if (layout.period_ps, layout.latency_ps, layout.guard_ps) != (self.period_ps, self.latency_ps, self.guard_ps):
            raise ValueError("layout timing differs from the one used to build the table")
        slot = self._slots(layout)
        ok = slot >= 0
        n = self.cycles.size
        side = []
        for mask in (ok & self.is_a, ok & ~self.is_a):
            idx = np.nonzero(mask)[0]
            counts = np.bincount(self.index[idx], minlength=n)
            pos = np.full(n, -1, dtype=np.int64)
            pos[self.index[idx]] = idx
            side.append((counts, pos))
        (ca, pa), (cb, pb) = side
        keep = (ca == 1) & (cb == 1)
        ia, ib = pa[keep], pb[keep]
        discarded = int(np.count_nonzero((ca > 1) | (cb > 1)))
        return Rounds(self.cycles[keep], self.channel[ia], slot[ia], self.rel[ia],
                      self.channel[ib], slot[ib], self.rel[ib], discarded)


def _single_click_cycles(cyc: np.ndarray):
    order = np.argsort(cyc, kind="stable")
    c = cyc[order]
    uniq, first, counts = np.unique(c, return_index=True, return_counts=True)
    single = counts == 1
    return uniq[single], order[first[single]], uniq[~single]


def collect_rounds(times: Mapping[str, np.ndarray], layout: SlotLayout) -> Rounds:
    """Pair Alice and Bob clicks by clock cycle.

    Clicks outside every window are ignored; a cycle with more than one
    accepted click on either side is discarded on both sides.
    """
    return ClickTable(times, layout).rounds(layout)


def rounds_from_result(result: SimulationResult | Iterable[Block], layout: SlotLayout) -> Rounds:
    if isinstance(result, SimulationResult):
        return collect_rounds(result.streams, layout)
    # blocks are cycle aligned, so rounds never straddle two blocks
    return Rounds.concatenate([collect_rounds(b.times, layout) for b in result])


# ------------------------------------------------------------ coincidences


@dataclass(frozen=True)
class CoincidenceHistogram:
    pair: tuple[str, str]
    bin_width_ps: int
    edges: np.ndarray
    counts: np.ndarray
    singles: tuple[int, int]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _check_sorted(x: np.ndarray, name: str) -> None:
    if x.size > 1 and np.any(np.diff(x) < 0):
        raise ValueError(f"stream {name} is not sorted")


def _nearest(sorted_vals: np.ndarray, queries: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(sorted_vals, queries)
    lo = np.clip(idx - 1, 0, sorted_vals.size - 1)
    hi = np.clip(idx, 0, sorted_vals.size - 1)
    use_hi = np.abs(sorted_vals[hi] - queries) < np.abs(sorted_vals[lo] - queries)
    return np.where(use_hi, hi, lo)


def match_coincidences(a: np.ndarray, b: np.ndarray, window_ps: int, delay_ps: int = 0):
    """Greedy nearest-partner matching; each tag is used at most once.

    A pair (i, j) qualifies when |b[j] - a[i] - delay| <= window.  Candidates
    are each tag's nearest partner in the other stream; they are accepted in
    order of increasing deviation.  Returns index arrays (ia, ib).
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    _check_sorted(a, "A")
    _check_sorted(b, "B")
    if a.size == 0 or b.size == 0:
        e = np.empty(0, np.int64)
        return e, e
    bs = b - delay_ps
    ja = _nearest(bs, a)
    ib_ = _nearest(a, bs)
    ci = np.concatenate((np.arange(a.size), ib_))
    cj = np.concatenate((ja, np.arange(b.size)))
    dev = bs[cj] - a[ci]
    ok = np.abs(dev) <= window_ps
    ci, cj, dev = ci[ok], cj[ok], dev[ok]
    # drop duplicate candidates found from both sides
    key = np.unique(ci * (b.size + 1) + cj)
    ci, cj = key // (b.size + 1), key % (b.size + 1)
    dev = bs[cj] - a[ci]
    ui, cnt_i = np.unique(ci, return_counts=True)
    uj, cnt_j = np.unique(cj, return_counts=True)
    free = (cnt_i[np.searchsorted(ui, ci)] == 1) & (cnt_j[np.searchsorted(uj, cj)] == 1)
    acc_i, acc_j = [ci[free]], [cj[free]]
    ci, cj, dev = ci[~free], cj[~free], dev[~free]
    if ci.size:
        order = np.lexsort((a[ci] + bs[cj], np.abs(dev)))
        used_i, used_j = set(), set()
        keep_i, keep_j = [], []
        for i, j in zip(ci[order].tolist(), cj[order].tolist()):
            if i in used_i or j in used_j:
                continue
            used_i.add(i)
            used_j.add(j)
            keep_i.append(i)
            keep_j.append(j)
        acc_i.append(np.array(keep_i, dtype=np.int64))
        acc_j.append(np.array(keep_j, dtype=np.int64))
    ia = np.concatenate(acc_i)
    ib = np.concatenate(acc_j)
    order = np.argsort(ia, kind="stable")
    return ia[order], ib[order]


def count_coincidences(stream_a: np.ndarray, stream_b: np.ndarray, window_ps: int, delay_ps: int = 0,
                       bin_width_ps: int | None = None, pair: tuple[str, str] = ("A", "B")) -> CoincidenceHistogram:
    """Coincidences within +-window of the given delay, histogrammed by deviation."""
    if window_ps < 0:
        raise ValueError("window must be >= 0")
    ia, ib = match_coincidences(stream_a, stream_b, window_ps, delay_ps)
    bw = max(1, int(bin_width_ps if bin_width_ps is not None else max(1, window_ps)))
    nb = int(np.ceil((2 * window_ps + 1) / bw))
    edges = -window_ps + bw * np.arange(nb + 1)
    dev = np.asarray(stream_b)[ib] - delay_ps - np.asarray(stream_a)[ia]
    counts, _ = np.histogram(dev, bins=edges.astype(float) - 0.5 if bw == 1 else edges)
    if counts.sum() != ia.size:  # the last edge is inclusive only for numpy's final bin
        counts[-1] += ia.size - counts.sum()
    return CoincidenceHistogram(pair, bw, edges, counts.astype(np.int64), (len(stream_a), len(stream_b)))


def delay_histogram(stream_a: np.ndarray, stream_b: np.ndarray, max_delay_ps: int, bin_width_ps: int):
    """All-pairs time-resolved coincidence histogram of b - a within +-max_delay."""
    a = np.asarray(stream_a, dtype=np.int64)
    b = np.asarray(stream_b, dtype=np.int64)
    lo = np.searchsorted(b, a - max_delay_ps, side="left")
    hi = np.searchsorted(b, a + max_delay_ps, side="right")
    n = hi - lo
    rep = np.repeat(np.arange(a.size), n)
    offs = np.arange(n.sum()) - np.repeat(np.cumsum(n) - n, n)
    d = b[np.repeat(lo, n) + offs] - a[rep]
    edges = np.arange(-max_delay_ps, max_delay_ps + bin_width_ps, bin_width_ps)
    counts, _ = np.histogram(d, bins=edges)
    return edges, counts


# ------------------------------------------------------------ JTI


@dataclass(frozen=True)
class JtiMap:
    edges_ps: np.ndarray
    counts: np.ndarray  # [slot_a, slot_b]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def jti(stream_a: np.ndarray, stream_b: np.ndarray, clock_period_ps: int, slot_edges,
        origin_ps: int = 0) -> JtiMap:
    """Joint arrival-slot map of single-click cycles.

    ``slot_edges`` are times relative to ``origin_ps`` (the nominal early
    arrival of cycle 0) and must be strictly increasing within one period.
    """
    edges = np.asarray(slot_edges, dtype=np.int64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("slot edges must be strictly increasing (slots may not overlap)")
    if edges[-1] - edges[0] > clock_period_ps:
        raise ValueError("slots span more than one clock period")

    def side(stream):
        t = np.asarray(stream, dtype=np.int64) - origin_ps - edges[0]
        c = t // clock_period_ps
        r = t - c * clock_period_ps + edges[0]
        ok = r < edges[-1]
        c, r = c[ok], r[ok]
        cs, idx, _ = _single_click_cycles(c)
        return cs, r[idx]

    ca, ra = side(stream_a)
    cb, rb = side(stream_b)
    _, xa, xb = np.intersect1d(ca, cb, assume_unique=True, return_indices=True)
    counts, _, _ = np.histogram2d(ra[xa], rb[xb], bins=(edges, edges))
    return JtiMap(edges, counts.astype(np.int64))


# ------------------------------------------------------------ fringes


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    offset: float
    phase: float
    visibility: float
    sigma_amplitude: float
    sigma_offset: float
    sigma_phase: float
    sigma_visibility: float
    kappa: float | None = None  # rad per unit of the scan variable, for heater-power scans

    def bell_sigma(self) -> float:
        """Standard deviations by which V exceeds the 1/sqrt(2) Bell threshold."""
        return (self.visibility - 1 / np.sqrt(2)) / self.sigma_visibility


def _wls(x: np.ndarray, y: np.ndarray, var: np.ndarray):
    w = 1.0 / var
    xtw = x.T * w
    cov = np.linalg.inv(xtw @ x)
    return cov @ (xtw @ y), cov


def fit_fringe(theta, counts) -> FringeFit:
    """Poisson-weighted fit of counts = c + a cos(theta + phi).

    Linear in (c, a cos phi, -a sin phi); weights are refined once from the
    first-pass model so low-count points are not over-weighted.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(counts, dtype=float)
    if theta.size < 5 or theta.size != y.size:
        raise FitError("need at least 5 (theta, count) points")
    if np.ptp(theta) <= np.pi:
        raise FitError("phase scan must span more than half a period")
    X = np.column_stack((np.ones_like(theta), np.cos(theta), np.sin(theta)))
    var = np.maximum(y, 1.0)
    for _ in range(3):
        beta, cov = _wls(X, y, var)
        var = np.maximum(X @ beta, 1.0)
    c, A, B = beta
    a = float(np.hypot(A, B))
    if c <= 0:
        raise FitError("fitted offset is not positive")
    phase = float(np.arctan2(-B, A))
    if a > 0:
        g_a = np.array([0.0, A / a, B / a])
        g_phi = np.array([0.0, B / a**2, -A / a**2])
    else:
        g_a = np.array([0.0, 1.0, 0.0])
        g_phi = np.zeros(3)
    g_v = np.array([-a / c**2, A / (a * c) if a else 1 / c, B / (a * c) if a else 0.0])
    sd = lambda g: float(np.sqrt(max(g @ cov @ g, 0.0)))
    v = min(max(a / c, 0.0), 1.0)
    return FringeFit(a, float(c), phase, v, sd(g_a), float(np.sqrt(cov[0, 0])), sd(g_phi), max(sd(g_v), 1e-300))


def fit_fringe_power(power, counts, p_pi: float = 23.5) -> FringeFit:
    """Fringe fit against heater power, with phase = kappa * P + phi0.

    ``p_pi`` (power for a pi shift) seeds kappa; the fit refines it.
    """
    from scipy.optimize import curve_fit

    x = np.asarray(power, dtype=float)
    y = np.asarray(counts, dtype=float)
    if x.size < 5:
        raise FitError("need at least 5 points")
    kappa0 = np.pi / p_pi
    if np.ptp(x) * kappa0 <= np.pi:
        raise FitError("power scan must span more than half a fringe period")
    seed = fit_fringe(kappa0 * x, y)

    def model(p, c, a, kappa, phi):
        return c + a * np.cos(kappa * p + phi)

    try:
        popt, pcov = curve_fit(model, x, y, p0=(seed.offset, seed.amplitude, kappa0, seed.phase),
                               sigma=np.sqrt(np.maximum(y, 1.0)), absolute_sigma=True, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    c, a, kappa, phi = popt
    if a < 0:
        a, phi = -a, phi + np.pi
    g = np.array([-a / c**2, 1 / c, 0.0, 0.0])
    sig = np.sqrt(np.maximum(np.diag(pcov), 0.0))
    return FringeFit(float(a), float(c), float(np.angle(np.exp(1j * phi))), float(min(max(a / c, 0), 1)),
                     float(sig[1]), float(sig[0]), float(sig[3]), float(np.sqrt(max(g @ pcov @ g, 1e-300))),
                     kappa=float(kappa))


# ------------------------------------------------------------ CHSH


def correlator(c: np.ndarray) -> tuple[float, float]:
    """E = (same - cross) / total for a 2x2 [[A0B0, A0B1], [A1B0, A1B1]] table."""
    c = np.asarray(c, dtype=float)
    same = c[0, 0] + c[1, 1]
    cross = c[0, 1] + c[1, 0]
    tot = same + cross
    if tot <= 0:
        raise ValueError("setting with zero coincidences")
    e = (same - cross) / tot
    var = 4 * same * cross / tot**3
    return float(e), float(np.sqrt(var))


def chsh_s(counts: Mapping[tuple[int, int], np.ndarray]) -> tuple[float, float]:
    """CHSH S = |E11 - E12 + E21 + E22| and its Poisson standard error.

    ``counts[(i, j)]`` holds the detector-pair table for Alice setting i and
    Bob setting j (0-based), with the settings ordered as CHSH_THETA_A/B.
    """
    signs = {(0, 0): 1, (0, 1): -1, (1, 0): 1, (1, 1): 1}
    s, var = 0.0, 0.0
    for key, sign in signs.items():
        e, se = correlator(counts[key])
        s += sign * e
        var += se**2
    return abs(s), float(np.sqrt(var))


def info_density(d: int, n_qudits: int, bin_separation_s: float, channel_bandwidth_hz: float) -> float:
    """d^N / (dt * dnu) with dt = 2 x bin separation and dnu = 2 x channel bandwidth."""
    if min(d, n_qudits, bin_separation_s, channel_bandwidth_hz) <= 0:
        raise ValueError("inputs must be positive")
    return float(d**n_qudits / ((2 * bin_separation_s) * (2 * channel_bandwidth_hz)))


def channel_name(code: int) -> str:
    return CHANNELS[int(code)]
