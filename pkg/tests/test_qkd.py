import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from tbq.device import ReceiverConfig
from tbq.events import (
    FWHM_TO_SIGMA,
    ActivePrbs,
    ChannelModel,
    ExperimentPlan,
    FixedPhase,
    PassiveSplit,
    Station,
    run_simulation,
)
from tbq.presets import ideal_detector, ideal_plan, passive_plan
from tbq.qkd import (
    ChernoffBound,
    SecurityParams,
    SerflingBound,
    SiftedBlock,
    asymptotic_fraction,
    asymptotic_rate,
    chernoff_key_length,
    key_length,
    key_rate_report,
    kl_divergence,
    optimize_z_window,
    serfling_key_length,
    sift_streams,
    skr_vs_loss_sweep,
)
from tbq.quantum import binary_entropy
from tbq.source import PairStatistics, PumpConfig

P = SecurityParams()


def _block(nk, nt, qk, qt, dur=1.0):
    return SiftedBlock(int(nk), int(nt), int(round(qk * nk)), int(round(qt * nt)), "Z", "X", dur)


class TestBounds:
    @pytest.mark.parametrize("q,n", [(0.0376, 1e4), (0.01, 1e3), (0.061, 4e4), (0.2, 1e6), (0.0, 1e5)])
    def test_chernoff_against_brentq(self, q, n):
        got = ChernoffBound().upper(q, n, n, 1e-10)
        want = oracles.chernoff_upper_brentq(q, n, 1e-10) if q > 0 else 1 - math.exp(-math.log(1e10) / n)
        assert got == pytest.approx(want, abs=2e-10)

    @pytest.mark.parametrize("nk,nt", [(1e4, 1e4), (1e6, 2.5e4), (1e3, 10)])
    def test_serfling_nu(self, nk, nt):
        got = SerflingBound().upper(0.03, nk, nt, 1e-10) - 0.03
        assert got == pytest.approx(oracles.serfling_nu(nk, nt, 1e-10), rel=1e-12)

    @pytest.mark.parametrize("bound", [SerflingBound(), ChernoffBound()])
    def test_key_length_formula(self, bound):
        for n, qk, qt in ((1e5, 0.015, 0.0376), (1e6, 0.02, 0.05), (4e4, 0.0402, 0.061)):
            kl = key_length(n, n, qk, qt, P, bound)
            assert kl.bits == oracles.key_len(n, qk, kl.q_upper)

    def test_kl_divergence(self):
        for p, q in ((0.1, 0.3), (0.0, 0.2), (0.5, 0.01)):
            assert kl_divergence(p, q) == pytest.approx(stats.entropy([p, 1 - p], [q, 1 - q]), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.0, 0.3), st.floats(1e2, 1e9))
    def test_upper_bounds_exceed_observed(self, q, n):
        for b in (SerflingBound(), ChernoffBound()):
            assert b.upper(q, n, n, 1e-10) >= q

    @pytest.mark.parametrize("bound", [SerflingBound(), ChernoffBound()])
    def test_upper_converges(self, bound):
        assert bound.upper(0.04, 1e14, 1e14, 1e-10) == pytest.approx(0.04, abs=1e-5)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.0, 0.08), st.floats(0.0, 0.08), st.floats(3.0, 9.0))
    def test_ordering(self, qk, qt, log_n):
        n = 10**log_n
        ser = key_length(n, n, qk, qt, P, SerflingBound()).bits
        che = key_length(n, n, qk, qt, P, ChernoffBound()).bits
        assert che >= ser
        assert asymptotic_fraction(qk, qt, P.f_ec) * n >= che

    def test_monotone_in_block_size(self):
        for b in (SerflingBound(), ChernoffBound()):
            frac = [key_length(n, n, 0.02, 0.04, P, b).bits / n for n in np.logspace(3, 9, 13)]
            assert np.all(np.diff(frac) >= 0)

    def test_monotone_in_test_qber_and_eps(self):
        for b in (SerflingBound(), ChernoffBound()):
            ls = [key_length(1e6, 1e6, 0.02, q, P, b).bits for q in np.linspace(0, 0.1, 21)]
            assert np.all(np.diff(ls) <= 0)
            es = [key_length(1e6, 1e6, 0.02, 0.04, SecurityParams(e, e), b).bits for e in (1e-6, 1e-10, 1e-14)]
            assert es[0] >= es[1] >= es[2]

    def test_noiseless_asymptote(self):
        params = SecurityParams(f_ec=1.0)
        frac = [key_length(n, n, 0.0, 0.0, params, SerflingBound()).bits / n for n in (1e6, 1e9, 1e12)]
        assert frac[0] < frac[1] < frac[2]
        assert frac[2] == pytest.approx(1.0, abs=5e-4)

    def test_abort_near_threshold(self):
        for b in (SerflingBound(), ChernoffBound()):
            kl = key_length(1e9, 1e9, 0.12, 0.12, P, b)
            assert kl.bits == 0 and kl.aborted
            assert key_length(1e3, 1e3, 0.0, 0.45, P, b).aborted

    def test_block_wrappers(self):
        blk = _block(1e6, 2.4e4, 0.015, 0.0376)
        assert serfling_key_length(blk).bits == key_length(1e6, 2.4e4, blk.qber_key, blk.qber_test, P,
                                                           SerflingBound()).bits
        assert chernoff_key_length(blk).bits >= serfling_key_length(blk).bits

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            SecurityParams(eps_sec=0)
        with pytest.raises(ValueError):
            SecurityParams(f_ec=0.9)
        with pytest.raises(ValueError):
            key_length(0, 10, 0.0, 0.0, P, SerflingBound())


class TestAsymptotic:
    def test_noiseless(self):
        assert asymptotic_rate(62e3, 0.0, 0.0, f_ec=1.0) == pytest.approx(62e3)

    def test_monotone(self):
        qs = np.linspace(0, 0.12, 25)
        r1 = [asymptotic_rate(1e4, q, 0.03) for q in qs]
        r2 = [asymptotic_rate(1e4, 0.01, q) for q in qs]
        assert np.all(np.diff(r1) <= 0) and np.all(np.diff(r2) <= 0)
        assert r1[0] > r1[-1] and r2[0] > r2[-1]

    def test_formula(self):
        want = 5e4 * (1 - oracles.h2_mp(0.0376) - 1.16 * oracles.h2_mp(0.015))
        assert asymptotic_rate(5e4, 0.015, 0.0376) == pytest.approx(want, rel=1e-12)

    def test_report_ordering(self):
        rep = key_rate_report(_block(5e5, 1.2e4, 0.015, 0.0376, 10.0), block_size=1e6)
        assert rep.skr_asymptotic >= rep.skr_chernoff >= rep.skr_serfling > 0


def _ideal_station(**kw):
    return Station(receiver=ReceiverConfig(**kw), detector=ideal_detector())


class TestSifting:
    @pytest.mark.parametrize("p_z", [0.5, 0.9, 1.0])
    def test_passive_factor(self, p_z):
        plan = ExperimentPlan(pump=PumpConfig(pulse_fwhm_ps=0.0), stats=PairStatistics(0.01),
                              alice=_ideal_station(), bob=_ideal_station(),
                              basis_policy=PassiveSplit(p_z, p_z), duration_s=2e-3, seed=3)
        blk = sift_streams(plan, run_simulation(plan).streams)
        want = p_z**2 + (1 - p_z) ** 2
        assert blk.sifting_factor == pytest.approx(want, abs=4 * math.sqrt(want * (1 - want) / blk.n_rounds) + 1e-9)

    def test_active_ideal(self):
        plan = ExperimentPlan(pump=PumpConfig(pulse_fwhm_ps=0.0), stats=PairStatistics(0.002),
                              alice=_ideal_station(theta_tps=np.pi / 4), bob=_ideal_station(theta_tps=np.pi / 4),
                              basis_policy=ActivePrbs(7, 9), duration_s=5e-3, seed=5)
        r = run_simulation(plan)
        blk = sift_streams(plan, r.streams, schedule=r.schedule)
        assert blk.sifting_factor == pytest.approx(0.5, abs=4 * math.sqrt(0.25 / blk.n_rounds))
        assert set(blk.per_basis) == {"X", "Y"}
        assert blk.n_key > 1000 and blk.n_test > 1000
        assert blk.e_key == 0 and blk.e_test == 0

    def test_noiseless_fixed(self):
        plan = ideal_plan(mu=0.002, duration_s=5e-3, seed=6)
        blk = sift_streams(plan, run_simulation(plan).streams)
        assert blk.n_key > 1000
        assert blk.e_key == 0 and blk.e_test == 0

    @pytest.mark.parametrize("v", [0.8, 0.935])
    def test_qber_tracks_visibility(self, v):
        plan = ideal_plan(mu=0.01, duration_s=0.02, seed=7)
        rx = plan.alice.receiver
        plan = replace(plan, alice=replace(plan.alice, receiver=replace(rx, device_visibility=v)))
        blk = sift_streams(plan, run_simulation(plan).streams)
        q = (1 - v) / 2
        assert blk.qber_key == pytest.approx(q, abs=3 * math.sqrt(q * (1 - q) / blk.n_key))

    def test_block_invariants(self):
        with pytest.raises(ValueError):
            SiftedBlock(10, 10, 11, 0, "Z", "X", 1.0)


def _z_plan(jitter_fwhm, pulse_fwhm=0.0, km=0.0, seed=1):
    det = replace(ideal_detector(), jitter_fwhm_ps=jitter_fwhm)
    return ExperimentPlan(pump=PumpConfig(pulse_fwhm_ps=pulse_fwhm), stats=PairStatistics(0.05),
                          alice=Station(detector=det), bob=Station(channel=ChannelModel(fiber_km=km), detector=det),
                          basis_policy=PassiveSplit(1.0, 1.0), duration_s=0.01, seed=seed)


def _z_score_oracle(hw, sigma, sep=100, f=1.16):
    """Expected per-pair score from Gaussian arrival statistics on both sides."""
    ok = 1 - 2 * stats.norm.sf(hw / sigma)
    wrong = stats.norm.cdf((sep + hw) / sigma) - stats.norm.cdf((sep - hw) / sigma)
    kept = ok + wrong
    q = 2 * ok * wrong / kept**2
    return kept**2 * (1 - f * oracles.h2_mp(q))


class TestZWindow:
    def test_no_jitter_widest(self):
        plan = _z_plan(0.0)
        zw = optimize_z_window(plan, run_simulation(plan).streams)
        assert zw.half_width_ps == 50 and zw.best_qber == 0.0

    def test_jitter_interior(self):
        plan = _z_plan(50.0)
        sigma = 50.0 * FWHM_TO_SIGMA
        assert sigma == pytest.approx(21.2, abs=0.05)
        grid = np.arange(10, 51, 2)
        want = grid[np.argmax([_z_score_oracle(h, sigma) for h in grid])]
        zw = optimize_z_window(plan, run_simulation(plan).streams)
        assert 10 < zw.half_width_ps < 50
        assert abs(zw.half_width_ps - want) <= 4

    def test_dispersion_narrows(self):
        base = _z_plan(50.0, pulse_fwhm=9.2)
        far = _z_plan(50.0, pulse_fwhm=9.2, km=40.0)
        near_zw = optimize_z_window(base, run_simulation(base).streams)
        far_zw = optimize_z_window(far, run_simulation(far).streams)
        assert far_zw.half_width_ps < near_zw.half_width_ps
        assert far_zw.best_qber > near_zw.best_qber

    def test_empty(self):
        plan = _z_plan(50.0)
        empty = {c: np.zeros(0, np.int64) for c in ("A0", "A1", "AZ", "B0", "B1", "BZ")}
        with pytest.raises(ValueError):
            optimize_z_window(plan, empty)


@pytest.fixture(scope="module")
def points():
    return skr_vs_loss_sweep(passive_plan(duration_s=0.1, seed=12), [0, 8, 16], block_size=1e6,
                             z_half_width_ps=44, target_test_events=200, workers=2)


class TestSweep:
    def test_rates_fall_with_loss(self, points):
        skr = [p.report.skr_asymptotic for p in points]
        assert skr[0] > skr[1] > skr[2]

    def test_fiber_equivalent(self, points):
        assert [p.fiber_km_equiv for p in points] == [0, 40, 80]

    def test_columns(self, points):
        assert list(points[0].row()) == ["loss_db", "fiber_km_equiv", "qber_key", "qber_test", "skr_asym",
                                         "skr_serfling", "skr_chernoff", "block_size"]

    def test_z_qber_flat(self, points):
        qz = [p.report.qber_key for p in points]
        assert max(qz) - min(qz) < 0.01

    def test_worker_invariant(self, points):
        serial = skr_vs_loss_sweep(passive_plan(duration_s=0.1, seed=12), [0, 8], block_size=1e6,
                                   z_half_width_ps=44, target_test_events=200, workers=1)
        assert [p.row() for p in serial] == [p.row() for p in points[:2]]

    def test_negative_loss(self):
        with pytest.raises(ValueError):
            skr_vs_loss_sweep(passive_plan(), [-1])
