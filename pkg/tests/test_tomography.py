import numpy as np
import pytest

import oracles
from tbq.presets import certification_plan, ideal_plan
from tbq.quantum import (
    bell_phi_plus,
    check_density_matrix,
    concurrence,
    density_matrix,
    fidelity_to_phi_plus,
    purity,
    random_density_matrix,
    trace_distance,
    werner_state,
)
from tbq.tomography import (
    ReconstructionError,
    TomographyData,
    linear_inversion,
    log_likelihood,
    measurement_set,
    mle_gradient,
    mle_reconstruct,
    project_physical,
    rho_from_params,
    simulate_tomography,
)

PHI = density_matrix(bell_phi_plus())


class TestMeasurementSet:
    def test_nine_distinct_settings(self):
        s = measurement_set()
        assert len({x.label for x in s}) == 9
        assert sum(len(x.effects) for x in s) == 36

    def test_completeness(self):
        for s in measurement_set():
            assert np.allclose(s.effects.sum(axis=0), np.eye(4), atol=1e-12)

    def test_xx_plus_plus(self):
        xx = next(s for s in measurement_set() if s.label == "XX")
        plus = np.array([1, 1]) / np.sqrt(2)
        pp = np.kron(plus, plus)
        assert np.allclose(xx.effects[0], np.outer(pp, pp))

    def test_zz_computational(self):
        zz = next(s for s in measurement_set() if s.label == "ZZ")
        for k, e in enumerate(zz.effects):
            assert np.allclose(e, np.diag(np.eye(4)[k]))


class TestLinearInversion:
    def test_bell(self):
        assert np.allclose(linear_inversion(TomographyData.from_state(PHI)), PHI, atol=1e-10)

    def test_mixed(self):
        assert np.allclose(linear_inversion(TomographyData.from_state(np.eye(4) / 4)), np.eye(4) / 4, atol=1e-12)

    def test_noisy(self):
        rng = np.random.default_rng(2)
        rho = linear_inversion(TomographyData.from_state(PHI, 1e5, rng))
        assert trace_distance(rho, PHI) <= 0.02

    def test_rank_deficient(self):
        data = TomographyData.from_state(PHI)
        short = TomographyData(data.counts[:4], data.settings[:4])
        with pytest.raises(ValueError):
            linear_inversion(short)


class TestMle:
    def test_ideal(self):
        rho = mle_reconstruct(TomographyData.from_state(PHI, 1e5))
        assert fidelity_to_phi_plus(rho) >= 0.9999

    def test_physical(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            rho = mle_reconstruct(TomographyData.from_state(random_density_matrix(4, rng), 300, rng))
            check_density_matrix(rho)

    def test_werner_concurrence(self):
        rng = np.random.default_rng(5)
        rho = mle_reconstruct(TomographyData.from_state(werner_state(0.9), 1e5, rng))
        assert concurrence(rho) == pytest.approx(oracles.concurrence_sqrtm(oracles.werner(0.9)), abs=0.02)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        data = TomographyData.from_state(werner_state(0.8), 1e4, rng)
        h = 1e-6
        for _ in range(10):
            x = rng.normal(size=16)
            _, g = mle_gradient(x, data)
            fd = np.array([(mle_gradient(x + h * e, data)[0] - mle_gradient(x - h * e, data)[0]) / (2 * h)
                           for e in np.eye(16)])
            assert np.linalg.norm(fd - g) / np.linalg.norm(g) <= 1e-6

    def test_likelihood_beats_projected_inversion(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            data = TomographyData.from_state(random_density_matrix(4, rng, rank=2), 500, rng)
            lin = project_physical(linear_inversion(data))
            assert log_likelihood(mle_reconstruct(data), data) >= log_likelihood(lin, data) - 1e-9

    def test_consistency_slope(self):
        rng = np.random.default_rng(8)
        truth = werner_state(0.85)
        ns = [1e3, 1e4, 1e5, 1e6]
        dists = [np.mean([trace_distance(mle_reconstruct(TomographyData.from_state(truth, n, rng)), truth)
                          for _ in range(8)]) for n in ns]
        slope = np.polyfit(np.log10(ns), np.log10(dists), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.12)

    def test_zero_counts_ok(self):
        rho = mle_reconstruct(TomographyData.from_state(PHI, 1000))
        assert fidelity_to_phi_plus(rho) > 0.99

    def test_iteration_cap(self):
        data = TomographyData.from_state(werner_state(0.7), 1e4, np.random.default_rng(9))
        with pytest.raises(ReconstructionError) as info:
            mle_reconstruct(data, x0=np.ones(16), max_iter=2)
        check_density_matrix(info.value.best)

    def test_params_to_rho_physical(self):
        rho = rho_from_params(np.random.default_rng(1).normal(size=16))
        check_density_matrix(rho)


class TestSimulated:
    def test_ideal_source(self):
        data = simulate_tomography(ideal_plan(mu=0.02, duration_s=2e-3, seed=3))
        rho = mle_reconstruct(data)
        assert fidelity_to_phi_plus(rho) >= 0.999

    def test_noise_calibrated(self):
        data = simulate_tomography(certification_plan(duration_s=0.1, seed=4))
        rho = mle_reconstruct(data)
        assert purity(rho) == pytest.approx(0.93, abs=0.03)
        assert fidelity_to_phi_plus(rho) == pytest.approx(0.95, abs=0.03)
