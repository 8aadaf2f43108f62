import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from tbq.quantum import (
    IDENTITY2,
    KET0,
    KET1,
    StateError,
    TimeBinPreparation,
    bell_phi_plus,
    binary_entropy,
    born_probability,
    check_density_matrix,
    check_effect,
    coincidence_rate_curve,
    concurrence,
    density_matrix,
    entanglement_metrics,
    entanglement_of_formation,
    fidelity_to_phi_plus,
    interferometric_projector,
    make_timebin_qubit,
    mode1_povm,
    partial_trace,
    projector,
    purity,
    random_density_matrix,
    trace_distance,
    von_neumann_entropy,
    werner_state,
)

angles = st.floats(-10, 10, allow_nan=False)


class TestPreparation:
    def test_symmetric_qubit(self):
        psi = make_timebin_qubit(TimeBinPreparation(1 / np.sqrt(2), 1 / np.sqrt(2), 0.0))
        assert np.allclose(psi, [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_phase_on_late_bin(self):
        psi = make_timebin_qubit(TimeBinPreparation(1 / np.sqrt(2), 1 / np.sqrt(2), np.pi / 2))
        assert psi[1] == pytest.approx(1j / np.sqrt(2))

    @pytest.mark.parametrize("a,b", [(1.0, 0.5), (0.2, 0.2), (-0.6, 0.8)])
    def test_rejects_bad_amplitudes(self, a, b):
        with pytest.raises(StateError):
            TimeBinPreparation(a, b)


class TestEffects:
    @given(angles)
    def test_mode2_ports_complete(self, theta):
        total = interferometric_projector(theta, "plus") + interferometric_projector(theta, "minus")
        assert np.allclose(total, IDENTITY2, atol=1e-12)

    @given(angles)
    def test_mode1_ports_complete(self, theta):
        total = mode1_povm(theta, "plus") + mode1_povm(theta, "minus")
        assert np.allclose(total, IDENTITY2, atol=1e-12)

    @given(angles, st.sampled_from(["plus", "minus"]))
    def test_effects_bounded(self, theta, port):
        check_effect(mode1_povm(theta, port))
        check_effect(interferometric_projector(theta, port))

    def test_projector_is_idempotent(self):
        p = interferometric_projector(0.3, "plus")
        assert np.allclose(p @ p, p)

    def test_check_effect_rejects_large_eigenvalue(self):
        with pytest.raises(StateError):
            check_effect(2 * projector(KET0))


class TestBorn:
    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            born_probability(density_matrix(bell_phi_plus()), projector(KET0))

    @given(angles, angles)
    def test_fringe_matches_closed_form(self, ta, tb):
        assert coincidence_rate_curve(ta, tb) == pytest.approx(oracles.joint_fringe_prob(ta, tb) * 2, abs=1e-12)

    def test_fringe_values(self):
        assert coincidence_rate_curve(0.0, 0.0) == pytest.approx(1.0)
        assert coincidence_rate_curve(np.pi / 2, np.pi / 2) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_probabilities_of_complete_set_sum_to_one(self, seed):
        rho = random_density_matrix(4, np.random.default_rng(seed))
        total = sum(
            born_probability(rho, np.kron(interferometric_projector(0.7, a), interferometric_projector(-0.2, b)))
            for a in ("plus", "minus") for b in ("plus", "minus"))
        assert total == pytest.approx(1.0, abs=1e-12)


class TestPartialTrace:
    def test_product_state(self):
        ra = density_matrix(KET0)
        rb = density_matrix((KET0 + KET1) / np.sqrt(2))
        rho = np.kron(ra, rb)
        assert np.allclose(partial_trace(rho, "A"), ra)
        assert np.allclose(partial_trace(rho, "B"), rb)

    def test_bell_marginals_are_mixed(self):
        rho = density_matrix(bell_phi_plus())
        assert np.allclose(partial_trace(rho, "A"), IDENTITY2 / 2)

    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_preserved(self, seed):
        rho = random_density_matrix(4, np.random.default_rng(seed))
        assert np.trace(partial_trace(rho, "B")).real == pytest.approx(1.0)


class TestEntropies:
    def test_binary_entropy_points(self):
        assert binary_entropy(0.5) == pytest.approx(1.0)
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.0376) == pytest.approx(oracles.h2_mp(0.0376), abs=1e-12)
        assert binary_entropy(0.0376) == pytest.approx(0.2312, abs=1e-4)

    @given(st.floats(0, 1))
    def test_binary_entropy_symmetric(self, p):
        assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-12)

    def test_bell_state_metrics(self):
        m = entanglement_metrics(density_matrix(bell_phi_plus()))
        assert m.purity == pytest.approx(1.0)
        assert m.fidelity_to_phi_plus == pytest.approx(1.0)
        assert m.concurrence == pytest.approx(1.0)
        assert m.entanglement_of_formation == pytest.approx(1.0)
        assert m.entropy_A == pytest.approx(1.0)

    def test_maximally_mixed(self):
        rho = np.eye(4) / 4
        assert purity(rho) == pytest.approx(0.25)
        assert von_neumann_entropy(rho) == pytest.approx(2.0)
        assert concurrence(rho) == 0.0

    @pytest.mark.parametrize("p", [0.2, 1 / 3, 0.5, 0.9, 1.0])
    def test_werner_concurrence_against_sqrtm_oracle(self, p):
        assert concurrence(werner_state(p)) == pytest.approx(oracles.concurrence_sqrtm(oracles.werner(p)), abs=1e-7)

    def test_werner_09_frozen(self):
        # (3p - 1) / 2 at p = 0.9
        assert concurrence(werner_state(0.9)) == pytest.approx(0.85, abs=1e-12)

    @settings(max_examples=25)
    @given(st.integers(0, 2**32 - 1))
    def test_concurrence_random_states(self, seed):
        rho = random_density_matrix(4, np.random.default_rng(seed))
        assert concurrence(rho) == pytest.approx(oracles.concurrence_sqrtm(rho), abs=1e-7)

    def test_eof_monotone_in_concurrence(self):
        eofs = [entanglement_of_formation(werner_state(p)) for p in (0.4, 0.6, 0.8, 1.0)]
        assert eofs == sorted(eofs)

    def test_fidelity_of_orthogonal_bell_state(self):
        psi = np.array([1, 0, 0, -1]) / np.sqrt(2)
        assert fidelity_to_phi_plus(density_matrix(psi)) == pytest.approx(0.0, abs=1e-15)

    def test_trace_distance(self):
        a = density_matrix(KET0)
        b = density_matrix(KET1)
        assert trace_distance(a, b) == pytest.approx(1.0)
        assert trace_distance(a, a) == pytest.approx(0.0)


class TestValidation:
    def test_rejects_non_unit_trace(self):
        with pytest.raises(StateError):
            check_density_matrix(np.eye(2))

    def test_rejects_negative(self):
        with pytest.raises(StateError):
            check_density_matrix(np.diag([1.5, -0.5]))

    def test_rejects_non_hermitian(self):
        with pytest.raises(StateError):
            check_density_matrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
