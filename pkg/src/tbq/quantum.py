"""Linear algebra for time-bin qubits and biphotons.

Basis ordering per qubit is (|0> = early, |1> = late); two-qubit states use
(|00>, |01>, |10>, |11>) with Alice as the left factor.  States, density
matrices and effects are plain complex numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-12
PSD_TOL = 1e-10

KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)
IDENTITY4 = np.eye(4, dtype=complex)

PORTS = ("plus", "minus")


class StateError(ValueError):
    """Raised when an array is not a valid state or effect."""


@dataclass(frozen=True)
class TimeBinPreparation:
    """Amplitudes and relative phase of a time-bin qubit.

    alpha weights the early bin, beta the late bin; theta_s is the phase of
    the late bin relative to the early one.
    """

    alpha: float
    beta: float
    theta_s: float = 0.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise StateError("alpha and beta must be non-negative")
        norm = self.alpha**2 + self.beta**2
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"alpha^2 + beta^2 = {norm!r}, expected 1")


SYMMETRIC_PREP = TimeBinPreparation(1 / np.sqrt(2), 1 / np.sqrt(2), 0.0)


def port_sign(port) -> int:
    """Map a port label ('plus'/'minus', '+'/'-', +1/-1) to +1 or -1."""
    if port in ("plus", "+") or (isinstance(port, (int, np.integer)) and port == 1):
        return 1
    if port in ("minus", "-") or (isinstance(port, (int, np.integer)) and port == -1):
        return -1
    raise ValueError(f"unknown port {port!r}")


def make_timebin_qubit(prep: TimeBinPreparation) -> np.ndarray:
    """Return alpha|0> + beta e^{i theta_s}|1>."""
    return np.array([prep.alpha, prep.beta * np.exp(1j * prep.theta_s)], dtype=complex)


def bell_phi_plus() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 1.0], dtype=complex) / np.sqrt(2)


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def interferometric_projector(theta: float, port="plus") -> np.ndarray:
    """Central-peak projector 1/2 (|0> +- e^{i theta}|1>)(<0| +- e^{-i theta}<1|)."""
    s = port_sign(port)
    v = np.array([1.0, s * np.exp(1j * theta)], dtype=complex)
    return 0.5 * np.outer(v, v.conj())


def mode1_povm(theta: float, port="plus") -> np.ndarray:
    """Effect of a receiver biased at quadrature with no time discrimination."""
    return 0.25 * IDENTITY2 + 0.5 * interferometric_projector(theta, port)


def check_hermitian(m: np.ndarray, tol: float = NORM_TOL) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StateError(f"expected a square matrix, got shape {m.shape}")
    if not np.allclose(m, m.conj().T, atol=tol, rtol=0):
        raise StateError("matrix is not Hermitian")


def check_density_matrix(rho: np.ndarray) -> np.ndarray:
    """Validate a density matrix and return it as a complex array."""
    rho = np.asarray(rho, dtype=complex)
    check_hermitian(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > NORM_TOL:
        raise StateError(f"trace is {tr!r}, expected 1")
    w = np.linalg.eigvalsh(rho)
    if w.min() < -PSD_TOL:
        raise StateError(f"negative eigenvalue {w.min():.3e}")
    return rho


def check_effect(effect: np.ndarray) -> np.ndarray:
    """Validate 0 <= effect <= identity."""
    effect = np.asarray(effect, dtype=complex)
    check_hermitian(effect)
    w = np.linalg.eigvalsh(effect)
    if w.min() < -PSD_TOL or w.max() > 1 + PSD_TOL:
        raise StateError(f"effect eigenvalues {w} outside [0, 1]")
    return effect


def density_matrix(state: np.ndarray) -> np.ndarray:
    """Promote a ket to a density matrix; square input passes through."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        norm = np.vdot(state, state).real
        if abs(norm - 1.0) > NORM_TOL:
            raise StateError(f"state norm^2 is {norm!r}, expected 1")
        return projector(state)
    return state


def born_probability(rho: np.ndarray, effect: np.ndarray) -> float:
    """Tr[effect rho], clamped to [0, 1]."""
    rho = np.asarray(rho, dtype=complex)
    effect = np.asarray(effect, dtype=complex)
    if rho.shape != effect.shape:
        raise ValueError(f"dimension mismatch: state {rho.shape} vs effect {effect.shape}")
    p = np.trace(effect @ rho)
    if abs(p.imag) > NORM_TOL:
        raise StateError(f"Born probability has imaginary part {p.imag:.3e}")
    p = p.real
    if p < -PSD_TOL or p > 1 + PSD_TOL:
        raise StateError(f"Born probability {p!r} outside [0, 1]")
    return float(min(max(p, 0.0), 1.0))


def coincidence_rate_curve(theta_a, theta_b, port_a="plus", port_b="plus"):
    """Normalized two-photon fringe for |Phi+> behind two ideal receivers.

    Same-side ports give (1 + cos(theta_a + theta_b))/2, opposite ports the
    pi-shifted curve.  Works elementwise on arrays.
    """
    s = port_sign(port_a) * port_sign(port_b)
    return 0.5 * (1 + s * np.cos(np.add(theta_a, theta_b)))


def partial_trace(rho: np.ndarray, keep: str = "A") -> np.ndarray:
    """Reduce a two-qubit density matrix to subsystem 'A' or 'B'."""
    r = np.asarray(rho, dtype=complex).reshape(2, 2, 2, 2)
    if keep == "A":
        return np.einsum("ijkj->ik", r)
    if keep == "B":
        return np.einsum("jijk->ik", r)
    raise ValueError(f"keep must be 'A' or 'B', got {keep!r}")


def binary_entropy(p):
    """h(p) in bits with h(0) = h(1) = 0; elementwise for arrays."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probability outside [0, 1]")
    inner = (p > 0) & (p < 1)
    q = np.where(inner, p, 0.5)
    h = np.where(inner, -q * np.log2(q) - (1 - q) * np.log2(1 - q), 0.0)
    return float(h) if h.ndim == 0 else h


def _clipped_eigenvalues(rho: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh(rho)
    if w.min() < -PSD_TOL:
        raise StateError(f"negative eigenvalue {w.min():.3e}")
    return np.clip(w, 0.0, None)


def von_neumann_entropy(rho: np.ndarray) -> float:
    """-Tr[rho log2 rho] with 0 log 0 = 0."""
    w = _clipped_eigenvalues(np.asarray(rho, dtype=complex))
    w = w[w > 0]
    return float(max(0.0, -np.sum(w * np.log2(w))))


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho, dtype=complex)
    return float(np.trace(rho @ rho).real)


def fidelity_to_phi_plus(rho: np.ndarray) -> float:
    phi = bell_phi_plus()
    return float(np.vdot(phi, np.asarray(rho, dtype=complex) @ phi).real)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    w = np.linalg.eigvalsh(np.asarray(rho, dtype=complex) - np.asarray(sigma, dtype=complex))
    return float(0.5 * np.abs(w).sum())


_SIGMA_Y2 = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence from the eigenvalues of rho (sy x sy) rho* (sy x sy)."""
    rho = np.asarray(rho, dtype=complex)
    flipped = _SIGMA_Y2 @ rho.conj() @ _SIGMA_Y2
    ev = np.linalg.eigvals(rho @ flipped)
    # eigenvalues are real and non-negative up to rounding
    lam = np.sort(np.sqrt(np.clip(ev.real, 0.0, None)))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def entanglement_of_formation(rho: np.ndarray) -> float:
    c = concurrence(rho)
    return binary_entropy((1 + np.sqrt(max(0.0, 1 - c * c))) / 2)


@dataclass(frozen=True)
class EntanglementMetrics:
    purity: float
    fidelity_to_phi_plus: float
    entanglement_of_formation: float
    entropy_A: float
    entropy_B: float
    concurrence: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def entanglement_metrics(rho: np.ndarray) -> EntanglementMetrics:
    """Purity, Bell fidelity, concurrence, EoF and reduced entropies of a two-qubit state."""
    rho = check_density_matrix(rho)
    if rho.shape != (4, 4):
        raise StateError(f"expected a 4x4 density matrix, got {rho.shape}")
    c = concurrence(rho)
    return EntanglementMetrics(
        purity=purity(rho),
        fidelity_to_phi_plus=fidelity_to_phi_plus(rho),
        entanglement_of_formation=entanglement_of_formation(rho),
        entropy_A=von_neumann_entropy(partial_trace(rho, "A")),
        entropy_B=von_neumann_entropy(partial_trace(rho, "B")),
        concurrence=c,
    )


def werner_state(p: float) -> np.ndarray:
    """p |Phi+><Phi+| + (1 - p) I/4."""
    return p * projector(bell_phi_plus()) + (1 - p) * IDENTITY4 / 4


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-ensemble density matrix, for tests and oracles."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
