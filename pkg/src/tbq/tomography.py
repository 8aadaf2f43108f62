"""Two-qubit state tomography from nine receiver-setting pairs.

Each user measures X (Overlap, theta=0), Y (Overlap, theta=pi/2) or Z
(Reverse).  In Reverse mode the two output ports carry identical effects,
so they are merged into one outcome per arrival slot; every setting then
has four complete outcomes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .device import ReceiverConfig, SwitchMode
from .quantum import (
    IDENTITY4,
    KET0,
    KET1,
    check_density_matrix,
    interferometric_projector,
    projector,
)

BASES = ("X", "Y", "Z")
LIKELIHOOD_TOL = 1e-10
PATIENCE = 5
MAX_ITER = 100_000
P_FLOOR = 1e-300

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class ReconstructionError(RuntimeError):
    """MLE did not converge; ``best`` holds the best iterate found."""

    def __init__(self, msg: str, best: np.ndarray | None = None):
        super().__init__(msg)
        self.best = best


def side_effects(basis: str) -> tuple[np.ndarray, np.ndarray]:
    """(bit 0, bit 1) effects of one receiver in the given basis."""
    if basis == "X":
        return interferometric_projector(0.0, "plus"), interferometric_projector(0.0, "minus")
    if basis == "Y":
        return interferometric_projector(np.pi / 2, "plus"), interferometric_projector(np.pi / 2, "minus")
    if basis == "Z":
        return projector(KET0), projector(KET1)
    raise ValueError(f"unknown basis {basis!r}")


def receiver_for_basis(basis: str, base: ReceiverConfig | None = None) -> ReceiverConfig:
    base = base or ReceiverConfig()
    if basis == "X":
        return replace(base, mode=SwitchMode.OVERLAP, theta_tps=0.0, drive_voltage=0.0)
    if basis == "Y":
        return replace(base, mode=SwitchMode.OVERLAP, theta_tps=np.pi / 2, drive_voltage=0.0)
    if basis == "Z":
        return replace(base, mode=SwitchMode.REVERSE, theta_tps=0.0, drive_voltage=0.0)
    raise ValueError(f"unknown basis {basis!r}")


@dataclass(frozen=True)
class TomographySetting:
    basis_a: str
    basis_b: str

    @property
    def label(self) -> str:
        return self.basis_a + self.basis_b

    @property
    def effects(self) -> np.ndarray:
        """Joint effects indexed by 2*bit_a + bit_b."""
        ea, eb = side_effects(self.basis_a), side_effects(self.basis_b)
        return np.array([np.kron(a, b) for a in ea for b in eb])

    def receivers(self, base_a: ReceiverConfig | None = None, base_b: ReceiverConfig | None = None):
        return receiver_for_basis(self.basis_a, base_a), receiver_for_basis(self.basis_b, base_b)


def measurement_set() -> list[TomographySetting]:
    return [TomographySetting(a, b) for a, b in itertools.product(BASES, BASES)]


def design_effects(settings=None) -> np.ndarray:
    settings = settings or measurement_set()
    return np.concatenate([s.effects for s in settings])


@dataclass
class TomographyData:
    """Outcome counts, shape (n_settings, 4), ordered like ``settings``."""

    counts: np.ndarray
    settings: list[TomographySetting] = field(default_factory=measurement_set)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if self.counts.shape != (len(self.settings), 4):
            raise ValueError(f"counts must have shape ({len(self.settings)}, 4)")
        if np.any(self.counts < 0):
            raise ValueError("counts must be >= 0")

    @property
    def effects(self) -> np.ndarray:
        return design_effects(self.settings)

    @property
    def frequencies(self) -> np.ndarray:
        tot = self.counts.sum(axis=1, keepdims=True)
        if np.any(tot <= 0):
            raise ValueError("a setting has no counts")
        return self.counts / tot

    @classmethod
    def from_state(cls, rho: np.ndarray, shots: float | None = None, rng: np.random.Generator | None = None):
        """Exact expected counts (shots=None gives probabilities) or multinomial samples."""
        settings = measurement_set()
        probs = np.array([[np.real(np.trace(e @ rho)) for e in s.effects] for s in settings])
        probs = np.clip(probs, 0, None)
        probs /= probs.sum(axis=1, keepdims=True)
        if shots is None:
            return cls(probs, settings)
        if rng is None:
            return cls(probs * shots, settings)
        return cls(np.array([rng.multinomial(int(shots), p) for p in probs]), settings)


# ------------------------------------------------------------ linear inversion


def _pauli_basis() -> np.ndarray:
    return np.array([np.kron(a, b) for a in _PAULI for b in _PAULI])


def linear_inversion(data: TomographyData) -> np.ndarray:
    """Least-squares Born-rule inversion; may return a non-physical matrix."""
    labels = {s.label for s in data.settings}
    if len(labels) < 9:
        raise ValueError("all nine settings are required")
    effects = data.effects
    paulis = _pauli_basis()
    A = np.real(np.einsum("kij,pji->kp", effects, paulis)) / 4.0
    rank = np.linalg.matrix_rank(A)
    if rank < 16:
        raise np.linalg.LinAlgError(f"design matrix is rank deficient ({rank} < 16)")
    coef, *_ = np.linalg.lstsq(A, data.frequencies.ravel(), rcond=None)
    rho = np.einsum("p,pij->ij", coef, paulis) / 4.0
    rho = (rho + rho.conj().T) / 2
    return rho / np.real(np.trace(rho))


def project_physical(rho: np.ndarray) -> np.ndarray:
    """Nearest density matrix by clipping negative eigenvalues."""
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    w = np.clip(w, 0, None)
    out = (v * w) @ v.conj().T
    return out / np.real(np.trace(out))


# ------------------------------------------------------------ MLE

_TRIL = np.tril_indices(4)
_OFF = np.tril_indices(4, -1)


def params_to_t(x: np.ndarray) -> np.ndarray:
    """16 reals -> lower-triangular T (real diagonal, complex below)."""
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = x[:4]
    T[_OFF] = x[4:10] + 1j * x[10:16]
    return T


def t_to_params(T: np.ndarray) -> np.ndarray:
    return np.concatenate((np.real(np.diag(T)), T[_OFF].real, T[_OFF].imag))


def rho_from_params(x: np.ndarray) -> np.ndarray:
    T = params_to_t(x)
    m = T.conj().T @ T
    return m / np.real(np.trace(m))


def params_from_rho(rho: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """T with T^dagger T = rho (after a small identity admixture for full rank)."""
    r = (1 - floor) * rho + floor * IDENTITY4 / 4
    J = np.eye(4)[::-1]
    L = np.linalg.cholesky(J @ r @ J)
    T = (J @ L @ J).conj().T
    return t_to_params(T)


def log_likelihood(rho: np.ndarray, data: TomographyData) -> float:
    """Multinomial log-likelihood up to a data-only constant."""
    p = np.real(np.einsum("kij,ji->k", data.effects, rho))
    n = data.counts.ravel()
    mask = n > 0
    return float(np.sum(n[mask] * np.log(np.maximum(p[mask], P_FLOOR))))


def _objective(x: np.ndarray, effects: np.ndarray, n: np.ndarray, n_settings_total: float):
    """Negative log-likelihood of T^dagger T / Tr and its gradient."""
    T = params_to_t(x)
    m = T.conj().T @ T
    t = np.real(np.trace(m))
    f = np.maximum(np.real(np.einsum("kij,ji->k", effects, m)), P_FLOOR)
    mask = n > 0
    ll = np.sum(n[mask] * np.log(f[mask])) - n_settings_total * np.log(t)
    M = np.einsum("k,kij->ij", np.where(mask, n / f, 0.0), effects) - (n_settings_total / t) * np.eye(4)
    G = 2.0 * (T @ M)
    grad = np.concatenate((np.real(np.diag(G)), G[_OFF].real, G[_OFF].imag))
    return -ll, -grad


def mle_gradient(x: np.ndarray, data: TomographyData) -> tuple[float, np.ndarray]:
    """Log-likelihood of the factorized state and its analytic gradient."""
    n = data.counts.ravel()
    val, g = _objective(np.asarray(x, float), data.effects, n, n.sum())
    return -val, -g


def mle_reconstruct(data: TomographyData, x0: np.ndarray | None = None, max_iter: int = MAX_ITER) -> np.ndarray:
    """Maximum-likelihood density matrix.

    Converges when the per-count log-likelihood improves by less than
    LIKELIHOOD_TOL for PATIENCE successive iterations, or when the
    optimizer reaches a stationary point.
    """
    n = data.counts.ravel()
    total = n.sum()
    if total <= 0:
        raise ValueError("no counts")
    effects = data.effects
    if x0 is None:
        try:
            start = project_physical(linear_inversion(data))
        except np.linalg.LinAlgError:
            start = IDENTITY4 / 4
        x0 = params_from_rho(start, floor=1e-3)
    scale = 1.0 / total

    def fun(x):
        v, g = _objective(x, effects, n, total)
        return v * scale, g * scale

    state = {"best": None, "prev": None, "stall": 0, "done": False}

    def callback(intermediate_result):
        val = intermediate_result.fun
        x = intermediate_result.x
        if state["prev"] is not None and state["prev"] - val < LIKELIHOOD_TOL:
            state["stall"] += 1
        else:
            state["stall"] = 0
        state["prev"] = val
        state["best"] = x.copy()
        if state["stall"] >= PATIENCE:
            state["done"] = True
            raise StopIteration

    res = minimize(fun, x0, jac=True, method="L-BFGS-B", callback=callback,
                   options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-10, "maxcor": 20})
    best = res.x if res.x is not None else state["best"]
    rho = rho_from_params(best)
    if not (state["done"] or res.success or res.nit < max_iter):
        raise ReconstructionError(f"MLE did not converge in {max_iter} iterations", rho)
    rho = (rho + rho.conj().T) / 2
    check_density_matrix(rho)
    return rho


# ------------------------------------------------------------ simulated acquisition


def outcome_bits(channel: np.ndarray, slot: np.ndarray, basis: str, bin_separation_ps: int) -> np.ndarray:
    """Map detector channel codes and slots to measurement bits.

    X/Y: port 0 -> 0, port 1 -> 1.  Z (Reverse): late slot (2T) carries
    |0>, early slot (0) carries |1>, on either port.
    """
    if basis == "Z":
        return (slot == 0).astype(np.int64)
    from .events import CHANNELS

    names = np.array(CHANNELS)[channel]
    return np.char.endswith(names.astype(str), "1").astype(np.int64)


def simulate_tomography(template, duration_s: float | None = None, seed: int | None = None,
                        window_ps: int | None = None, workers: int | None = None) -> TomographyData:
    """Run the nine settings on copies of an event-simulation plan."""
    from .analysis import DEFAULT_WINDOW_PS, rounds_from_result, slot_layout
    from .events import FixedPhase, iter_blocks

    settings = measurement_set()
    counts = np.zeros((9, 4))
    meta = {"singles": {}}
    base_seed = template.seed if seed is None else seed
    T = template.pump.bin_separation_ps
    for i, s in enumerate(settings):
        ra, rb = s.receivers(template.alice.receiver, template.bob.receiver)
        plan = replace(template,
                       alice=replace(template.alice, receiver=ra),
                       bob=replace(template.bob, receiver=rb),
                       basis_policy=FixedPhase(),
                       seed=int(np.random.SeedSequence([base_seed, i]).generate_state(1)[0]),
                       duration_s=template.duration_s if duration_s is None else duration_s)
        layout = slot_layout(plan, window_ps or DEFAULT_WINDOW_PS)
        rounds = rounds_from_result(iter_blocks(plan, workers), layout)
        ba = outcome_bits(rounds.a_channel, rounds.a_slot, s.basis_a, T)
        bb = outcome_bits(rounds.b_channel, rounds.b_slot, s.basis_b, T)
        counts[i] = np.bincount(2 * ba + bb, minlength=4)[:4]
    meta["duration_s"] = template.duration_s if duration_s is None else duration_s
    return TomographyData(counts, settings, meta)
