"""Receiver model: operating mode and phases -> timed detection effects.

Each receiver output is a (port, arrival offset) pair.  Offsets are measured
from the arrival time of an early-bin photon travelling the short arm.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .quantum import (
    KET0,
    KET1,
    PSD_TOL,
    born_probability,
    check_effect,
    interferometric_projector,
    projector,
)


class SwitchMode(enum.Enum):
    SUPERPOSE = 1  # first stage at quadrature, three output peaks
    OVERLAP = 2  # early -> long arm, late -> short arm, single peak
    REVERSE = 3  # early -> short arm, late -> long arm, peaks 2T apart

    @classmethod
    def parse(cls, value) -> "SwitchMode":
        if isinstance(value, cls):
            return value
        if isinstance(value, int):
            return cls(value)
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValueError(f"unknown switch mode {value!r}") from None


@dataclass(frozen=True)
class ReceiverConfig:
    mode: SwitchMode = SwitchMode.OVERLAP
    theta_tps: float = 0.0
    v_pi: float = 3.37
    drive_voltage: float = 0.0
    insertion_loss_db: float = 0.0
    device_visibility: float = 1.0
    bin_separation_ps: int = 100

    def __post_init__(self):
        object.__setattr__(self, "mode", SwitchMode.parse(self.mode))
        if self.bin_separation_ps <= 0:
            raise ValueError("bin_separation_ps must be positive")
        if not 0.0 <= self.device_visibility <= 1.0:
            raise ValueError("device_visibility must lie in [0, 1]")
        if self.v_pi <= 0:
            raise ValueError("v_pi must be positive")
        if self.insertion_loss_db < 0:
            raise ValueError("insertion_loss_db must be >= 0")

    def with_phase(self, theta: float) -> "ReceiverConfig":
        """Same receiver with the static phase set to theta and no RF drive."""
        return replace(self, theta_tps=theta, drive_voltage=0.0)


@dataclass(frozen=True)
class EffectWithTiming:
    effect: np.ndarray
    port: str
    time_offset_ps: int


def wrap_phase(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = float(np.mod(theta + np.pi, 2 * np.pi) - np.pi)
    return np.pi if w == -np.pi else w


def theta_total(config: ReceiverConfig) -> float:
    """Static heater phase plus the electro-optic phase pi * V / V_pi."""
    return wrap_phase(config.theta_tps + np.pi * config.drive_voltage / config.v_pi)


def apply_device_visibility(effect: np.ndarray, v_dev: float) -> np.ndarray:
    """Scale the coherences of a single-qubit effect by v_dev."""
    if not 0.0 <= v_dev <= 1.0:
        raise ValueError(f"device visibility {v_dev!r} outside [0, 1]")
    out = np.array(effect, dtype=complex)
    out[0, 1] *= v_dev
    out[1, 0] *= v_dev
    return out


def receiver_effects(config: ReceiverConfig) -> list[EffectWithTiming]:
    """Outcome effects of one receiver, including its dephasing.

    The returned effects always sum to the identity: no outcome is discarded.
    """
    T = int(config.bin_separation_ps)
    out = []
    if config.mode is SwitchMode.SUPERPOSE:
        theta = theta_total(config)
        for port in ("plus", "minus"):
            out.append(EffectWithTiming(0.25 * projector(KET0), port, 0))
            out.append(EffectWithTiming(0.5 * interferometric_projector(theta, port), port, T))
            out.append(EffectWithTiming(0.25 * projector(KET1), port, 2 * T))
    elif config.mode is SwitchMode.OVERLAP:
        theta = theta_total(config)
        for port in ("plus", "minus"):
            out.append(EffectWithTiming(interferometric_projector(theta, port), port, T))
    else:
        for port in ("plus", "minus"):
            out.append(EffectWithTiming(0.5 * projector(KET1), port, 0))
            out.append(EffectWithTiming(0.5 * projector(KET0), port, 2 * T))
    v = config.device_visibility
    if v != 1.0:
        out = [EffectWithTiming(apply_device_visibility(e.effect, v), e.port, e.time_offset_ps) for e in out]
    return out


def time_integrated_effects(config: ReceiverConfig) -> dict[str, np.ndarray]:
    """Per-port effect when arrival times are not resolved."""
    acc = {"plus": np.zeros((2, 2), complex), "minus": np.zeros((2, 2), complex)}
    for e in receiver_effects(config):
        acc[e.port] = acc[e.port] + e.effect
    return acc


def check_completeness(effects, tol: float = PSD_TOL) -> None:
    total = sum(e.effect if isinstance(e, EffectWithTiming) else e for e in effects)
    if not np.allclose(total, np.eye(total.shape[0]), atol=tol, rtol=0):
        raise ValueError("effects do not sum to the identity")
    for e in effects:
        check_effect(e.effect if isinstance(e, EffectWithTiming) else e)


def joint_fringe(rho: np.ndarray, config_a: ReceiverConfig, config_b: ReceiverConfig,
                 thetas: np.ndarray, port_a="plus", port_b="plus") -> np.ndarray:
    """Time-integrated coincidence probability while sweeping Alice's phase."""
    eff_b = time_integrated_effects(config_b)[port_b]
    probs = []
    for th in thetas:
        eff_a = time_integrated_effects(config_a.with_phase(th))[port_a]
        probs.append(born_probability(rho, np.kron(eff_a, eff_b)))
    return np.array(probs)


def fringe_visibility(values) -> float:
    values = np.asarray(values, dtype=float)
    hi, lo = values.max(), values.min()
    return float((hi - lo) / (hi + lo))


def calibrate_device_visibility(joint_visibility: float, split: str = "symmetric") -> tuple[float, float]:
    """Per-receiver dephasing giving a target two-photon fringe visibility.

    Coherence scaling on both sides multiplies, so the joint visibility of
    |Phi+> is v_a * v_b.  'symmetric' splits evenly, 'alice' puts all of it
    on Alice's receiver.
    """
    if not 0.0 <= joint_visibility <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    if split == "symmetric":
        v = float(np.sqrt(joint_visibility))
        return v, v
    if split == "alice":
        return float(joint_visibility), 1.0
    raise ValueError(f"unknown split {split!r}")


def transmission(loss_db: float) -> float:
    """Survival probability for a loss in dB."""
    if loss_db < 0:
        raise ValueError("loss must be >= 0 dB")
    return 10.0 ** (-loss_db / 10.0)

