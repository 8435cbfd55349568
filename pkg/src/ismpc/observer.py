"""State observer with a second-order internal disturbance model.

The per-axis plant is extended with the disturbance and its slope:

    state (x_c, x'_c, x_z, d, d'),  input u = ZMP velocity,
    measurements y = (x_c, x_z)

    x''_c = eta^2 (x_c - x_z) + d,   x'_z = u,   d'' = 0

The observer integrates

    xh' = A xh + B u + G (C xh - y)

so the estimation error obeys e' = (A + G C) e. Gains are designed by
pole placement: the measured ZMP channel is scalar and decoupled (its
column of G has a single entry), so one real pole is assigned to it
directly and the remaining four are placed on the observable
(x_c, x'_c, d, d') chain with Ackermann's formula.

Discrete updates hold the innovation at its start-of-interval value and
use the exact matrix exponential of A, so zero innovation propagates the
estimate exactly like the plant model. That scheme is conditionally
stable, hence the hard dt * max|pole| < 0.5 guard.

A constant d is reconstructed exactly in steady state and a ramp
disturbance with zero steady-state error (second-order internal model);
faster variation leaves a bounded residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .lip import LipParams

__all__ = [
    "ObserverState",
    "ObserverGain",
    "Measurement",
    "build_extended_matrices",
    "design_gain",
    "DiscreteObserver",
    "update",
]

STABILITY_MARGIN = 0.5  # max allowed dt * |pole|


def build_extended_matrices(params: LipParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (A, B, C) of the disturbance-extended per-axis model."""
    e2 = params.eta**2
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [e2, 0.0, -e2, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0, 0.0],
        ]
    )
    B = np.array([0.0, 0.0, 1.0, 0.0, 0.0])
    C = np.array([[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0, 0.0]])
    return A, B, C


@dataclass(frozen=True, eq=False)
class ObserverState:
    """Estimate of the extended state."""

    estimate: np.ndarray

    def __post_init__(self) -> None:
        est = np.asarray(self.estimate, dtype=float).reshape(-1)
        if est.shape != (5,):
            raise ValueError(f"estimate must have 5 entries, got shape {est.shape}")
        if not np.all(np.isfinite(est)):
            raise ValueError("estimate contains non-finite entries")
        object.__setattr__(self, "estimate", est)

    @property
    def com_pos(self) -> float:
        return float(self.estimate[0])

    @property
    def com_vel(self) -> float:
        return float(self.estimate[1])

    @property
    def zmp_pos(self) -> float:
        return float(self.estimate[2])

    @property
    def disturbance(self) -> float:
        return float(self.estimate[3])

    @property
    def disturbance_slope(self) -> float:
        return float(self.estimate[4])


@dataclass(frozen=True)
class Measurement:
    """Measured CoM and ZMP positions of one axis."""

    com_pos: float
    zmp_pos: float


@dataclass(frozen=True, eq=False)
class ObserverGain:
    """Placed gain matrix and the poles it realizes."""

    G: np.ndarray
    poles: tuple[complex, ...]


def _split_poles(poles) -> tuple[float, list[complex]]:
    """Validate a pole set and pick the ZMP-channel pole.

    Requires 5 poles with negative real part forming a conjugate-closed
    set. The median real pole (the count of real poles is odd for any
    conjugate-closed set of 5) goes to the decoupled ZMP channel.
    """
    ps = [complex(p) for p in poles]
    if len(ps) != 5:
        raise ValueError(f"exactly 5 poles required, got {len(ps)}")
    for p in ps:
        if not (math.isfinite(p.real) and math.isfinite(p.imag)):
            raise ValueError("poles must be finite")
        if p.real >= 0.0:
            raise ValueError(f"poles must have negative real part, got {p}")
    key = sorted(ps, key=lambda p: (round(p.real, 9), round(p.imag, 9)))
    conj = sorted(
        (p.conjugate() for p in ps), key=lambda p: (round(p.real, 9), round(p.imag, 9))
    )
    for a, b in zip(key, conj):
        if abs(a - b) > 1e-9 * max(1.0, abs(a)):
            raise ValueError("pole set must be closed under conjugation")
    reals = sorted(p.real for p in ps if abs(p.imag) <= 1e-9 * max(1.0, abs(p)))
    if not reals:
        raise ValueError("pole set must contain at least one real pole")
    z_pole = reals[len(reals) // 2]
    rest: list[complex] = []
    used = False
    for p in sorted(ps, key=lambda p: (p.real, p.imag)):
        if not used and abs(p.imag) <= 1e-9 * max(1.0, abs(p)) and p.real == z_pole:
            used = True
            continue
        rest.append(p)
    return z_pole, rest


def design_gain(params: LipParams, poles) -> ObserverGain:
    """Place the observer poles and return the gain.

    Args:
        params: Pendulum parameters (fix the model matrices).
        poles: Five desired eigenvalues of A + G C; any order, must be
            conjugate-closed with negative real parts.

    Returns:
        ObserverGain whose realized spectrum matches the request to 1e-6
        relative (verified internally).
    """
    z_pole, chain = _split_poles(poles)
    e2 = params.eta**2
    A4 = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [e2, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, 0.0, 0.0],
        ]
    )
    C4 = np.array([1.0, 0.0, 0.0, 0.0])
    obs = np.vstack([C4, C4 @ A4, C4 @ A4 @ A4, C4 @ A4 @ A4 @ A4])
    coeffs = np.poly(np.array(chain))
    qA = np.zeros((4, 4))
    P = np.eye(4)
    for c in coeffs[::-1]:
        qA += c.real * P
        P = P @ A4
    L4 = qA @ np.linalg.solve(obs, np.array([0.0, 0.0, 0.0, 1.0]))

    G = np.zeros((5, 2))
    G[[0, 1, 3, 4], 0] = -L4
    G[2, 1] = z_pole

    # Verify via characteristic-polynomial coefficients: eigenvalues of a
    # matrix with repeated poles are ill-conditioned, the coefficients are not.
    A, _B, C = build_extended_matrices(params)
    got = np.poly(A + G @ C)
    want = np.poly(np.array([complex(p) for p in poles]))
    rel = np.abs(got - want.real) / np.maximum(1.0, np.abs(want.real))
    if float(np.max(rel)) > 1e-6:
        raise ValueError(
            f"pole placement failed: characteristic polynomial {got} vs {want.real}"
        )
    return ObserverGain(G=G, poles=tuple(complex(p) for p in poles))


class DiscreteObserver:
    """Fixed-step discrete form of the observer for one axis.

    Update rule (innovation held over the interval, exact exponential):

        xh+ = Phi xh + Gamma (B u + G (C xh - y))

    with Phi = expm(A dt) and Gamma = int_0^dt expm(A s) ds.
    """

    def __init__(self, params: LipParams, gain: ObserverGain, dt: float) -> None:
        if not (dt > 0.0):
            raise ValueError(f"dt must be positive, got {dt}")
        fastest = max(abs(p) for p in gain.poles)
        if dt * fastest >= STABILITY_MARGIN:
            raise ValueError(
                f"dt * max|pole| = {dt * fastest:.3f} exceeds the stability margin "
                f"{STABILITY_MARGIN}; reduce dt or slow the poles"
            )
        self.params = params
        self.gain = gain
        self.dt = dt
        A, B, C = build_extended_matrices(params)
        M = np.zeros((10, 10))
        M[:5, :5] = A
        M[:5, 5:] = np.eye(5)
        E = expm(M * dt)
        self.phi = E[:5, :5]
        self.gamma = E[:5, 5:]
        self._A, self._B, self._C = A, B, C
        self._gamma_b = self.gamma @ B
        self._gamma_g = self.gamma @ gain.G

    def update(self, state: ObserverState, zmp_vel: float, meas: Measurement) -> ObserverState:
        """Advance the estimate by one sample."""
        xh = state.estimate
        innovation = self._C @ xh - np.array([meas.com_pos, meas.zmp_pos])
        new = self.phi @ xh + self._gamma_b * zmp_vel + self._gamma_g @ innovation
        return ObserverState(estimate=new)


_DISCRETE_CACHE: dict[tuple, DiscreteObserver] = {}


def update(
    state: ObserverState,
    gain: ObserverGain,
    zmp_vel: float,
    meas: Measurement,
    dt: float,
    params: LipParams,
) -> ObserverState:
    """One discrete observer step (functional form of DiscreteObserver)."""
    key = (gain.G.tobytes(), dt, params.gravity, params.com_height)
    obs = _DISCRETE_CACHE.get(key)
    if obs is None:
        obs = DiscreteObserver(params, gain, dt)
        if len(_DISCRETE_CACHE) > 64:
            _DISCRETE_CACHE.clear()
        _DISCRETE_CACHE[key] = obs
    return obs.update(state, zmp_vel, meas)
