"""Linear inverted pendulum dynamics with an additive CoM disturbance.

The model is the planar LIP with constant CoM height: along each horizontal
axis the CoM position x_c obeys

    x''_c = eta^2 (x_c - x_z) + d,      eta = sqrt(g / z_c)

where x_z is the ZMP position (the control input is the ZMP velocity) and
d is a disturbing acceleration acting on the CoM. The two axes are
decoupled and share the same eta, so everything here is scalar per axis.

The coordinate change

    x_u = x_c + x'_c / eta        (divergent component)
    x_s = x_c - x'_c / eta        (convergent component)

splits the dynamics into two first-order flows

    x'_u =  eta (x_u - x_z) + d / eta
    x'_s = -eta (x_s - x_z) - d / eta

which admit closed-form solutions when x_z moves at constant velocity and
d is affine in time over the step. All propagation in this package goes
through those closed forms; there is no approximate integration anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "LipParams",
    "AxisState",
    "DecomposedState",
    "PlanarState",
    "decompose",
    "recompose",
    "step_exact",
    "unstable_flow",
]


@dataclass(frozen=True)
class LipParams:
    """Physical parameters of the pendulum.

    Attributes:
        gravity: Gravitational acceleration in m/s^2.
        com_height: Constant CoM height z_c in m.
    """

    gravity: float = 9.81
    com_height: float = 0.33

    def __post_init__(self) -> None:
        if not (self.gravity > 0.0) or not math.isfinite(self.gravity):
            raise ValueError(f"gravity must be positive and finite, got {self.gravity}")
        if not (self.com_height > 0.0) or not math.isfinite(self.com_height):
            raise ValueError(f"com_height must be positive and finite, got {self.com_height}")

    @property
    def eta(self) -> float:
        """Natural frequency sqrt(g / z_c) in 1/s."""
        return math.sqrt(self.gravity / self.com_height)


@dataclass(frozen=True)
class AxisState:
    """State of one horizontal axis: CoM position/velocity and ZMP position."""

    com_pos: float
    com_vel: float
    zmp_pos: float

    def __post_init__(self) -> None:
        for name in ("com_pos", "com_vel", "zmp_pos"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)}")


@dataclass(frozen=True)
class DecomposedState:
    """Divergent/convergent coordinates of one axis."""

    unstable: float
    stable: float


@dataclass(frozen=True)
class PlanarState:
    """Both horizontal axes of the pendulum."""

    x: AxisState
    y: AxisState


def decompose(state: AxisState, params: LipParams) -> DecomposedState:
    """Split an axis state into divergent and convergent components.

    Args:
        state: CoM/ZMP state of the axis.
        params: Pendulum parameters.

    Returns:
        DecomposedState with x_u = x_c + x'_c/eta and x_s = x_c - x'_c/eta.
    """
    eta = params.eta
    return DecomposedState(
        unstable=state.com_pos + state.com_vel / eta,
        stable=state.com_pos - state.com_vel / eta,
    )


def recompose(dec: DecomposedState, zmp_pos: float, params: LipParams) -> AxisState:
    """Inverse of :func:`decompose`.

    The ZMP position is not part of the decomposition and must be supplied.
    """
    eta = params.eta
    return AxisState(
        com_pos=0.5 * (dec.unstable + dec.stable),
        com_vel=0.5 * eta * (dec.unstable - dec.stable),
        zmp_pos=zmp_pos,
    )


def _affine_flow(y0: float, a: float, c0: float, c1: float, dt: float) -> float:
    """Exact solution at time dt of y' = a y + c0 + c1 t, y(0) = y0.

    Uses expm1 so the a*dt -> 0 limit stays accurate.
    """
    adt = a * dt
    em1 = math.expm1(adt)
    # I0 = int_0^dt e^{a(dt-s)} ds, I1 = int_0^dt e^{a(dt-s)} s ds
    i0 = em1 / a
    i1 = (em1 - adt) / (a * a)
    return (1.0 + em1) * y0 + c0 * i0 + c1 * i1


def step_exact(
    state: AxisState,
    zmp_vel: float,
    disturbance: tuple[float, float],
    dt: float,
    params: LipParams,
) -> AxisState:
    """Propagate one axis over an interval with exact closed-form flow.

    Over the interval the ZMP moves at constant velocity and the
    disturbance is affine: d(t) = d0 + d1 t for t in [0, dt].

    Args:
        state: State at the start of the interval.
        zmp_vel: ZMP velocity held constant over the interval, m/s.
        disturbance: Pair (d0, d1), value and slope of the disturbing
            acceleration at the interval start.
        dt: Interval length in s, must be positive.
        params: Pendulum parameters.

    Returns:
        State at the end of the interval.
    """
    if not (dt > 0.0):
        raise ValueError(f"dt must be positive, got {dt}")
    eta = params.eta
    d0, d1 = disturbance
    dec = decompose(state, params)
    z0 = state.zmp_pos
    v = zmp_vel
    xu = _affine_flow(dec.unstable, eta, -eta * z0 + d0 / eta, -eta * v + d1 / eta, dt)
    xs = _affine_flow(dec.stable, -eta, eta * z0 - d0 / eta, eta * v - d1 / eta, dt)
    return recompose(DecomposedState(unstable=xu, stable=xs), z0 + v * dt, params)


def unstable_flow(
    dec: DecomposedState,
    zmp_pos: float,
    zmp_vel: float,
    disturbance: tuple[float, float],
    dt: float,
    params: LipParams,
) -> float:
    """Closed-form value of the divergent component after an interval.

    Same interval model as :func:`step_exact` but propagates only x_u,
    which is all the stability machinery needs.
    """
    if not (dt > 0.0):
        raise ValueError(f"dt must be positive, got {dt}")
    eta = params.eta
    d0, d1 = disturbance
    return _affine_flow(
        dec.unstable, eta, -eta * zmp_pos + d0 / eta, -eta * zmp_vel + d1 / eta, dt
    )
