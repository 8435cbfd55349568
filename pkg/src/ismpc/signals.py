"""Disturbance signal generators.

Signals are scalar accelerations of time, sampled per interval as a
(value, slope) pair so the plant can hold them affine over each sampling
interval and integrate exactly. Analytic kinds (constant, ramp,
sinusoid, external force) report the instantaneous derivative as the
slope; the pendulum emulation is stateful, integrates ahead over the
requested interval, and reports the secant slope instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "DisturbanceSignal",
    "Constant",
    "Ramp",
    "Sinusoid",
    "Force",
    "Sum",
    "PendulumDisturbance",
    "pendulum_disturbance",
    "preview_samples",
]


class DisturbanceSignal:
    """Base class: a scalar disturbance acceleration over time.

    `supports_preview` marks signals whose future can be evaluated
    without side effects; stateful emulations set it to False and can
    only be sampled with nondecreasing timestamps.
    """

    supports_preview = True

    def value_at(self, t: float) -> float:
        raise NotImplementedError

    def slope_at(self, t: float) -> float:
        raise NotImplementedError

    def sample(self, t: float, dt: float = 0.0) -> tuple[float, float]:
        """Affine representation (value, slope) of the signal on [t, t+dt]."""
        return self.value_at(t), self.slope_at(t)

    def __add__(self, other: "DisturbanceSignal") -> "Sum":
        return Sum((self, other))


@dataclass(frozen=True)
class Constant(DisturbanceSignal):
    """Constant acceleration."""

    value: float = 0.0

    def value_at(self, t: float) -> float:
        return self.value

    def slope_at(self, t: float) -> float:
        return 0.0


@dataclass(frozen=True)
class Ramp(DisturbanceSignal):
    """Affine acceleration value + slope * t."""

    value: float = 0.0
    slope: float = 0.0

    def value_at(self, t: float) -> float:
        return self.value + self.slope * t

    def slope_at(self, t: float) -> float:
        return self.slope


@dataclass(frozen=True)
class Sinusoid(DisturbanceSignal):
    """offset + amplitude * sin(angular_freq * t + phase)."""

    offset: float = 0.0
    amplitude: float = 0.0
    angular_freq: float = 0.0
    phase: float = 0.0

    def value_at(self, t: float) -> float:
        return self.offset + self.amplitude * math.sin(self.angular_freq * t + self.phase)

    def slope_at(self, t: float) -> float:
        return self.amplitude * self.angular_freq * math.cos(self.angular_freq * t + self.phase)


@dataclass(frozen=True)
class Force(DisturbanceSignal):
    """Constant external force on a body of the given mass.

    The resulting disturbance acceleration is force_newtons / mass.
    """

    force_newtons: float = 0.0
    mass: float = 4.5

    def __post_init__(self) -> None:
        if not (self.mass > 0.0):
            raise ValueError(f"mass must be positive, got {self.mass}")

    def value_at(self, t: float) -> float:
        return self.force_newtons / self.mass

    def slope_at(self, t: float) -> float:
        return 0.0


@dataclass(frozen=True)
class Sum(DisturbanceSignal):
    """Pointwise sum of signals."""

    signals: tuple = ()

    def __post_init__(self) -> None:
        flat = []
        for s in self.signals:
            if isinstance(s, Sum):
                flat.extend(s.signals)
            else:
                flat.append(s)
        object.__setattr__(self, "signals", tuple(flat))

    @property
    def supports_preview(self) -> bool:  # type: ignore[override]
        return all(s.supports_preview for s in self.signals)

    def value_at(self, t: float) -> float:
        return sum(s.value_at(t) for s in self.signals)

    def slope_at(self, t: float) -> float:
        return sum(s.slope_at(t) for s in self.signals)

    def sample(self, t: float, dt: float = 0.0) -> tuple[float, float]:
        parts = [s.sample(t, dt) for s in self.signals]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)


class PendulumDisturbance(DisturbanceSignal):
    """Reaction of a hanging pendulum carried by the robot.

    A point mass on a rigid massless rod hangs from an attachment point
    whose horizontal acceleration is supplied by `attach_motion`. The
    coupling is one-way: the pendulum is driven by the attachment motion
    and its horizontal reaction force, divided by the robot mass, is
    returned as a disturbance acceleration. With theta measured from the
    downward vertical,

        theta'' = -(g/l) sin(theta) - (a(t)/l) cos(theta)
        d(t)    = -(m_p / M) * (a + l * (theta'' cos(theta) - theta'^2 sin(theta)))

    The internal state advances with classical RK4 at a fixed maximum
    substep; sampling timestamps must be nondecreasing. `sample(t, dt)`
    with dt > 0 integrates over [t, t+dt] once and reports the secant
    slope of the reaction under the attachment acceleration seen during
    that interval, advancing the state to t+dt; in closed loop this makes
    the zero-order hold of the attachment acceleration exact, because
    each interval is integrated while its own hold value is in effect.
    Re-querying the most recent (t, dt) returns the cached sample.
    """

    supports_preview = False

    def __init__(
        self,
        mass_p: float,
        length_p: float,
        attach_motion: Callable[[float], float],
        robot_mass: float = 4.5,
        gravity: float = 9.81,
        theta0: float = 0.0,
        omega0: float = 0.0,
        max_substep: float = 1e-3,
    ) -> None:
        if mass_p < 0.0:
            raise ValueError(f"pendulum mass must be nonnegative, got {mass_p}")
        if not (length_p > 0.0):
            raise ValueError(f"pendulum length must be positive, got {length_p}")
        if not (robot_mass > 0.0):
            raise ValueError(f"robot mass must be positive, got {robot_mass}")
        if not (max_substep > 0.0):
            raise ValueError(f"max_substep must be positive, got {max_substep}")
        self.mass_p = mass_p
        self.length_p = length_p
        self.attach_motion = attach_motion
        self.robot_mass = robot_mass
        self.gravity = gravity
        self.max_substep = max_substep
        self._t = 0.0
        self._state = np.array([theta0, omega0], dtype=float)
        self._last: tuple | None = None

    @property
    def theta(self) -> float:
        """Current angle from the downward vertical."""
        return float(self._state[0])

    @property
    def omega(self) -> float:
        """Current angular velocity."""
        return float(self._state[1])

    def _rhs(self, t: float, state: np.ndarray) -> np.ndarray:
        th, om = state
        acc = -(self.gravity * math.sin(th) + self.attach_motion(t) * math.cos(th)) / self.length_p
        return np.array([om, acc])

    def _integrate(self, t0: float, t1: float, state: np.ndarray) -> np.ndarray:
        span = t1 - t0
        n = max(1, int(math.ceil(span / self.max_substep - 1e-12)))
        h = span / n
        for i in range(n):
            t = t0 + i * h
            k1 = self._rhs(t, state)
            k2 = self._rhs(t + h / 2.0, state + h / 2.0 * k1)
            k3 = self._rhs(t + h / 2.0, state + h / 2.0 * k2)
            k4 = self._rhs(t + h, state + h * k3)
            state = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return state

    def _reaction(self, t: float, state: np.ndarray) -> float:
        th, om = state
        alpha = self._rhs(t, state)[1]
        bob_acc = self.attach_motion(t) + self.length_p * (
            alpha * math.cos(th) - om * om * math.sin(th)
        )
        return -self.mass_p / self.robot_mass * bob_acc

    def value_at(self, t: float) -> float:
        return self.sample(t)[0]

    def slope_at(self, t: float) -> float:
        raise TypeError("pendulum reaction has no closed-form slope; use sample(t, dt)")

    def sample(self, t: float, dt: float = 0.0) -> tuple[float, float]:
        if self._last is not None and self._last[0] == t and self._last[1] == dt:
            return self._last[2], self._last[3]
        if t < self._t - 1e-12:
            raise ValueError(
                f"pendulum signal must be sampled with nondecreasing times: "
                f"got {t} after {self._t}"
            )
        if t > self._t:
            self._state = self._integrate(self._t, t, self._state)
            self._t = t
        value = self._reaction(t, self._state)
        if dt <= 0.0:
            return value, 0.0
        state1 = self._integrate(t, t + dt, self._state)
        value1 = self._reaction(t + dt, state1)
        self._state = state1
        self._t = t + dt
        out = (value, (value1 - value) / dt)
        self._last = (t, dt, out[0], out[1])
        return out


def pendulum_disturbance(
    mass_p: float,
    length_p: float,
    attach_motion: Callable[[float], float],
    **kwargs,
) -> PendulumDisturbance:
    """Build the carried-pendulum disturbance signal.

    Args:
        mass_p: pendulum point mass in kg (zero yields a null signal).
        length_p: rod length in m.
        attach_motion: horizontal acceleration of the attachment point as
            a function of time; in closed loop this is typically a
            zero-order hold of the commanded CoM acceleration.
        **kwargs: forwarded to PendulumDisturbance (robot_mass, gravity,
            theta0, omega0, max_substep).
    """
    return PendulumDisturbance(mass_p, length_p, attach_motion, **kwargs)


def preview_samples(
    signal: DisturbanceSignal, t: float, dt: float, n: int
) -> tuple[float, np.ndarray]:
    """Piecewise-linear preview of a signal on the sampling grid.

    Returns the current value and the n secant slopes connecting the
    grid values t, t+dt, ..., t+n*dt, i.e. the piecewise-linear
    interpolant of the true signal at the sampling instants.

    Raises:
        TypeError: for stateful signals that cannot be previewed.
    """
    if not signal.supports_preview:
        raise TypeError(f"{type(signal).__name__} cannot be previewed ahead of time")
    if n < 0:
        raise ValueError(f"preview length must be nonnegative, got {n}")
    grid = t + dt * np.arange(n + 1)
    values = np.array([signal.value_at(g) for g in grid])
    return float(values[0]), np.diff(values) / dt
