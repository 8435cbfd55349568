"""Disturbance signal tests.

Analytic kinds are checked against their closed forms; the pendulum
emulation against a high-accuracy adaptive integration of the same ODE.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from ismpc.signals import (
    Constant,
    Force,
    PendulumDisturbance,
    Ramp,
    Sinusoid,
    Sum,
    pendulum_disturbance,
    preview_samples,
)


def test_analytic_kinds_match_closed_forms():
    rng = np.random.RandomState(2)
    sin = Sinusoid(offset=0.2, amplitude=0.15, angular_freq=0.45 * math.pi, phase=0.3)
    for t in rng.uniform(0.0, 10.0, size=20):
        assert Constant(0.4).sample(t) == (0.4, 0.0)
        assert Ramp(value=0.1, slope=0.2).sample(t) == (0.1 + 0.2 * t, 0.2)
        v, s = sin.sample(t)
        assert abs(v - (0.2 + 0.15 * math.sin(0.45 * math.pi * t + 0.3))) < 1e-15
        assert abs(s - 0.15 * 0.45 * math.pi * math.cos(0.45 * math.pi * t + 0.3)) < 1e-15
        assert Force(force_newtons=1.8, mass=4.5).sample(t) == (0.4, 0.0)


def test_sum_adds_values_and_slopes():
    total = Constant(0.2) + Sinusoid(amplitude=0.15, angular_freq=2.0 * math.pi)
    assert isinstance(total, Sum)
    v, s = total.sample(0.125)
    assert abs(v - (0.2 + 0.15 * math.sin(0.25 * math.pi))) < 1e-15
    assert abs(s - 0.15 * 2.0 * math.pi * math.cos(0.25 * math.pi)) < 1e-15
    nested = total + Ramp(slope=1.0)
    assert len(nested.signals) == 3, "sums should flatten"


def test_force_requires_positive_mass():
    with pytest.raises(ValueError):
        Force(force_newtons=1.0, mass=0.0)


def test_preview_returns_grid_secants():
    sig = Sinusoid(offset=0.2, amplitude=0.15, angular_freq=2.0 * math.pi)
    value, slopes = preview_samples(sig, t=0.3, dt=0.01, n=50)
    assert value == sig.value_at(0.3)
    grid = 0.3 + 0.01 * np.arange(51)
    expected = np.diff([sig.value_at(g) for g in grid]) / 0.01
    assert np.allclose(slopes, expected, atol=1e-14)
    # affine kinds are previewed exactly
    _, ramp_slopes = preview_samples(Ramp(value=0.1, slope=0.7), 1.0, 0.01, 10)
    assert np.allclose(ramp_slopes, 0.7, atol=1e-12)


def test_pendulum_at_rest_is_silent():
    pend = pendulum_disturbance(0.2, 0.5, lambda t: 0.0)
    for k in range(100):
        v, s = pend.sample(0.01 * k, 0.01)
        assert v == 0.0 and s == 0.0


def test_massless_pendulum_is_silent():
    pend = pendulum_disturbance(0.0, 0.5, lambda t: 2.0 * math.sin(5.0 * t), theta0=0.4)
    for k in range(50):
        v, _ = pend.sample(0.01 * k, 0.01)
        assert v == 0.0


def test_pendulum_small_oscillation_period():
    length = 0.5
    pend = pendulum_disturbance(0.2, length, lambda t: 0.0, theta0=0.02)
    dt = 1e-3
    values = [pend.sample(dt * k)[0] for k in range(4000)]
    sign = np.sign(values)
    crossings = np.nonzero(sign[1:] * sign[:-1] < 0)[0] * dt
    spacing = np.diff(crossings)
    assert abs(np.mean(spacing) - math.pi * math.sqrt(length / 9.81)) < 0.01 * math.pi


def test_pendulum_matches_adaptive_integration():
    attach = lambda t: 0.5 * math.sin(3.0 * t)
    pend = pendulum_disturbance(0.2, 0.4, attach, theta0=0.1)
    value, _ = pend.sample(2.0)

    def rhs(t, y):
        th, om = y
        return [om, -(9.81 * math.sin(th) + attach(t) * math.cos(th)) / 0.4]

    ref = solve_ivp(rhs, (0.0, 2.0), [0.1, 0.0], rtol=1e-11, atol=1e-12)
    th, om = ref.y[:, -1]
    assert abs(pend.theta - th) < 1e-7
    assert abs(pend.omega - om) < 1e-7
    alpha = rhs(2.0, (th, om))[1]
    bob_acc = attach(2.0) + 0.4 * (alpha * math.cos(th) - om * om * math.sin(th))
    assert abs(value - (-0.2 / 4.5 * bob_acc)) < 1e-7


def test_pendulum_rejects_time_reversal():
    pend = pendulum_disturbance(0.2, 0.5, lambda t: 0.0)
    pend.sample(1.0)
    with pytest.raises(ValueError, match="nondecreasing"):
        pend.sample(0.5)


def test_pendulum_cannot_be_previewed():
    pend = pendulum_disturbance(0.2, 0.5, lambda t: 0.0)
    with pytest.raises(TypeError):
        preview_samples(pend, 0.0, 0.01, 10)
    blend = Constant(0.1) + pend
    assert not blend.supports_preview


def test_pendulum_secant_slope_is_consistent():
    pend = pendulum_disturbance(0.2, 0.5, lambda t: 0.3 * math.cos(4.0 * t), theta0=0.05)
    dt = 0.01
    v0, s0 = pend.sample(0.0, dt)
    v1, _ = pend.sample(dt, dt)
    assert abs(v0 + s0 * dt - v1) < 1e-12


def test_pendulum_determinism():
    def build():
        return pendulum_disturbance(0.2, 0.5, lambda t: 0.4 * math.sin(2.0 * t), theta0=0.03)

    a, b = build(), build()
    for k in range(50):
        assert a.sample(0.01 * k, 0.01) == b.sample(0.01 * k, 0.01)


def test_pendulum_parameter_validation():
    with pytest.raises(ValueError):
        pendulum_disturbance(-0.1, 0.5, lambda t: 0.0)
    with pytest.raises(ValueError):
        pendulum_disturbance(0.2, 0.0, lambda t: 0.0)
    with pytest.raises(ValueError):
        pendulum_disturbance(0.2, 0.5, lambda t: 0.0, robot_mass=0.0)
