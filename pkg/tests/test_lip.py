import math

import numpy as np
import pytest

from ismpc.lip import (
    AxisState,
    DecomposedState,
    LipParams,
    decompose,
    recompose,
    step_exact,
    unstable_flow,
)
from helpers import rk4_lip

PARAMS = LipParams(gravity=9.81, com_height=0.33)
ETA = PARAMS.eta


def test_eta_value():
    assert ETA == pytest.approx(math.sqrt(9.81 / 0.33), rel=1e-15)
    assert ETA == pytest.approx(5.45227, rel=1e-5)


def test_params_validation():
    with pytest.raises(ValueError):
        LipParams(gravity=0.0)
    with pytest.raises(ValueError):
        LipParams(com_height=-0.3)
    with pytest.raises(ValueError):
        LipParams(gravity=float("nan"))


def test_decompose_known_values():
    dec = decompose(AxisState(com_pos=0.1, com_vel=0.05, zmp_pos=0.0), PARAMS)
    assert dec.unstable == pytest.approx(0.1 + 0.05 / ETA, rel=1e-15)
    assert dec.unstable == pytest.approx(0.10917, abs=5e-6)
    assert dec.stable == pytest.approx(0.1 - 0.05 / ETA, rel=1e-15)

    dec0 = decompose(AxisState(com_pos=0.0, com_vel=0.0, zmp_pos=0.3), PARAMS)
    assert dec0.unstable == 0.0
    assert dec0.stable == 0.0


def test_recompose_known_values():
    st = recompose(DecomposedState(unstable=0.2, stable=0.0), zmp_pos=0.1, params=PARAMS)
    assert st.com_pos == pytest.approx(0.1, rel=1e-15)
    assert st.com_vel == pytest.approx(0.1 * ETA, rel=1e-15)
    assert st.com_vel == pytest.approx(0.54523, abs=5e-6)
    assert st.zmp_pos == 0.1


def test_round_trip_random():
    rng = np.random.RandomState(7)
    for _ in range(200):
        st = AxisState(
            com_pos=float(rng.randn()),
            com_vel=float(rng.randn()),
            zmp_pos=float(rng.randn()),
        )
        back = recompose(decompose(st, PARAMS), st.zmp_pos, PARAMS)
        assert back.com_pos == pytest.approx(st.com_pos, abs=1e-12)
        assert back.com_vel == pytest.approx(st.com_vel, abs=1e-12)


def test_step_exact_matches_fine_integration():
    rng = np.random.RandomState(3)
    for _ in range(40):
        st = AxisState(
            com_pos=float(0.3 * rng.randn()),
            com_vel=float(0.5 * rng.randn()),
            zmp_pos=float(0.3 * rng.randn()),
        )
        zv = float(rng.randn())
        d0, d1 = float(0.5 * rng.randn()), float(rng.randn())
        dt = float(10 ** rng.uniform(-3, math.log10(0.5)))
        out = step_exact(st, zv, (d0, d1), dt, PARAMS)
        ref = rk4_lip(st.com_pos, st.com_vel, st.zmp_pos, zv, d0, d1, dt, ETA**2)
        assert out.com_pos == pytest.approx(ref[0], abs=1e-9)
        assert out.com_vel == pytest.approx(ref[1], abs=1e-9)
        assert out.zmp_pos == pytest.approx(ref[2], abs=1e-12)


def test_step_exact_equilibrium_under_constant_disturbance():
    # com leaning against a constant disturbance with the CoM at rest is
    # a fixed point: x_c - x_z = -d / eta^2, zero velocity, zero input
    d = 0.4
    offset = -d / ETA**2
    st = AxisState(com_pos=offset, com_vel=0.0, zmp_pos=0.0)
    cur = st
    for _ in range(50):
        cur = step_exact(cur, 0.0, (d, 0.0), 0.01, PARAMS)
    assert cur.com_pos == pytest.approx(offset, abs=1e-12)
    assert cur.com_vel == pytest.approx(0.0, abs=1e-10)
    assert cur.zmp_pos == 0.0


def test_step_exact_semigroup():
    st = AxisState(com_pos=0.02, com_vel=-0.1, zmp_pos=0.01)
    zv, dist = 0.3, (0.2, 0.5)
    one = step_exact(st, zv, dist, 0.02, PARAMS)
    half = step_exact(st, zv, dist, 0.01, PARAMS)
    # disturbance at the second interval start continues the same affine law
    two = step_exact(half, zv, (dist[0] + dist[1] * 0.01, dist[1]), 0.01, PARAMS)
    assert two.com_pos == pytest.approx(one.com_pos, abs=1e-10)
    assert two.com_vel == pytest.approx(one.com_vel, abs=1e-10)
    assert two.zmp_pos == pytest.approx(one.zmp_pos, abs=1e-14)


def test_capture_condition():
    # x_u on the zmp with zero zmp velocity and no disturbance stays put
    st = AxisState(com_pos=0.05, com_vel=-0.05 * ETA, zmp_pos=0.0)
    assert decompose(st, PARAMS).unstable == pytest.approx(0.0, abs=1e-15)
    cur = st
    for _ in range(100):
        cur = step_exact(cur, 0.0, (0.0, 0.0), 0.01, PARAMS)
        assert decompose(cur, PARAMS).unstable == pytest.approx(0.0, abs=1e-12)


def test_unstable_flow_matches_step_exact():
    rng = np.random.RandomState(11)
    for _ in range(50):
        st = AxisState(
            com_pos=float(0.2 * rng.randn()),
            com_vel=float(0.4 * rng.randn()),
            zmp_pos=float(0.2 * rng.randn()),
        )
        zv = float(rng.randn())
        dist = (float(rng.randn()), float(rng.randn()))
        dt = float(rng.uniform(0.005, 0.3))
        xu = unstable_flow(decompose(st, PARAMS), st.zmp_pos, zv, dist, dt, PARAMS)
        full = step_exact(st, zv, dist, dt, PARAMS)
        assert xu == pytest.approx(decompose(full, PARAMS).unstable, abs=1e-12)


def test_unstable_flow_frozen_zmp_exponential():
    # with z fixed and no disturbance: x_u(t) = z + (x_u0 - z) e^(eta t)
    xu0, z, dt = 0.03, 0.01, 0.12
    out = unstable_flow(
        DecomposedState(unstable=xu0, stable=0.0), z, 0.0, (0.0, 0.0), dt, PARAMS
    )
    assert out == pytest.approx(z + (xu0 - z) * math.exp(ETA * dt), rel=1e-13)


def test_step_rejects_bad_dt():
    st = AxisState(com_pos=0.0, com_vel=0.0, zmp_pos=0.0)
    with pytest.raises(ValueError):
        step_exact(st, 0.0, (0.0, 0.0), 0.0, PARAMS)
    with pytest.raises(ValueError):
        step_exact(st, 0.0, (0.0, 0.0), -0.01, PARAMS)
    with pytest.raises(ValueError):
        unstable_flow(DecomposedState(0.0, 0.0), 0.0, 0.0, (0.0, 0.0), -1.0, PARAMS)


def test_axis_state_rejects_nonfinite():
    with pytest.raises(ValueError):
        AxisState(com_pos=float("inf"), com_vel=0.0, zmp_pos=0.0)
