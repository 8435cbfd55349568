"""Observer design and discrete-update tests.

Pole placement is checked against numpy's eigenvalue solver; discrete
updates are checked against exact closed-form propagation of the model.
"""

import math

import numpy as np
import pytest

from ismpc.lip import AxisState, LipParams, step_exact
from ismpc.observer import (
    DiscreteObserver,
    Measurement,
    ObserverState,
    build_extended_matrices,
    design_gain,
    update,
)

PARAMS = LipParams()
POLES = (-8.0, -9.0, -10.0, -11.0, -12.0)
DT = 0.01


def test_extended_matrices_shapes_and_physics():
    A, B, C = build_extended_matrices(PARAMS)
    assert A.shape == (5, 5) and B.shape == (5,) and C.shape == (2, 5)
    e2 = PARAMS.eta**2
    # CoM acceleration row: eta^2 (x_c - x_z) + d
    assert np.allclose(A[1], [e2, 0.0, -e2, 1.0, 0.0])
    # ZMP integrates the input, the disturbance integrates its slope.
    assert B[2] == 1.0 and A[3, 4] == 1.0
    assert np.count_nonzero(A[2]) == 0 and np.count_nonzero(A[4]) == 0


def test_pole_placement_matches_eigenvalue_oracle():
    gain = design_gain(PARAMS, POLES)
    A, _, C = build_extended_matrices(PARAMS)
    realized = np.sort_complex(np.linalg.eigvals(A + gain.G @ C))
    want = np.sort_complex(np.array(POLES, dtype=complex))
    assert np.max(np.abs(realized - want)) < 1e-6


def test_median_real_pole_goes_to_zmp_channel():
    gain = design_gain(PARAMS, POLES)
    # Median of {-8,...,-12} is -10; the ZMP channel is decoupled and scalar.
    assert gain.G[2, 1] == -10.0
    assert gain.G[2, 0] == 0.0
    col = gain.G[:, 1].copy()
    col[2] = 0.0
    assert np.count_nonzero(col) == 0


def test_complex_pole_pairs_placed():
    poles = (-8.0 + 2.0j, -8.0 - 2.0j, -9.0, -11.0 + 1.0j, -11.0 - 1.0j)
    gain = design_gain(PARAMS, poles)
    assert gain.G[2, 1] == -9.0  # the only real pole takes the ZMP channel
    A, _, C = build_extended_matrices(PARAMS)
    realized = np.sort_complex(np.linalg.eigvals(A + gain.G @ C))
    want = np.sort_complex(np.array(poles))
    assert np.max(np.abs(realized - want)) < 1e-6


def test_repeated_poles_match_characteristic_polynomial():
    gain = design_gain(PARAMS, (-10.0,) * 5)
    A, _, C = build_extended_matrices(PARAMS)
    got = np.poly(A + gain.G @ C)
    want = np.poly(np.full(5, -10.0 + 0.0j)).real  # (s + 10)^5
    assert np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want))) < 1e-6


def test_pole_validation():
    with pytest.raises(ValueError):
        design_gain(PARAMS, (-8.0, -9.0, -10.0, -11.0))  # wrong count
    with pytest.raises(ValueError):
        design_gain(PARAMS, (-8.0, -9.0, -10.0, -11.0, 1.0))  # unstable
    with pytest.raises(ValueError):
        design_gain(PARAMS, (-8.0 + 1.0j, -9.0, -10.0, -11.0, -12.0))  # no conjugate
    with pytest.raises(ValueError):
        design_gain(PARAMS, (-8.0, -9.0, -10.0, -11.0, float("nan")))


def test_design_deterministic_under_pole_reordering():
    a = design_gain(PARAMS, POLES)
    b = design_gain(PARAMS, POLES[::-1])
    assert np.array_equal(a.G, b.G)


def test_observability_rank_over_heights():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = LipParams(com_height=float(rng.uniform(0.2, 1.2)))
        A, _, C = build_extended_matrices(p)
        rows = [C]
        for i in range(1, 5):
            rows.append(rows[-1] @ A)
        O = np.vstack(rows)
        assert np.linalg.matrix_rank(O) == 5


def test_step_size_guard():
    gain = design_gain(PARAMS, (-30.0, -40.0, -50.0, -55.0, -60.0))
    with pytest.raises(ValueError):
        DiscreteObserver(PARAMS, gain, dt=0.01)  # 0.01 * 60 = 0.6 >= 0.5
    DiscreteObserver(PARAMS, gain, dt=0.005)  # 0.3 is fine
    with pytest.raises(ValueError):
        DiscreteObserver(PARAMS, design_gain(PARAMS, POLES), dt=0.0)


def test_discrete_error_dynamics_stable():
    gain = design_gain(PARAMS, POLES)
    obs = DiscreteObserver(PARAMS, gain, DT)
    A, _, C = build_extended_matrices(PARAMS)
    E = obs.phi + obs.gamma @ gain.G @ C
    assert np.max(np.abs(np.linalg.eigvals(E))) < 1.0


def test_zero_innovation_propagates_exactly_like_model():
    """Feeding the observer its own outputs reduces it to the plant model."""
    gain = design_gain(PARAMS, POLES)
    obs = DiscreteObserver(PARAMS, gain, DT)
    est = ObserverState(np.array([0.02, -0.1, 0.01, 0.06, 0.2]))
    ref = AxisState(com_pos=0.02, com_vel=-0.1, zmp_pos=0.01)
    d0, d1 = 0.06, 0.2
    for k in range(100):
        u = 0.05 * math.sin(0.3 * k)
        meas = Measurement(com_pos=est.com_pos, zmp_pos=est.zmp_pos)
        est = obs.update(est, u, meas)
        ref = step_exact(ref, u, (d0, d1), DT, PARAMS)
        d0 += d1 * DT
    assert abs(est.com_pos - ref.com_pos) < 1e-9
    assert abs(est.com_vel - ref.com_vel) < 1e-9
    assert abs(est.zmp_pos - ref.zmp_pos) < 1e-9
    assert abs(est.disturbance - d0) < 1e-9
    assert abs(est.disturbance_slope - d1) < 1e-9


def test_constant_disturbance_recovered():
    """From a cold start the estimate is within 1% of a constant d by 2 s."""
    d_true = 0.08
    gain = design_gain(PARAMS, POLES)
    obs = DiscreteObserver(PARAMS, gain, DT)
    # Stationary true trajectory: x_c = -d/eta^2 balances the disturbance.
    xc = -d_true / PARAMS.eta**2
    est = ObserverState(np.zeros(5))
    hit = None
    for k in range(200):
        meas = Measurement(com_pos=xc, zmp_pos=0.0)
        est = obs.update(est, 0.0, meas)
        if hit is None and abs(est.disturbance - d_true) < 0.01 * d_true:
            hit = (k + 1) * DT
    assert hit is not None and hit <= 2.0
    assert abs(est.disturbance - d_true) < 0.01 * d_true
    assert abs(est.disturbance_slope) < 0.01
    assert abs(est.com_pos - xc) < 1e-4


def test_ramp_disturbance_tracked_without_lag():
    """The double-integrator disturbance model tracks ramps exactly."""
    d0, d1 = 0.05, 0.3
    eta = PARAMS.eta
    gain = design_gain(PARAMS, POLES)
    obs = DiscreteObserver(PARAMS, gain, DT)
    # Start the true state on the non-divergent solution for a ramp input.
    xc = -d0 / eta**2 - d1 / eta**3
    ref = AxisState(com_pos=xc, com_vel=0.0, zmp_pos=0.0)
    est = ObserverState(np.zeros(5))
    d = d0
    for _ in range(200):
        meas = Measurement(com_pos=ref.com_pos, zmp_pos=ref.zmp_pos)
        est = obs.update(est, 0.0, meas)
        ref = step_exact(ref, 0.0, (d, d1), DT, PARAMS)
        d += d1 * DT
    assert abs(est.disturbance - d) < 1e-3
    assert abs(est.disturbance_slope - d1) < 1e-3
    assert abs(ref.com_pos) < 1.0  # sanity: trajectory stayed bounded


def test_error_decay_rate():
    """After the transient the error contracts at least like exp(-6 t)."""
    gain = design_gain(PARAMS, POLES)
    obs = DiscreteObserver(PARAMS, gain, DT)
    rng = np.random.default_rng(11)
    zero = Measurement(com_pos=0.0, zmp_pos=0.0)
    for _ in range(5):
        est = ObserverState(rng.standard_normal(5))
        norms = {}
        for k in range(1, 201):
            est = obs.update(est, 0.0, zero)
            if k in (100, 200):
                norms[k] = np.linalg.norm(est.estimate)
        assert norms[200] <= math.exp(-6.0) * norms[100] + 1e-14


def test_functional_update_matches_class_and_caches():
    gain = design_gain(PARAMS, POLES)
    obs = DiscreteObserver(PARAMS, gain, DT)
    est = ObserverState(np.array([0.01, 0.02, 0.03, 0.04, 0.05]))
    meas = Measurement(com_pos=0.0, zmp_pos=0.01)
    a = obs.update(est, 0.1, meas)
    b = update(est, gain, 0.1, meas, DT, PARAMS)
    c = update(est, gain, 0.1, meas, DT, PARAMS)  # cached path
    assert np.array_equal(a.estimate, b.estimate)
    assert np.array_equal(b.estimate, c.estimate)


def test_observer_state_validation():
    with pytest.raises(ValueError):
        ObserverState(np.zeros(4))
    with pytest.raises(ValueError):
        ObserverState(np.array([0.0, 0.0, float("inf"), 0.0, 0.0]))
    s = ObserverState(np.arange(5.0))
    assert (s.com_pos, s.com_vel, s.zmp_pos) == (0.0, 1.0, 2.0)
    assert (s.disturbance, s.disturbance_slope) == (3.0, 4.0)
