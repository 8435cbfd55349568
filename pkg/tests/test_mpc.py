"""Controller-level tests.

The disturbance correction is checked against adaptive quadrature of the
discounted integral it stands for, the constraint assemblies against
per-sample region geometry computed independently, and full iterations
against an independently rebuilt QP and against each other across
configurations that must coincide.
"""

from __future__ import annotations

import json
import math

import numpy as np
import pytest

from helpers import quad_discounted_disturbance

from ismpc.footsteps import Footstep, FootstepPlan, GaitTiming, ZmpRegion
from ismpc.lip import AxisState, LipParams, PlanarState, step_exact
from ismpc.mpc import (
    AfsConfig,
    DisturbancePreview,
    IsMpc,
    MpcConfig,
    RestrictionConfig,
    build_stability_constraint,
    build_zmp_constraints,
    delta_d_known,
    delta_d_observed,
)
from ismpc.observer import ObserverState
from ismpc.qp import QpProblem, solve

PARAMS = LipParams()
DT = 0.01
# eta / (1 - e^(-eta dt)) for the default parameters, computed by hand.
BOUNDARY_FACTOR = 102.75090762677873


def standing_plan(center=(0.0, 0.0)):
    region = ZmpRegion(
        center_x=center[0], center_y=center[1], half_x=0.025, half_y=0.025, orientation=0.0
    )
    return FootstepPlan(timing=GaitTiming(), initial_region=region, steps=[], extension="hold")


def walking_plan(n_steps=14, stride=0.1, width=0.1, turn=0.0):
    """Straight (or gently turning) gait starting with a step under the body."""
    steps = [
        Footstep(
            pos_x=stride * j,
            pos_y=(width / 2.0 if j % 2 == 0 else -width / 2.0),
            orientation=turn * j,
        )
        for j in range(n_steps)
    ]
    region = ZmpRegion(center_x=0.0, center_y=0.0, half_x=0.025, half_y=0.025, orientation=0.0)
    return FootstepPlan(timing=GaitTiming(), initial_region=region, steps=steps)


def rest_state():
    return PlanarState(AxisState(0.0, 0.0, 0.0), AxisState(0.0, 0.0, 0.0))


def advance(world, sol, d_x=(0.0, 0.0), d_y=(0.0, 0.0)):
    """Apply the first commanded sample to the exact plant."""
    return PlanarState(
        step_exact(world.x, float(sol.zmp_vel_x[0]), d_x, DT, PARAMS),
        step_exact(world.y, float(sol.zmp_vel_y[0]), d_y, DT, PARAMS),
    )


@pytest.fixture(scope="module")
def gait_state():
    """State reached after 0.4 s of the nominal gait, for mid-gait tests."""
    plan = walking_plan()
    ctrl = IsMpc(PARAMS, plan, MpcConfig())
    world = rest_state()
    for k in range(40):
        sol = ctrl.iterate(k, world)
        assert sol.feasible, f"nominal gait infeasible at warm-up sample {k}"
        world = advance(world, sol)
    return world


# -- disturbance correction -----------------------------------------------


def test_delta_d_constant_matches_quadrature():
    got = delta_d_known(0.4, np.zeros(0), DT, PARAMS)
    oracle = quad_discounted_disturbance(0.4, np.zeros(0), DT, PARAMS.eta)
    assert abs(got - oracle) < 1e-12
    assert abs(got - 0.013455657492354741) < 1e-12


def test_delta_d_random_previews_match_quadrature():
    rng = np.random.RandomState(41)
    for _ in range(25):
        n = rng.randint(1, 200)
        value = rng.uniform(-1.0, 1.0)
        slopes = rng.uniform(-5.0, 5.0, size=n)
        got = delta_d_known(value, slopes, DT, PARAMS)
        oracle = quad_discounted_disturbance(value, slopes, DT, PARAMS.eta)
        assert abs(got - oracle) < 1e-6


def test_delta_d_sampled_sinusoid_matches_quadrature():
    t = np.arange(0, 3.0 + DT, DT)
    d = 0.2 + 0.15 * np.sin(2.0 * np.pi * t)
    slopes = np.diff(d) / DT
    got = delta_d_known(d[0], slopes, DT, PARAMS)
    oracle = quad_discounted_disturbance(d[0], slopes, DT, PARAMS.eta)
    assert abs(got - oracle) < 1e-9


def test_delta_d_truncation_uses_prefix():
    rng = np.random.RandomState(7)
    slopes = rng.randn(50)
    full = delta_d_known(0.3, slopes[:20], DT, PARAMS)
    truncated = delta_d_known(0.3, slopes, DT, PARAMS, truncation=20)
    assert truncated == full


def test_delta_d_observed_equals_constant_preview():
    for d in (-0.7, 0.0, 0.4):
        assert delta_d_observed(d, PARAMS) == delta_d_known(d, np.zeros(0), DT, PARAMS)


# -- stability constraint --------------------------------------------------


def test_stability_rhs_zero_at_rest():
    plan = standing_plan(center=(0.003, -0.001))
    state = AxisState(com_pos=0.003, com_vel=0.0, zmp_pos=0.003)
    coeffs, rhs = build_stability_constraint(state, plan, 0, 0.0, PARAMS, 100, axis=0)
    assert rhs.tail_sum == 0.0
    assert rhs.boundary_term == 0.0
    assert rhs.value == 0.0
    lam = math.exp(-PARAMS.eta * DT)
    assert coeffs[0] == 1.0
    assert np.allclose(coeffs[1:] / coeffs[:-1], lam, rtol=1e-13)


def test_stability_boundary_scales_correction():
    plan = standing_plan()
    state = AxisState(0.0, 0.0, 0.0)
    delta = 0.013455657492354741
    _, rhs = build_stability_constraint(state, plan, 0, delta, PARAMS, 100, axis=0)
    assert rhs.delta_d == delta
    assert abs(rhs.boundary_term / delta - BOUNDARY_FACTOR) < 1e-9
    assert abs(rhs.value - 1.382581020054515) < 1e-9


def test_stability_tail_matches_manual_discounted_sum():
    plan = walking_plan()
    C, T, axis, sample = 50, 30, 1, 12
    centers = plan.centers(sample + C, T + 1)
    v = (centers[1:] - centers[:-1]) / DT
    lam = math.exp(-PARAMS.eta * DT)
    expected = lam**C * float((lam ** np.arange(T)) @ v[:, axis])
    state = AxisState(0.01, 0.05, 0.0)
    _, rhs = build_stability_constraint(
        state, plan, sample, 0.0, PARAMS, C, axis, tail_samples=T
    )
    assert abs(rhs.tail_sum - expected) < 1e-15
    x_u = state.com_pos + state.com_vel / PARAMS.eta
    boundary = PARAMS.eta / (1.0 - lam) * (x_u - state.zmp_pos)
    assert abs(rhs.value - (boundary - expected)) < 1e-12


# -- admissibility constraints ---------------------------------------------


def test_zmp_rows_match_region_geometry():
    plan = walking_plan(turn=0.07)
    C, sample = 60, 10
    zmp0 = (0.003, -0.004)
    A, b = build_zmp_constraints(plan, sample, C, zmp0)
    rng = np.random.RandomState(3)
    u = rng.uniform(-0.5, 0.5, size=2 * C)
    slack = b - A @ u
    x = zmp0[0] + DT * np.cumsum(u[:C])
    y = zmp0[1] + DT * np.cumsum(u[C:])
    for i in range(1, C + 1):
        region = plan.region_at(sample + i)
        lu, lv = region.local_coords(x[i - 1], y[i - 1])
        row = i - 1
        assert abs(slack[row] - (region.half_x - lu)) < 1e-12
        assert abs(slack[C + row] - (region.half_x + lu)) < 1e-12
        assert abs(slack[2 * C + row] - (region.half_y - lv)) < 1e-12
        assert abs(slack[3 * C + row] - (region.half_y + lv)) < 1e-12


def test_zmp_rows_with_free_steps_reduce_to_fixed_plan():
    plan = walking_plan()
    C, sample = 100, 35
    free = tuple(plan.free_steps_in_horizon(sample, C))
    assert free == (1, 2)
    zmp0 = (0.01, 0.02)
    A0, b0 = build_zmp_constraints(plan, sample, C, zmp0)
    Af, bf = build_zmp_constraints(plan, sample, C, zmp0, free_steps=free)
    rng = np.random.RandomState(11)
    v = rng.uniform(-0.3, 0.3, size=2 * C)
    planned = np.array([plan.step_position(j) for j in free])
    u = np.concatenate([v, planned[:, 0], planned[:, 1]])
    assert np.allclose(Af @ u - bf, A0 @ v - b0, atol=1e-12)


def test_restriction_shrinks_bounds_linearly():
    plan = standing_plan()
    C = 100
    cfg = RestrictionConfig(rate=3e-4, floor_fraction=0.1)
    _, b = build_zmp_constraints(plan, 0, C, (0.0, 0.0), restriction=cfg)
    i = np.arange(1, C + 1)
    expected = np.maximum(0.025 - 3e-4 * i, 0.0025)
    for block in range(4):
        assert np.allclose(b[block * C : (block + 1) * C], expected, atol=1e-15)


def test_restriction_default_rate_reaches_floor_at_horizon_end():
    plan = standing_plan()
    C = 100
    _, b = build_zmp_constraints(plan, 0, C, (0.0, 0.0), restriction=RestrictionConfig())
    # default rate footprint_x / (2 C) drives the half-size to zero at the
    # last sample, where the floor takes over
    assert abs(b[C - 1] - 0.0025) < 1e-15
    assert abs(b[0] - (0.025 - 0.05 / (2 * C))) < 1e-15


def test_restriction_feasibility_is_monotone_in_rate():
    plan = standing_plan()
    world = PlanarState(AxisState(0.010, 0.0, 0.0), AxisState(0.0, 0.0, 0.0))
    feasible = []
    for rate in (0.0, 1e-3, 5e-3):
        ctrl = IsMpc(PARAMS, plan, MpcConfig(restriction=RestrictionConfig(rate=rate)))
        feasible.append(ctrl.iterate(0, world).feasible)
    assert feasible[0], "unrestricted problem should be feasible"
    assert not feasible[-1], "heavily restricted problem should be infeasible"
    assert all(a >= b for a, b in zip(feasible, feasible[1:])), feasible


# -- controller iterations ---------------------------------------------------


def test_iterate_satisfies_assembled_constraints(gait_state):
    plan = walking_plan()
    ctrl = IsMpc(PARAMS, plan, MpcConfig())
    sol = ctrl.iterate(40, gait_state)
    assert sol.feasible
    C = 100
    coeffs, rhs_x = build_stability_constraint(gait_state.x, plan, 40, 0.0, PARAMS, C, 0)
    _, rhs_y = build_stability_constraint(gait_state.y, plan, 40, 0.0, PARAMS, C, 1)
    assert abs(coeffs @ sol.zmp_vel_x - rhs_x.value) < 1e-9
    assert abs(coeffs @ sol.zmp_vel_y - rhs_y.value) < 1e-9
    A, b = build_zmp_constraints(
        plan, 40, C, (gait_state.x.zmp_pos, gait_state.y.zmp_pos)
    )
    u = np.concatenate([sol.zmp_vel_x, sol.zmp_vel_y])
    assert np.max(A @ u - b) <= 1e-9
    d = sol.diagnostics
    assert d.sample == 40 and d.mode == "nominal" and d.backend in ("python", "cython")
    assert d.iterations > 0 and np.isfinite(d.objective)


def test_iterate_matches_independently_solved_qp(gait_state):
    plan = walking_plan()
    ctrl = IsMpc(PARAMS, plan, MpcConfig())
    sol = ctrl.iterate(40, gait_state)
    C = 100
    coeffs, rhs_x = build_stability_constraint(gait_state.x, plan, 40, 0.0, PARAMS, C, 0)
    _, rhs_y = build_stability_constraint(gait_state.y, plan, 40, 0.0, PARAMS, C, 1)
    A_eq = np.zeros((2, 2 * C))
    A_eq[0, :C] = coeffs
    A_eq[1, C:] = coeffs
    A_in, b_in = build_zmp_constraints(
        plan, 40, C, (gait_state.x.zmp_pos, gait_state.y.zmp_pos)
    )
    problem = QpProblem(
        H=2.0 * np.eye(2 * C),
        g=np.zeros(2 * C),
        A_eq=A_eq,
        b_eq=np.array([rhs_x.value, rhs_y.value]),
        A_in=A_in,
        b_in=b_in,
    )
    ref = solve(problem)
    assert ref.status == "optimal"
    assert np.allclose(ref.u[:C], sol.zmp_vel_x, atol=1e-9)
    assert np.allclose(ref.u[C:], sol.zmp_vel_y, atol=1e-9)
    assert abs(ref.objective - sol.diagnostics.objective) < 1e-9


def test_fix_footsteps_reduces_to_fixed_plan_controller(gait_state):
    afs = AfsConfig(v_ref_x=0.2)
    ctrl_afs = IsMpc(PARAMS, walking_plan(), MpcConfig(afs=afs))
    ctrl_plain = IsMpc(PARAMS, walking_plan(), MpcConfig())
    sol_fix = ctrl_afs.iterate(40, gait_state, fix_footsteps=True)
    sol_plain = ctrl_plain.iterate(40, gait_state)
    assert sol_fix.feasible and sol_plain.feasible
    assert np.allclose(sol_fix.zmp_vel_x, sol_plain.zmp_vel_x, atol=1e-8)
    assert np.allclose(sol_fix.zmp_vel_y, sol_plain.zmp_vel_y, atol=1e-8)
    plan = ctrl_afs.plan
    for j, (px, py) in sol_fix.footstep_adjustments.items():
        assert abs(px - plan.step_position(j)[0]) < 1e-9
        assert abs(py - plan.step_position(j)[1]) < 1e-9


def test_afs_with_consistent_reference_keeps_plan(gait_state):
    # reference velocity equal to the planned stride rate: with a stiff
    # tracking cost the optimizer has no reason to move the steps
    plan = walking_plan()
    v_ref = 0.1 / plan.timing.step_duration
    afs = AfsConfig(v_ref_x=v_ref, weight=1000.0)
    ctrl = IsMpc(PARAMS, plan, MpcConfig(afs=afs))
    sol = ctrl.iterate(40, gait_state)
    assert sol.feasible
    assert set(sol.footstep_adjustments) == {1, 2}
    for j, (px, py) in sol.footstep_adjustments.items():
        planned = plan.step_position(j)
        assert abs(px - planned[0]) < 0.02
        assert abs(py - planned[1]) < 0.02
        assert np.sign(py) == np.sign(planned[1]), "stance side must be preserved"


def test_afs_default_weight_respects_stride_boxes(gait_state):
    plan = walking_plan()
    afs = AfsConfig(v_ref_x=0.1 / plan.timing.step_duration)
    ctrl = IsMpc(PARAMS, plan, MpcConfig(afs=afs))
    sol = ctrl.iterate(40, gait_state)
    assert sol.feasible
    prev = {1: plan.step_position(0), 2: None}
    adj = sol.footstep_adjustments
    prev[2] = np.array(adj[1])
    for j in (1, 2):
        planned_stride = plan.step_position(j) - plan.step_position(j - 1)
        stride = np.array(adj[j]) - prev[j]
        assert abs(stride[0] - planned_stride[0]) <= afs.max_stride_dev_x + 1e-9
        assert abs(stride[1] - planned_stride[1]) <= afs.max_stride_dev_y + 1e-9
        assert np.sign(adj[j][1]) == np.sign(plan.step_position(j)[1])


def test_mode_input_requirements():
    plan = standing_plan()
    world = rest_state()
    with pytest.raises(ValueError, match="preview"):
        IsMpc(PARAMS, plan, MpcConfig(mode="known_disturbance")).iterate(0, world)
    with pytest.raises(ValueError, match="observer"):
        IsMpc(PARAMS, plan, MpcConfig(mode="observer_based")).iterate(0, world)


def test_observer_mode_with_zero_estimate_matches_nominal(gait_state):
    nom = IsMpc(PARAMS, walking_plan(), MpcConfig())
    obs = IsMpc(PARAMS, walking_plan(), MpcConfig(mode="observer_based"))
    pair = (
        ObserverState(np.array([gait_state.x.com_pos, gait_state.x.com_vel, gait_state.x.zmp_pos, 0.0, 0.0])),
        ObserverState(np.array([gait_state.y.com_pos, gait_state.y.com_vel, gait_state.y.zmp_pos, 0.0, 0.0])),
    )
    sol_n = nom.iterate(40, gait_state)
    sol_o = obs.iterate(40, gait_state, observer=pair)
    assert np.array_equal(sol_n.zmp_vel_x, sol_o.zmp_vel_x)
    assert np.array_equal(sol_n.zmp_vel_y, sol_o.zmp_vel_y)


def test_observer_slope_correction_extends_delta(gait_state):
    cfg = MpcConfig(mode="observer_based", use_slope_correction=True)
    ctrl = IsMpc(PARAMS, walking_plan(), cfg)
    pair = (
        ObserverState(np.array([0.0, 0.0, 0.0, 0.3, 0.06])),
        ObserverState(np.array([0.0, 0.0, 0.0, -0.1, 0.0])),
    )
    sol = ctrl.iterate(40, gait_state, observer=pair)
    eta = PARAMS.eta
    assert abs(sol.diagnostics.delta_d_x - (0.3 / eta**2 + 0.06 / eta**3)) < 1e-15
    assert abs(sol.diagnostics.delta_d_y - (-0.1 / eta**2)) < 1e-15


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(horizon=1)
    with pytest.raises(ValueError):
        MpcConfig(mode="clairvoyant")
    with pytest.raises(ValueError):
        MpcConfig(tail_samples=0)
    with pytest.raises(ValueError):
        AfsConfig(weight=0.0)
    with pytest.raises(ValueError):
        AfsConfig(max_stride_dev_x=-0.1)
    with pytest.raises(ValueError):
        RestrictionConfig(rate=-1e-4)
    with pytest.raises(ValueError):
        RestrictionConfig(floor_fraction=0.0)
    with pytest.raises(ValueError):
        RestrictionConfig(floor_fraction=1.5)


def test_diagnostics_record_is_json_serializable(gait_state):
    ctrl = IsMpc(PARAMS, walking_plan(), MpcConfig())
    record = ctrl.iterate(40, gait_state).diagnostics.to_record()
    assert set(record) == {
        "sample", "mode", "delta_d", "rhs", "feasible",
        "active_set_size", "iterations", "objective", "backend",
    }
    parsed = json.loads(json.dumps(record))
    assert parsed["sample"] == 40 and parsed["feasible"] is True


# -- closed loop -------------------------------------------------------------


def test_closed_loop_nominal_walk_is_bounded():
    plan = walking_plan()
    ctrl = IsMpc(PARAMS, plan, MpcConfig())
    world = rest_state()
    eta = PARAMS.eta
    gap_max = 0.0
    warm_iters = []
    for k in range(250):
        sol = ctrl.iterate(k, world)
        assert sol.feasible, f"infeasible at sample {k}"
        coeffs, rhs_x = build_stability_constraint(world.x, plan, k, 0.0, PARAMS, 100, 0)
        _, rhs_y = build_stability_constraint(world.y, plan, k, 0.0, PARAMS, 100, 1)
        assert abs(coeffs @ sol.zmp_vel_x - rhs_x.value) < 1e-8
        assert abs(coeffs @ sol.zmp_vel_y - rhs_y.value) < 1e-8
        if k >= 5:
            warm_iters.append(sol.diagnostics.iterations)
        world = advance(world, sol)
        region = plan.region_at(k + 1)
        assert region.residual(world.x.zmp_pos, world.y.zmp_pos) <= 1e-8
        gap = math.hypot(
            world.x.com_pos + world.x.com_vel / eta - world.x.zmp_pos,
            world.y.com_pos + world.y.com_vel / eta - world.y.zmp_pos,
        )
        gap_max = max(gap_max, gap)
    assert gap_max < 0.2
    assert world.x.com_pos > 0.3, "gait should make forward progress"
    assert np.median(warm_iters) <= 10, "warm starts should keep iterations low"


def test_closed_loop_known_constant_force_converges_to_lean():
    plan = standing_plan()
    ctrl = IsMpc(PARAMS, plan, MpcConfig(mode="known_disturbance"))
    world = rest_state()
    d_y = 0.25
    preview = DisturbancePreview(0.0, np.zeros(0), d_y, np.zeros(0))
    for k in range(150):
        sol = ctrl.iterate(k, world, disturbance=preview)
        assert sol.feasible, f"infeasible at sample {k}"
        world = advance(world, sol, d_y=(d_y, 0.0))
    lean = world.y.com_pos - world.y.zmp_pos
    assert abs(lean + d_y / PARAMS.eta**2) < 1e-3
    assert abs(world.y.com_vel) < 0.01
    assert abs(world.x.com_pos) < 1e-9
