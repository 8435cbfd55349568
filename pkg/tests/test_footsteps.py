import math

import numpy as np
import pytest

from ismpc.footsteps import (
    Footstep,
    FootstepPlan,
    GaitTiming,
    PlanHorizonError,
    ZmpRegion,
    anticipative_tail,
    default_tail_samples,
    region_at,
)

TIMING = GaitTiming(
    ss_duration=0.2, ds_duration=0.3, sample_dt=0.01, footprint_x=0.05, footprint_y=0.05
)


def make_walk(n_steps=8, stride=0.1, width=0.1, extension="periodic"):
    steps = [
        Footstep(pos_x=j * stride, pos_y=(width / 2.0) * (1 if j % 2 == 0 else -1))
        for j in range(n_steps)
    ]
    region = ZmpRegion(center_x=0.0, center_y=0.0, half_x=0.025, half_y=0.025)
    return FootstepPlan(timing=TIMING, initial_region=region, steps=steps, extension=extension)


def test_timing_validation():
    with pytest.raises(ValueError):
        GaitTiming(ss_duration=0.205, sample_dt=0.01)
    with pytest.raises(ValueError):
        GaitTiming(ds_duration=0.0)
    with pytest.raises(ValueError):
        GaitTiming(footprint_x=-0.1)
    assert TIMING.n_ss == 20 and TIMING.n_ds == 30


def test_initial_ds_starts_at_initial_center():
    plan = make_walk()
    r0 = region_at(plan, 0)
    assert r0.center_x == pytest.approx(0.0, abs=1e-15)
    assert r0.center_y == pytest.approx(0.0, abs=1e-15)
    # one sample before single support the center is one interpolation
    # increment short of the step
    r29 = region_at(plan, 29)
    assert r29.center_y == pytest.approx(0.05 * 29 / 30, rel=1e-12)


def test_single_support_region_static():
    plan = make_walk()
    # step 0 single support spans samples 30..49
    for k in (30, 40, 49):
        r = region_at(plan, k)
        assert r.center_x == pytest.approx(0.0, abs=1e-15)
        assert r.center_y == pytest.approx(0.05, rel=1e-15)
        assert r.half_x == pytest.approx(0.025)
        assert r.half_y == pytest.approx(0.025)


def test_double_support_interpolates():
    plan = make_walk()
    # DS from step 0 (0, .05) to step 1 (.1, -.05): samples 50..79
    mid = region_at(plan, 65)
    assert mid.center_x == pytest.approx(0.1 * 15 / 30, rel=1e-12)
    assert mid.center_y == pytest.approx(0.05 + (-0.1) * 15 / 30, abs=1e-12)
    first = region_at(plan, 50)
    assert first.center_x == pytest.approx(0.0, abs=1e-15)
    assert first.center_y == pytest.approx(0.05, rel=1e-15)


def test_tail_velocity_zero_in_single_support():
    plan = make_walk()
    v = anticipative_tail(plan, 35, 5)
    assert np.allclose(v, 0.0, atol=1e-12)


def test_tail_velocity_in_double_support():
    plan = make_walk()
    v = anticipative_tail(plan, 55, 3)
    # center moves (0.1, -0.1) over 0.3 s
    assert np.allclose(v[:, 0], 0.1 / 0.3, rtol=1e-12)
    assert np.allclose(v[:, 1], -0.1 / 0.3, rtol=1e-12)


def test_tail_integration_recovers_centers():
    plan = make_walk()
    k0, n = 10, 400
    v = anticipative_tail(plan, k0, n)
    c = plan.centers(k0, n + 1)
    rebuilt = c[0] + np.cumsum(v, axis=0) * TIMING.sample_dt
    assert np.max(np.abs(rebuilt - c[1:])) < 1e-12


def test_periodic_extension_preserves_alternation():
    plan = make_walk(n_steps=4)
    plan.ensure_coverage(3000)
    assert plan.n_steps > 4
    ys = plan._pos[:, 1]
    signs = np.sign(ys)
    assert np.all(signs[::2] == signs[0])
    assert np.all(signs[1::2] == -signs[0])
    xs = plan._pos[:, 0]
    strides = np.diff(xs)
    assert np.allclose(strides[4:], 0.1, atol=1e-12)


def test_hold_extension_freezes_region():
    plan = make_walk(n_steps=3, extension="hold")
    plan.ensure_coverage(2000)
    last = plan.ss_start_sample(2) + TIMING.n_ss + 100
    r1 = region_at(plan, last)
    r2 = region_at(plan, last + 500)
    assert (r1.center_x, r1.center_y) == (r2.center_x, r2.center_y)
    assert r1.center_x == pytest.approx(0.2, rel=1e-12)


def test_none_extension_raises_past_end():
    plan = make_walk(n_steps=3, extension="none")
    with pytest.raises(PlanHorizonError):
        region_at(plan, 10000)
    with pytest.raises(PlanHorizonError):
        plan.ensure_coverage(10000)


def test_short_plan_falls_back_to_hold():
    plan = make_walk(n_steps=2, extension="periodic")
    assert plan.extension == "hold"
    plan.ensure_coverage(1000)
    assert plan.n_steps == 2


def test_every_sample_has_region():
    plan = make_walk(n_steps=5)
    plan.ensure_coverage(4000)
    for k in range(0, 4000, 7):
        r = region_at(plan, k)
        assert math.isfinite(r.center_x) and math.isfinite(r.center_y)
        assert r.contains(r.center_x, r.center_y)


def test_standing_plan_holds_initial_region():
    region = ZmpRegion(center_x=0.01, center_y=-0.02, half_x=0.03, half_y=0.04)
    plan = FootstepPlan(timing=TIMING, initial_region=region, steps=[], extension="hold")
    for k in (0, 100, 5000):
        r = region_at(plan, k)
        assert r.center_x == pytest.approx(0.01)
        assert r.center_y == pytest.approx(-0.02)
        assert r.half_x == pytest.approx(0.03)
        assert r.half_y == pytest.approx(0.04)


def test_oriented_region_membership():
    th = math.radians(30.0)
    r = ZmpRegion(center_x=1.0, center_y=2.0, half_x=0.2, half_y=0.1, orientation=th)
    c, s = math.cos(th), math.sin(th)
    inside = (1.0 + 0.19 * c, 2.0 + 0.19 * s)
    outside = (1.0 + 0.21 * c, 2.0 + 0.21 * s)
    lateral_out = (1.0 - 0.11 * s, 2.0 + 0.11 * c)
    assert r.contains(*inside)
    assert not r.contains(*outside)
    assert not r.contains(*lateral_out)
    assert r.residual(*outside) == pytest.approx(0.01, abs=1e-12)


def test_region_terms_match_region_at():
    plan = make_walk()
    for k in (0, 15, 35, 60, 140, 900):
        terms = plan.region_terms(k)
        c = terms.const.copy()
        for j, w in zip(terms.step_indices, terms.weights):
            c += w * plan.step_position(j)
        r = region_at(plan, k)
        assert c[0] == pytest.approx(r.center_x, abs=1e-14)
        assert c[1] == pytest.approx(r.center_y, abs=1e-14)


def test_set_step_position_moves_regions():
    plan = make_walk()
    plan.set_step_position(1, 0.12, -0.07)
    r = region_at(plan, plan.ss_start_sample(1) + 3)
    assert r.center_x == pytest.approx(0.12)
    assert r.center_y == pytest.approx(-0.07)


def test_free_steps_in_horizon():
    plan = make_walk(n_steps=10)
    # at sample 0 with a 100-sample horizon: SS starts at 30 and 80 qualify
    assert plan.free_steps_in_horizon(0, 100) == [0, 1]
    # mid-first-SS: step 0 already started, next two starts at 80, 130
    assert plan.free_steps_in_horizon(40, 100) == [1, 2]
    assert plan.free_steps_in_horizon(79, 1) == [1]
    assert plan.free_steps_in_horizon(80, 1) == []


def test_tail_truncation_residual_bound():
    plan = make_walk(n_steps=6)
    eta = math.sqrt(9.81 / 0.33)
    dt = TIMING.sample_dt
    T = default_tail_samples(eta, dt)
    assert T == math.ceil(12.0 / (eta * dt))
    v = anticipative_tail(plan, 0, 3 * T)
    w = np.exp(-eta * dt * np.arange(3 * T))
    full = w @ v[:, 0]
    trunc = w[:T] @ v[:T, 0]
    vmax = np.max(np.abs(v[:, 0]))
    bound = math.exp(-eta * dt * T) * vmax / (1.0 - math.exp(-eta * dt))
    assert abs(full - trunc) <= bound + 1e-15
    assert bound < 1e-4
