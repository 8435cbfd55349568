"""Receding-horizon gait controller with an explicit stability equality.

Each iteration solves one QP over the ZMP velocity sequences of both
axes (and, optionally, upcoming footstep positions):

    minimize    ||Vx||^2 + ||Vy||^2  (+ footstep velocity-tracking terms)
    subject to  sum_i e^(-i eta dt) * v_i = rhs        (one row per axis)
                ZMP position inside its region at every horizon sample
                (+ stride bounds when footsteps are decision variables)

The equality pins the divergent component of the motion to a bounded
trajectory: rhs combines the current unstable-coordinate offset, the
anticipative tail conjectured beyond the horizon, and a disturbance
correction `delta_d`. With the correction equal to the exponentially
discounted disturbance average the closed loop tolerates persistent
pushes; dropping it ("nominal" mode) recovers the disturbance-free
controller.

`delta_d` has two computable forms: `delta_d_known` evaluates the exact
discounted average of a piecewise-linear disturbance preview, while
`delta_d_observed` uses only the current estimate d_hat / eta^2, which
coincides with the exact value for constant disturbances and is
recomputed every sample so slow variation is tracked.

ZMP constraints are expressed in each region's local frame, so axes
couple whenever a footstep is rotated; this is why both axes share one
QP. Progressive restriction optionally shrinks the admissible boxes
linearly along the horizon (never below a floor fraction), trading
transient tracking for robustness of future feasibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .footsteps import FootstepPlan, anticipative_tail, default_tail_samples
from .lip import AxisState, LipParams, PlanarState
from .qp import QpProblem, WarmStart, solve

__all__ = [
    "AfsConfig",
    "RestrictionConfig",
    "MpcConfig",
    "DisturbancePreview",
    "StabilityRhs",
    "MpcDiagnostics",
    "MpcSolution",
    "delta_d_known",
    "delta_d_observed",
    "build_stability_constraint",
    "build_zmp_constraints",
    "IsMpc",
]

MODES = ("nominal", "known_disturbance", "observer_based")


@dataclass(frozen=True)
class AfsConfig:
    """Automatic footstep placement settings.

    Footsteps whose single support begins inside the horizon become
    decision variables. The cost pulls each sagittal stride toward
    v_ref_x * step_duration and each lateral stride toward its planned
    value plus v_ref_y * step_duration, so the alternating stance width
    is preserved while absolute placement stays free to absorb
    disturbances. Stride deviations from the plan are hard-bounded.
    """

    v_ref_x: float = 0.0
    v_ref_y: float = 0.0
    weight: float = 10.0
    max_stride_dev_x: float = 0.15
    max_stride_dev_y: float = 0.08

    def __post_init__(self) -> None:
        if not (self.weight > 0.0):
            raise ValueError(f"afs weight must be positive, got {self.weight}")
        if not (self.max_stride_dev_x > 0.0 and self.max_stride_dev_y > 0.0):
            raise ValueError("stride deviation bounds must be positive")


@dataclass(frozen=True)
class RestrictionConfig:
    """Linear shrink schedule for the ZMP boxes along the horizon.

    Half-sizes at preview sample i become max(h - rate*i, floor_fraction*h).
    A rate of None selects footprint_x / (2*horizon) per sample.
    """

    rate: Optional[float] = None
    floor_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.rate is not None and not (self.rate >= 0.0):
            raise ValueError(f"restriction rate must be >= 0, got {self.rate}")
        if not (0.0 < self.floor_fraction <= 1.0):
            raise ValueError(
                f"floor_fraction must be in (0, 1], got {self.floor_fraction}"
            )


@dataclass(frozen=True)
class MpcConfig:
    """Controller settings.

    Attributes:
        horizon: preview length in samples.
        mode: "nominal" (no correction), "known_disturbance" (preview of
            the true signal), or "observer_based" (current estimate).
        afs: footstep placement settings, or None to keep the plan fixed.
        restriction: progressive box shrinking, or None to disable.
        use_slope_correction: in observer_based mode also feed the
            estimated disturbance slope into the correction
            (d_hat/eta^2 + slope_hat/eta^3). Experimental.
        tail_samples: truncation length of the anticipative tail; None
            selects a length that makes the truncation error negligible.
    """

    horizon: int = 100
    mode: str = "nominal"
    afs: Optional[AfsConfig] = None
    restriction: Optional[RestrictionConfig] = None
    use_slope_correction: bool = False
    tail_samples: Optional[int] = None

    def __post_init__(self) -> None:
        if self.horizon < 2:
            raise ValueError(f"horizon must be at least 2, got {self.horizon}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.tail_samples is not None and self.tail_samples < 1:
            raise ValueError("tail_samples must be positive")


@dataclass(frozen=True)
class DisturbancePreview:
    """Piecewise-linear disturbance preview from the current sample on.

    `value_*` is the disturbance at the current instant; `slopes_*[i]` is
    its slope over the i-th upcoming sampling interval. Beyond the last
    provided slope the signal is treated as constant.
    """

    value_x: float
    slopes_x: np.ndarray
    value_y: float
    slopes_y: np.ndarray


@dataclass(frozen=True)
class StabilityRhs:
    """Right-hand side of one axis' stability equality.

    value = boundary_term - tail_sum, where boundary_term =
    eta/(1 - e^(-eta dt)) * (x_u - x_z + delta_d) and tail_sum is the
    discounted sum of conjectured post-horizon ZMP velocities.
    """

    tail_sum: float
    boundary_term: float
    delta_d: float

    @property
    def value(self) -> float:
        return self.boundary_term - self.tail_sum


@dataclass(frozen=True)
class MpcDiagnostics:
    """Per-iteration record (one JSON line in the simulator's log)."""

    sample: int
    mode: str
    delta_d_x: float
    delta_d_y: float
    rhs_x: float
    rhs_y: float
    feasible: bool
    active_set_size: int
    iterations: int
    objective: float
    backend: str

    def to_record(self) -> dict:
        return {
            "sample": self.sample,
            "mode": self.mode,
            "delta_d": [self.delta_d_x, self.delta_d_y],
            "rhs": [self.rhs_x, self.rhs_y],
            "feasible": self.feasible,
            "active_set_size": self.active_set_size,
            "iterations": self.iterations,
            "objective": self.objective,
            "backend": self.backend,
        }


@dataclass(frozen=True, eq=False)
class MpcSolution:
    """Result of one controller iteration.

    When infeasible, the velocity arrays are zero-filled and must not be
    applied; `certificate` carries the QP infeasibility evidence.
    """

    zmp_vel_x: np.ndarray
    zmp_vel_y: np.ndarray
    footstep_adjustments: Optional[dict]
    feasible: bool
    diagnostics: MpcDiagnostics
    certificate: object = None


def delta_d_known(
    value: float,
    slopes,
    dt: float,
    params: LipParams,
    truncation: Optional[int] = None,
) -> float:
    """Disturbance correction for a piecewise-linear preview.

    Evaluates the exponentially discounted average

        delta_d = value/eta^2
                  + (1 - e^(-eta dt))/eta^3 * sum_i e^(-i eta dt) slopes[i]

    which is the exact value of (1/eta) * integral e^(-eta s) d(t+s) ds
    for the piecewise-linear signal described by (value, slopes), held
    constant beyond the last slope.

    Args:
        value: disturbance at the current instant.
        slopes: per-interval slopes of the upcoming samples.
        dt: sampling interval.
        params: pendulum parameters.
        truncation: use only the first `truncation` slopes.
    """
    eta = params.eta
    s = np.asarray(slopes, dtype=float).reshape(-1)
    if truncation is not None:
        s = s[:truncation]
    if s.size == 0:
        return value / eta**2
    lam = math.exp(-eta * dt)
    disc = float(np.polynomial.polynomial.polyval(lam, s))
    return value / eta**2 + (1.0 - lam) / eta**3 * disc


def delta_d_observed(d_hat: float, params: LipParams) -> float:
    """Disturbance correction from the current estimate only.

    Equals `delta_d_known` for a constant disturbance of the same value.
    """
    return d_hat / params.eta**2


def build_stability_constraint(
    state: AxisState,
    plan: FootstepPlan,
    sample: int,
    delta_d: float,
    params: LipParams,
    horizon: int,
    axis: int,
    tail_samples: Optional[int] = None,
) -> tuple[np.ndarray, StabilityRhs]:
    """Assemble one axis' stability equality.

    Returns the coefficient vector (e^(-i eta dt) for i = 0..horizon-1)
    over that axis' ZMP velocities and the right-hand side, combining
    the anticipative tail beyond the horizon with the boundary term
    eta/(1 - e^(-eta dt)) * (x_u - x_z + delta_d).

    Args:
        state: current axis state.
        plan: footstep plan providing the tail.
        sample: current sample index.
        delta_d: disturbance correction for this axis.
        params: pendulum parameters.
        horizon: preview length in samples.
        axis: 0 for x, 1 for y.
        tail_samples: tail truncation; None selects the default length.
    """
    eta = params.eta
    dt = plan.timing.sample_dt
    lam = math.exp(-eta * dt)
    coeffs = lam ** np.arange(horizon)
    T = tail_samples if tail_samples is not None else default_tail_samples(eta, dt)
    tail_v = anticipative_tail(plan, sample + horizon, T)[:, axis]
    tail_sum = lam**horizon * float((lam ** np.arange(T)) @ tail_v)
    x_u = state.com_pos + state.com_vel / eta
    boundary = eta / (1.0 - lam) * (x_u - state.zmp_pos + delta_d)
    return coeffs, StabilityRhs(tail_sum=tail_sum, boundary_term=boundary, delta_d=delta_d)


def build_zmp_constraints(
    plan: FootstepPlan,
    sample: int,
    horizon: int,
    current_zmp: tuple[float, float],
    restriction: Optional[RestrictionConfig] = None,
    free_steps: tuple[int, ...] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Assemble the ZMP admissibility inequalities over the horizon.

    The decision layout is [Vx (horizon), Vy (horizon), Px (F), Py (F)]
    with F = len(free_steps). For each preview sample i = 1..horizon the
    ZMP position (current + dt * partial velocity sums) is constrained to
    the region of that sample, expressed in the region's local frame.
    Rows are grouped by type: all +u rows, then -u, +v, -v, each in
    sample order, so row b*horizon + (i-1) is sample i of block b.

    Free steps make the affected region centers linear in the footstep
    variables. Restriction shrinks half-sizes by rate*i, clamped at
    floor_fraction of each sample's nominal size.
    """
    C = horizon
    dt = plan.timing.sample_dt
    F = len(free_steps)
    col = {j: m for m, j in enumerate(free_steps)}

    const = np.zeros((C, 2))
    th = np.zeros(C)
    hx = np.zeros(C)
    hy = np.zeros(C)
    W = np.zeros((C, F))
    for i in range(1, C + 1):
        t = plan.region_terms(sample + i)
        row = i - 1
        const[row] = t.const
        th[row], hx[row], hy[row] = t.orientation, t.half_x, t.half_y
        for idx, wgt in zip(t.step_indices, t.weights):
            m = col.get(idx)
            if m is None:
                const[row] += wgt * plan.step_position(idx)
            else:
                W[row, m] += wgt

    if restriction is not None:
        rate = restriction.rate
        if rate is None:
            rate = plan.timing.footprint_x / (2.0 * C)
        shrink = rate * np.arange(1, C + 1)
        hx = np.maximum(hx - shrink, restriction.floor_fraction * hx)
        hy = np.maximum(hy - shrink, restriction.floor_fraction * hy)

    P = dt * np.tril(np.ones((C, C)))
    cos, sin = np.cos(th), np.sin(th)
    dx0 = current_zmp[0] - const[:, 0]
    dy0 = current_zmp[1] - const[:, 1]
    proj_u = cos * dx0 + sin * dy0
    proj_v = -sin * dx0 + cos * dy0

    cP, sP = cos[:, None] * P, sin[:, None] * P
    cW, sW = cos[:, None] * W, sin[:, None] * W
    A_pu = np.hstack([cP, sP, -cW, -sW])
    A_pv = np.hstack([-sP, cP, sW, -cW])
    A = np.vstack([A_pu, -A_pu, A_pv, -A_pv])
    b = np.concatenate([hx - proj_u, hx + proj_u, hy - proj_v, hy + proj_v])
    return A, b


def _stride_matrix(F: int) -> np.ndarray:
    """Difference operator mapping positions to strides (first row vs anchor)."""
    return np.eye(F) - np.eye(F, k=-1)


class IsMpc:
    """Stateful controller: one instance per gait session.

    Holds the plan reference and the warm-start memory; iterations must
    be called with strictly increasing sample indices. The plan may be
    mutated between iterations (committing footstep adjustments); the
    constraint assembly always reads the current plan.
    """

    def __init__(self, params: LipParams, plan: FootstepPlan, config: MpcConfig) -> None:
        self.params = params
        self.plan = plan
        self.config = config
        eta = params.eta
        dt = plan.timing.sample_dt
        self._lam = math.exp(-eta * dt)
        self._coeffs = self._lam ** np.arange(config.horizon)
        self._tail_n = (
            config.tail_samples
            if config.tail_samples is not None
            else default_tail_samples(eta, dt)
        )
        self._warm_u: Optional[np.ndarray] = None
        self._warm_active: tuple[int, ...] = ()
        self._warm_free: tuple[int, ...] = ()

    def _delta_d(self, observer, disturbance) -> tuple[float, float]:
        mode = self.config.mode
        if mode == "nominal":
            return 0.0, 0.0
        if mode == "known_disturbance":
            if disturbance is None:
                raise ValueError("known_disturbance mode requires a disturbance preview")
            dt = self.plan.timing.sample_dt
            return (
                delta_d_known(disturbance.value_x, disturbance.slopes_x, dt, self.params),
                delta_d_known(disturbance.value_y, disturbance.slopes_y, dt, self.params),
            )
        if observer is None:
            raise ValueError("observer_based mode requires observer states")
        ox, oy = observer
        ddx = delta_d_observed(ox.disturbance, self.params)
        ddy = delta_d_observed(oy.disturbance, self.params)
        if self.config.use_slope_correction:
            e3 = self.params.eta**3
            ddx += ox.disturbance_slope / e3
            ddy += oy.disturbance_slope / e3
        return ddx, ddy

    def _shifted_warm(
        self, sample: int, free: tuple[int, ...], planned: np.ndarray
    ) -> Optional[WarmStart]:
        """Previous solution advanced by one sample.

        Constraint rows keep their absolute sample, so active indices
        shift down by one within each row block. The vacated final
        velocity follows the region centers (the anticipative guess), so
        the shifted trajectory tends to stay feasible.
        """
        if self._warm_u is None:
            return None
        C = self.config.horizon
        same_free = free == self._warm_free
        active = []
        for r in self._warm_active:
            if r < 4 * C:
                blk, pos = divmod(r, C)
                if pos >= 1:
                    active.append(blk * C + pos - 1)
            elif same_free:
                active.append(r)
        tail_v = anticipative_tail(self.plan, sample + C - 1, 1)[0]
        vx = np.append(self._warm_u[:C][1:], tail_v[0])
        vy = np.append(self._warm_u[C : 2 * C][1:], tail_v[1])
        if same_free:
            p = self._warm_u[2 * C :]
        else:
            p = planned.T.reshape(-1) if planned.size else np.zeros(0)
        return WarmStart(active_set=tuple(active), u=np.concatenate([vx, vy, p]))

    def iterate(
        self,
        sample: int,
        world: PlanarState,
        *,
        observer=None,
        disturbance: Optional[DisturbancePreview] = None,
        fix_footsteps: bool = False,
    ) -> MpcSolution:
        """Run one controller iteration at the given sample.

        Args:
            sample: current sample index on the plan's clock.
            world: current true (or believed) state of both axes.
            observer: pair of per-axis observer states; required in
                observer_based mode and otherwise ignored.
            disturbance: preview of the true signal; required in
                known_disturbance mode and otherwise ignored.
            fix_footsteps: with footstep placement enabled, pin the
                footstep variables to their planned values by equality
                (degenerates to the fixed-footstep controller).

        Returns:
            MpcSolution with first-sample inputs in `zmp_vel_*[0]`.
        """
        cfg = self.config
        C = cfg.horizon
        ddx, ddy = self._delta_d(observer, disturbance)
        coeffs_x, rhs_x = build_stability_constraint(
            world.x, self.plan, sample, ddx, self.params, C, 0, self._tail_n
        )
        _, rhs_y = build_stability_constraint(
            world.y, self.plan, sample, ddy, self.params, C, 1, self._tail_n
        )

        free = tuple(self.plan.free_steps_in_horizon(sample, C)) if cfg.afs else ()
        F = len(free)
        planned = (
            np.array([self.plan.step_position(j) for j in free])
            if F
            else np.zeros((0, 2))
        )
        n = 2 * C + 2 * F

        A_in, b_in = build_zmp_constraints(
            self.plan,
            sample,
            C,
            (world.x.zmp_pos, world.y.zmp_pos),
            cfg.restriction,
            free,
        )

        H = 2.0 * np.eye(n)
        g = np.zeros(n)
        if F:
            afs = cfg.afs
            if free[0] >= 1:
                anchor = np.asarray(self.plan.step_position(free[0] - 1), dtype=float)
            else:
                anchor = np.array(
                    [self.plan.initial_region.center_x, self.plan.initial_region.center_y]
                )
            prev = np.vstack([anchor, planned[:-1]])
            planned_stride = planned - prev
            D = _stride_matrix(F)
            Tstep = self.plan.timing.step_duration
            target_x = np.full(F, afs.v_ref_x * Tstep)
            target_y = planned_stride[:, 1] + afs.v_ref_y * Tstep
            e0 = np.zeros(F)
            e0[0] = 1.0
            scale = 2.0 * afs.weight / Tstep**2
            block = scale * (D.T @ D)
            sx, sy = slice(2 * C, 2 * C + F), slice(2 * C + F, n)
            H[sx, sx] = block
            H[sy, sy] = block
            g[sx] = -scale * D.T @ (target_x + e0 * anchor[0])
            g[sy] = -scale * D.T @ (target_y + e0 * anchor[1])

            # Hard stride bounds relative to the planned strides.
            Z = np.zeros((F, C))
            ZF = np.zeros((F, F))
            dev_rows = np.vstack(
                [
                    np.hstack([Z, Z, D, ZF]),
                    np.hstack([Z, Z, -D, ZF]),
                    np.hstack([Z, Z, ZF, D]),
                    np.hstack([Z, Z, ZF, -D]),
                ]
            )
            base_x = planned_stride[:, 0]
            base_y = planned_stride[:, 1]
            anc = np.vstack(
                [e0 * anchor[0], -e0 * anchor[0], e0 * anchor[1], -e0 * anchor[1]]
            ).reshape(-1)
            dev_b = (
                np.concatenate(
                    [
                        base_x + afs.max_stride_dev_x,
                        -base_x + afs.max_stride_dev_x,
                        base_y + afs.max_stride_dev_y,
                        -base_y + afs.max_stride_dev_y,
                    ]
                )
                + anc
            )
            A_in = np.vstack([A_in, dev_rows])
            b_in = np.concatenate([b_in, dev_b])

        A_eq = np.zeros((2 + (2 * F if fix_footsteps else 0), n))
        A_eq[0, :C] = coeffs_x
        A_eq[1, C : 2 * C] = coeffs_x
        b_eq = np.array([rhs_x.value, rhs_y.value])
        if fix_footsteps and F:
            A_eq[2 : 2 + 2 * F, 2 * C :] = np.eye(2 * F)
            b_eq = np.concatenate([b_eq, planned.T.reshape(-1)])

        problem = QpProblem(H=H, g=g, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)
        warm = self._shifted_warm(sample, free, planned)
        sol = solve(problem, warm_start=warm)

        feasible = sol.status == "optimal" and sol.u is not None
        if feasible:
            u = sol.u
            self._warm_u = u.copy()
            self._warm_active = sol.active_set
            self._warm_free = free
            vx, vy = u[:C].copy(), u[C : 2 * C].copy()
            adjustments = None
            if F:
                adjustments = {
                    j: (float(u[2 * C + m]), float(u[2 * C + F + m]))
                    for m, j in enumerate(free)
                }
        else:
            self._warm_u = None
            self._warm_active = ()
            vx, vy = np.zeros(C), np.zeros(C)
            adjustments = None

        diag = MpcDiagnostics(
            sample=sample,
            mode=cfg.mode,
            delta_d_x=ddx,
            delta_d_y=ddy,
            rhs_x=rhs_x.value,
            rhs_y=rhs_y.value,
            feasible=feasible,
            active_set_size=len(sol.active_set) if feasible else 0,
            iterations=sol.iterations,
            objective=sol.objective if feasible else float("nan"),
            backend=sol.backend,
        )
        return MpcSolution(
            zmp_vel_x=vx,
            zmp_vel_y=vy,
            footstep_adjustments=adjustments,
            feasible=feasible,
            diagnostics=diag,
            certificate=sol.certificate,
        )
