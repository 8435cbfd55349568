"""Closed-loop simulation harness.

Per sample k the loop: evaluates the true disturbance over the upcoming
interval as an affine (value, slope) pair; runs one controller iteration
(feeding it the preview, the observer estimate, or nothing, depending on
the mode); applies the first commanded ZMP velocity to the exact plant
under the true disturbance; and updates the per-axis observers from the
measurements taken before the step. The observer runs in every mode so
traces always carry the estimate.

The optional carried-pendulum coupling is one-way: at each sample the
attachment acceleration is held at the current commanded value
eta^2 (x_c - x_z) of the chosen axis and the pendulum's reaction is
added to that axis' disturbance.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .footsteps import FootstepPlan, default_tail_samples
from .lip import AxisState, LipParams, PlanarState, step_exact
from .mpc import DisturbancePreview, IsMpc, MpcConfig, MpcDiagnostics
from .observer import DiscreteObserver, Measurement, ObserverState, design_gain
from .signals import Constant, DisturbanceSignal, Sum, pendulum_disturbance, preview_samples

__all__ = [
    "DEFAULT_OBSERVER_POLES",
    "PendulumCoupling",
    "Scenario",
    "ScenarioResult",
    "Termination",
    "TRACE_COLUMNS",
    "run",
    "write_trace",
    "read_trace",
    "summarize",
]

DEFAULT_OBSERVER_POLES = (-8.0, -9.0, -10.0, -11.0, -12.0)

#: Divergence guard: |x_c - x_z| beyond this many footprints ends the run.
DIVERGENCE_FOOTPRINTS = 10.0


@dataclass(frozen=True)
class Termination:
    """How a run ended: completed, or stopped at a specific sample."""

    kind: str
    sample: Optional[int] = None

    _KINDS = ("completed", "infeasible", "diverged")

    def __post_init__(self) -> None:
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")
        if (self.kind == "completed") != (self.sample is None):
            raise ValueError("completed carries no sample; other kinds require one")

    @classmethod
    def completed(cls) -> "Termination":
        return cls("completed")

    @classmethod
    def infeasible_at(cls, sample: int) -> "Termination":
        return cls("infeasible", sample)

    @classmethod
    def diverged_at(cls, sample: int) -> "Termination":
        return cls("diverged", sample)

    def __str__(self) -> str:
        if self.sample is None:
            return self.kind
        return f"{self.kind}_at({self.sample})"


@dataclass(frozen=True)
class PendulumCoupling:
    """Carried-pendulum emulation parameters (one-way coupling)."""

    mass_p: float = 0.2
    length_p: float = 0.5
    axis: str = "x"
    robot_mass: float = 4.5
    theta0: float = 0.0
    omega0: float = 0.0

    def __post_init__(self) -> None:
        if self.axis not in ("x", "y"):
            raise ValueError(f"axis must be 'x' or 'y', got {self.axis!r}")
        if self.mass_p < 0.0 or not (self.length_p > 0.0) or not (self.robot_mass > 0.0):
            raise ValueError("pendulum parameters must be positive (mass may be zero)")


@dataclass
class Scenario:
    """Everything needed for one deterministic closed-loop run."""

    plan: FootstepPlan
    duration: float
    mpc: MpcConfig = field(default_factory=MpcConfig)
    params: LipParams = field(default_factory=LipParams)
    disturbance_x: DisturbanceSignal = field(default_factory=Constant)
    disturbance_y: DisturbanceSignal = field(default_factory=Constant)
    observer_poles: tuple = DEFAULT_OBSERVER_POLES
    pendulum: Optional[PendulumCoupling] = None
    initial_state: Optional[PlanarState] = None
    measurement_noise: float = 0.0
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self) -> None:
        if not (self.duration > 0.0):
            raise ValueError(f"duration must be positive, got {self.duration}")
        if self.measurement_noise < 0.0:
            raise ValueError("measurement_noise must be nonnegative")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration / self.plan.timing.sample_dt))


#: Trace column order; one row per controller sample, state taken before
#: the step commanded at that sample.
TRACE_COLUMNS = (
    "time",
    "com_x", "com_vel_x", "zmp_x",
    "com_y", "com_vel_y", "zmp_y",
    "cmd_zmp_vel_x", "cmd_zmp_vel_y",
    "dist_x", "dist_y",
    "est_com_x", "est_com_vel_x", "est_zmp_x", "est_dist_x", "est_dist_slope_x",
    "est_com_y", "est_com_vel_y", "est_zmp_y", "est_dist_y", "est_dist_slope_y",
    "delta_d_x", "delta_d_y",
    "rhs_x", "rhs_y",
    "feasible", "iterations",
)

_INT_COLUMNS = ("feasible", "iterations")


@dataclass
class ScenarioResult:
    """Recorded closed-loop run.

    All arrays have one row per executed controller sample. `columns()`
    flattens them in the documented CSV order.
    """

    name: str
    mode: str
    params: LipParams
    dt: float
    time: np.ndarray
    com: np.ndarray
    com_vel: np.ndarray
    zmp: np.ndarray
    cmd_zmp_vel: np.ndarray
    dist_true: np.ndarray
    estimates: np.ndarray  # (M, 2, 5): axis-major observer states
    delta_d: np.ndarray
    rhs: np.ndarray
    feasible: np.ndarray
    iterations: np.ndarray
    diagnostics: list[MpcDiagnostics]
    footsteps_planned: np.ndarray
    footsteps_realized: np.ndarray
    final_state: PlanarState
    termination: Termination

    @property
    def n_samples(self) -> int:
        return self.time.shape[0]

    @property
    def unstable_offset(self) -> np.ndarray:
        """x_u - x_z per axis: the divergent-mode offset the method bounds."""
        return self.com + self.com_vel / self.params.eta - self.zmp

    @property
    def dist_est(self) -> np.ndarray:
        """Estimated disturbance per axis (from the observer trace)."""
        return self.estimates[:, :, 3]

    def columns(self) -> dict[str, np.ndarray]:
        """Trace as named columns in the documented order."""
        est = self.estimates
        cols = {
            "time": self.time,
            "com_x": self.com[:, 0], "com_vel_x": self.com_vel[:, 0], "zmp_x": self.zmp[:, 0],
            "com_y": self.com[:, 1], "com_vel_y": self.com_vel[:, 1], "zmp_y": self.zmp[:, 1],
            "cmd_zmp_vel_x": self.cmd_zmp_vel[:, 0], "cmd_zmp_vel_y": self.cmd_zmp_vel[:, 1],
            "dist_x": self.dist_true[:, 0], "dist_y": self.dist_true[:, 1],
            "est_com_x": est[:, 0, 0], "est_com_vel_x": est[:, 0, 1],
            "est_zmp_x": est[:, 0, 2], "est_dist_x": est[:, 0, 3],
            "est_dist_slope_x": est[:, 0, 4],
            "est_com_y": est[:, 1, 0], "est_com_vel_y": est[:, 1, 1],
            "est_zmp_y": est[:, 1, 2], "est_dist_y": est[:, 1, 3],
            "est_dist_slope_y": est[:, 1, 4],
            "delta_d_x": self.delta_d[:, 0], "delta_d_y": self.delta_d[:, 1],
            "rhs_x": self.rhs[:, 0], "rhs_y": self.rhs[:, 1],
            "feasible": self.feasible.astype(np.int64),
            "iterations": self.iterations,
        }
        assert tuple(cols) == TRACE_COLUMNS
        return cols


def _effective_signals(scenario: Scenario, accel_cell: list) -> tuple:
    dist_x, dist_y = scenario.disturbance_x, scenario.disturbance_y
    if scenario.pendulum is not None:
        p = scenario.pendulum
        pend = pendulum_disturbance(
            p.mass_p,
            p.length_p,
            lambda t: accel_cell[0],
            robot_mass=p.robot_mass,
            theta0=p.theta0,
            omega0=p.omega0,
        )
        if p.axis == "x":
            dist_x = Sum((dist_x, pend))
        else:
            dist_y = Sum((dist_y, pend))
    return dist_x, dist_y


def run(scenario: Scenario) -> ScenarioResult:
    """Execute one closed-loop scenario.

    Deterministic for a fixed scenario. Infeasibility and divergence end
    the run early and are recorded in the termination, not raised.
    """
    params = scenario.params
    plan = scenario.plan
    dt = plan.timing.sample_dt
    cfg = scenario.mpc
    eta = params.eta
    n_samples = scenario.n_samples

    accel_cell = [0.0]
    dist_x, dist_y = _effective_signals(scenario, accel_cell)
    if cfg.mode == "known_disturbance" and not (
        dist_x.supports_preview and dist_y.supports_preview
    ):
        raise ValueError(
            "known_disturbance mode requires previewable disturbance signals"
        )

    tail_n = cfg.tail_samples if cfg.tail_samples is not None else default_tail_samples(eta, dt)
    plan.ensure_coverage(n_samples + cfg.horizon + tail_n + 2)
    planned = np.array([plan.step_position(j) for j in range(plan.n_steps)])

    ctrl = IsMpc(params, plan, cfg)
    gain = design_gain(params, scenario.observer_poles)
    observer = DiscreteObserver(params, gain, dt)

    if scenario.initial_state is not None:
        world = scenario.initial_state
    else:
        cx = plan.initial_region.center_x
        cy = plan.initial_region.center_y
        world = PlanarState(AxisState(cx, 0.0, cx), AxisState(cy, 0.0, cy))

    rng = np.random.RandomState(scenario.seed)
    noise = scenario.measurement_noise

    def measure(state: AxisState) -> Measurement:
        if noise > 0.0:
            e = rng.uniform(-noise, noise, size=2)
            return Measurement(state.com_pos + e[0], state.zmp_pos + e[1])
        return Measurement(state.com_pos, state.zmp_pos)

    # initial estimates: measured positions, zero velocity and disturbance
    m0x, m0y = measure(world.x), measure(world.y)
    est = (
        ObserverState(np.array([m0x.com_pos, 0.0, m0x.zmp_pos, 0.0, 0.0])),
        ObserverState(np.array([m0y.com_pos, 0.0, m0y.zmp_pos, 0.0, 0.0])),
    )

    rows_time, rows_state = [], []
    rows_cmd, rows_dist, rows_est = [], [], []
    rows_dd, rows_rhs, rows_feas, rows_iter = [], [], [], []
    diagnostics: list[MpcDiagnostics] = []
    termination = Termination.completed()

    for k in range(n_samples):
        t = k * dt
        if scenario.pendulum is not None:
            axis_state = world.x if scenario.pendulum.axis == "x" else world.y
            accel_cell[0] = eta**2 * (axis_state.com_pos - axis_state.zmp_pos)
        dx_val, dx_slope = dist_x.sample(t, dt)
        dy_val, dy_slope = dist_y.sample(t, dt)

        meas_x, meas_y = measure(world.x), measure(world.y)

        preview = None
        if cfg.mode == "known_disturbance":
            vx0, sx = preview_samples(dist_x, t, dt, tail_n)
            vy0, sy = preview_samples(dist_y, t, dt, tail_n)
            preview = DisturbancePreview(vx0, sx, vy0, sy)

        sol = ctrl.iterate(k, world, observer=est, disturbance=preview)
        diag = sol.diagnostics

        rows_time.append(t)
        rows_state.append(
            (world.x.com_pos, world.x.com_vel, world.x.zmp_pos,
             world.y.com_pos, world.y.com_vel, world.y.zmp_pos)
        )
        rows_cmd.append((float(sol.zmp_vel_x[0]), float(sol.zmp_vel_y[0])))
        rows_dist.append((dx_val, dy_val))
        rows_est.append((est[0].estimate.copy(), est[1].estimate.copy()))
        rows_dd.append((diag.delta_d_x, diag.delta_d_y))
        rows_rhs.append((diag.rhs_x, diag.rhs_y))
        rows_feas.append(sol.feasible)
        rows_iter.append(diag.iterations)
        diagnostics.append(diag)

        if not sol.feasible:
            termination = Termination.infeasible_at(k)
            break

        if sol.footstep_adjustments:
            for j, (px, py) in sol.footstep_adjustments.items():
                plan.set_step_position(j, px, py)

        vx, vy = float(sol.zmp_vel_x[0]), float(sol.zmp_vel_y[0])
        world = PlanarState(
            step_exact(world.x, vx, (dx_val, dx_slope), dt, params),
            step_exact(world.y, vy, (dy_val, dy_slope), dt, params),
        )
        est = (
            observer.update(est[0], vx, meas_x),
            observer.update(est[1], vy, meas_y),
        )

        guard_x = DIVERGENCE_FOOTPRINTS * plan.timing.footprint_x
        guard_y = DIVERGENCE_FOOTPRINTS * plan.timing.footprint_y
        if (
            abs(world.x.com_pos - world.x.zmp_pos) > guard_x
            or abs(world.y.com_pos - world.y.zmp_pos) > guard_y
        ):
            termination = Termination.diverged_at(k + 1)
            break

    state_arr = np.array(rows_state).reshape(-1, 6)
    est_arr = np.array(rows_est).reshape(-1, 2, 5)
    realized = np.array([plan.step_position(j) for j in range(plan.n_steps)])
    return ScenarioResult(
        name=scenario.name,
        mode=cfg.mode,
        params=params,
        dt=dt,
        time=np.array(rows_time),
        com=state_arr[:, [0, 3]],
        com_vel=state_arr[:, [1, 4]],
        zmp=state_arr[:, [2, 5]],
        cmd_zmp_vel=np.array(rows_cmd).reshape(-1, 2),
        dist_true=np.array(rows_dist).reshape(-1, 2),
        estimates=est_arr,
        delta_d=np.array(rows_dd).reshape(-1, 2),
        rhs=np.array(rows_rhs).reshape(-1, 2),
        feasible=np.array(rows_feas, dtype=bool),
        iterations=np.array(rows_iter, dtype=np.int64),
        diagnostics=diagnostics,
        footsteps_planned=planned,
        footsteps_realized=realized[: len(planned)],
        final_state=world,
        termination=termination,
    )


def write_trace(result: ScenarioResult, path) -> None:
    """Write the trace as CSV with full-precision floats."""
    cols = result.columns()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for i in range(result.n_samples):
            row = []
            for name in TRACE_COLUMNS:
                v = cols[name][i]
                row.append(str(int(v)) if name in _INT_COLUMNS else format(float(v), ".17g"))
            writer.writerow(row)


def read_trace(path) -> dict[str, np.ndarray]:
    """Read a trace CSV back into named columns (exact round-trip)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(TRACE_COLUMNS):
        vals = [row[j] for row in rows]
        if name in _INT_COLUMNS:
            out[name] = np.array([int(v) for v in vals], dtype=np.int64)
        else:
            out[name] = np.array([float(v) for v in vals])
    return out


def summarize(result: ScenarioResult) -> dict:
    """JSON-ready run summary."""
    offset = result.unstable_offset
    return {
        "name": result.name,
        "mode": result.mode,
        "samples_run": result.n_samples,
        "dt": result.dt,
        "termination": {"kind": result.termination.kind, "sample": result.termination.sample},
        "final_state": {
            "com": [result.final_state.x.com_pos, result.final_state.y.com_pos],
            "com_vel": [result.final_state.x.com_vel, result.final_state.y.com_vel],
            "zmp": [result.final_state.x.zmp_pos, result.final_state.y.zmp_pos],
        },
        "max_abs_unstable_offset": (
            [float(np.max(np.abs(offset[:, 0]))), float(np.max(np.abs(offset[:, 1])))]
            if result.n_samples
            else [0.0, 0.0]
        ),
        "mean_iterations": float(np.mean(result.iterations)) if result.n_samples else 0.0,
        "footsteps_planned": result.footsteps_planned.tolist(),
        "footsteps_realized": result.footsteps_realized.tolist(),
    }
