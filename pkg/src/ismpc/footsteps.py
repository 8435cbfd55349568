"""Footstep plans, ZMP admissible regions and the anticipative tail.

A plan is a sequence of footstep placements walked through with a fixed
timing pattern: an initial double support that transfers the ZMP region
from a starting region to the first step, then for each step a static
single support followed by a double support that moves the region to the
next step. During double support the region center and orientation are
interpolated linearly sample by sample, so the per-sample region center
velocity is exactly (center(k+1) - center(k)) / dt; the MPC tail sums
rely on that identity.

Plans can be extended beyond their last placed step:

* ``"hold"``: the region stays at the final placement forever.
* ``"periodic"``: the final two-step cycle repeats indefinitely, i.e.
  step n+j repeats step n+j-2 displaced by the cycle displacement
  (last step minus the step two before it). This preserves left/right
  alternation. Plans with fewer than 3 steps fall back to hold.
* ``"none"``: querying past the end raises :class:`PlanHorizonError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PlanHorizonError",
    "Footstep",
    "GaitTiming",
    "ZmpRegion",
    "FootstepPlan",
    "region_at",
    "anticipative_tail",
    "default_tail_samples",
]

# phase kind codes used in the structure arrays
_INIT_DS = 0
_SS = 1
_DS = 2
_HOLD = 3


class PlanHorizonError(RuntimeError):
    """Raised when a plan with extension "none" is queried past its end."""


def _wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w


@dataclass(frozen=True)
class Footstep:
    """A single placement: position of the foot center and its yaw."""

    pos_x: float
    pos_y: float
    orientation: float = 0.0

    def __post_init__(self) -> None:
        for name in ("pos_x", "pos_y", "orientation"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        object.__setattr__(self, "orientation", _wrap_angle(self.orientation))


@dataclass(frozen=True)
class GaitTiming:
    """Durations of the gait phases and the footprint geometry.

    All durations must be positive integer multiples of the sampling
    interval; phase boundaries have to land exactly on samples.
    """

    ss_duration: float = 0.2
    ds_duration: float = 0.3
    sample_dt: float = 0.01
    footprint_x: float = 0.05
    footprint_y: float = 0.05

    def __post_init__(self) -> None:
        if not (self.sample_dt > 0.0):
            raise ValueError(f"sample_dt must be positive, got {self.sample_dt}")
        if not (self.footprint_x > 0.0 and self.footprint_y > 0.0):
            raise ValueError("footprint dimensions must be positive")
        for name in ("ss_duration", "ds_duration"):
            dur = getattr(self, name)
            if not (dur > 0.0):
                raise ValueError(f"{name} must be positive, got {dur}")
            ratio = dur / self.sample_dt
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ValueError(
                    f"{name}={dur} is not an integer multiple of sample_dt={self.sample_dt}"
                )

    @property
    def n_ss(self) -> int:
        return int(round(self.ss_duration / self.sample_dt))

    @property
    def n_ds(self) -> int:
        return int(round(self.ds_duration / self.sample_dt))

    @property
    def step_duration(self) -> float:
        """Duration of one full step cycle (single + double support)."""
        return self.ss_duration + self.ds_duration


@dataclass(frozen=True)
class ZmpRegion:
    """Oriented rectangular ZMP admissible region."""

    center_x: float
    center_y: float
    half_x: float
    half_y: float
    orientation: float = 0.0

    def local_coords(self, x: float, y: float) -> tuple[float, float]:
        """Coordinates of a point in the region frame."""
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        dx, dy = x - self.center_x, y - self.center_y
        return c * dx + s * dy, -s * dx + c * dy

    def residual(self, x: float, y: float) -> float:
        """Distance outside the region along the worst local axis, 0 inside."""
        u, v = self.local_coords(x, y)
        return max(abs(u) - self.half_x, abs(v) - self.half_y, 0.0)

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return self.residual(x, y) <= tol


@dataclass
class RegionTerms:
    """Region center of one sample as an affine function of step positions.

    center = const + sum_j weights[j] * position(step_indices[j]); used by
    the MPC when footstep positions are decision variables. Orientation
    and half sizes never depend on the positions.
    """

    const: np.ndarray
    step_indices: tuple[int, ...]
    weights: tuple[float, ...]
    orientation: float
    half_x: float
    half_y: float


@dataclass
class FootstepPlan:
    """Timed footstep sequence with per-sample ZMP regions.

    Step positions are mutable (automatic footstep adjustment rewrites
    them); timing and phase structure are fixed at construction. Steps
    materialized by the periodic extension are generated from the nominal
    plan the first time coverage is requested and behave like ordinary
    steps afterwards.
    """

    timing: GaitTiming
    initial_region: ZmpRegion
    steps: list[Footstep] = field(default_factory=list)
    extension: str = "periodic"

    def __post_init__(self) -> None:
        if self.extension not in ("periodic", "hold", "none"):
            raise ValueError(f"unknown extension mode {self.extension!r}")
        if self.extension == "periodic" and len(self.steps) < 3:
            self.extension = "hold"
        n = len(self.steps)
        self._pos = np.zeros((n, 2))
        self._orient = np.zeros(n)
        for j, st in enumerate(self.steps):
            self._pos[j] = (st.pos_x, st.pos_y)
            self._orient[j] = st.orientation
        self._n_planned = n
        # per-sample phase structure, grown on demand
        self._kind = np.zeros(0, dtype=np.int8)
        self._ja = np.zeros(0, dtype=np.int64)
        self._jb = np.zeros(0, dtype=np.int64)
        self._lam = np.zeros(0)

    # -- step bookkeeping ------------------------------------------------

    @property
    def n_steps(self) -> int:
        """Number of materialized steps (planned plus extension)."""
        return self._pos.shape[0]

    @property
    def n_planned_steps(self) -> int:
        return self._n_planned

    def step_position(self, j: int) -> np.ndarray:
        return self._pos[j].copy()

    def step_orientation(self, j: int) -> float:
        return float(self._orient[j])

    def set_step_position(self, j: int, x: float, y: float) -> None:
        """Move a step. Phase timing and orientation are unaffected."""
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ValueError("step position must be finite")
        self._pos[j] = (x, y)

    def ss_start_sample(self, j: int) -> int:
        """Sample at which single support on step j begins."""
        return self.timing.n_ds + j * (self.timing.n_ss + self.timing.n_ds)

    # -- phase structure -------------------------------------------------

    def _append_extension_step(self) -> None:
        # periodic only: repeat the two-step cycle of the nominal plan
        n = self._pos.shape[0]
        delta = self._pos[n - 1] - self._pos[n - 3]
        new_pos = self._pos[n - 2] + delta
        dth = _wrap_angle(self._orient[n - 1] - self._orient[n - 3])
        new_orient = _wrap_angle(self._orient[n - 2] + dth)
        self._pos = np.vstack([self._pos, new_pos[None, :]])
        self._orient = np.append(self._orient, new_orient)

    def _extend_structure(self, upto: int) -> None:
        """Make the structure arrays cover samples [0, upto)."""
        if upto <= self._kind.shape[0]:
            return
        kinds = list(self._kind)
        ja = list(self._ja)
        jb = list(self._jb)
        lam = list(self._lam)
        n_ss, n_ds = self.timing.n_ss, self.timing.n_ds

        def emit(kind: int, a: int, b: int, lm: float) -> None:
            kinds.append(kind)
            ja.append(a)
            jb.append(b)
            lam.append(lm)

        while len(kinds) < upto:
            k = len(kinds)
            if self._n_planned == 0:
                emit(_HOLD, -1, -1, 0.0)
                continue
            if k < n_ds:
                emit(_INIT_DS, -1, 0, k / n_ds)
                continue
            cycle = n_ss + n_ds
            j, rem = divmod(k - n_ds, cycle)
            if self.extension == "periodic":
                while j + 1 >= self._pos.shape[0]:
                    self._append_extension_step()
            else:
                last = self._pos.shape[0] - 1
                if j > last or (j == last and rem >= n_ss):
                    # past the end of the planned sequence
                    if self.extension == "none":
                        emit(_HOLD, -2, -2, 0.0)  # poisoned, query will raise
                    else:
                        emit(_HOLD, last, last, 0.0)
                    continue
            if rem < n_ss:
                emit(_SS, j, j, 0.0)
            else:
                emit(_DS, j, j + 1, (rem - n_ss) / n_ds)

        self._kind = np.array(kinds, dtype=np.int8)
        self._ja = np.array(ja, dtype=np.int64)
        self._jb = np.array(jb, dtype=np.int64)
        self._lam = np.array(lam)

    def ensure_coverage(self, n_samples: int) -> None:
        """Materialize structure (and extension steps) for n_samples samples."""
        if n_samples < 0:
            raise ValueError("n_samples must be nonnegative")
        self._extend_structure(n_samples)
        if self.extension == "none" and n_samples > 0:
            if np.any(self._ja[:n_samples] == -2):
                end = int(np.argmax(self._ja[:n_samples] == -2))
                raise PlanHorizonError(
                    f"plan ends at sample {end}, cannot cover {n_samples} samples"
                )

    # -- region queries ----------------------------------------------------

    def _check_sample(self, k: int) -> None:
        if k < 0:
            raise ValueError(f"sample index must be nonnegative, got {k}")
        self._extend_structure(k + 1)
        if self._ja[k] == -2:
            raise PlanHorizonError(f"plan does not cover sample {k}")

    def region_terms(self, k: int) -> RegionTerms:
        """Affine decomposition of the region at sample k in step positions."""
        self._check_sample(k)
        kind = self._kind[k]
        a, b, lm = int(self._ja[k]), int(self._jb[k]), float(self._lam[k])
        init_c = np.array([self.initial_region.center_x, self.initial_region.center_y])
        half_x, half_y = self.timing.footprint_x / 2.0, self.timing.footprint_y / 2.0
        if kind == _HOLD:
            if a == -1:
                return RegionTerms(
                    const=init_c,
                    step_indices=(),
                    weights=(),
                    orientation=self.initial_region.orientation,
                    half_x=self.initial_region.half_x,
                    half_y=self.initial_region.half_y,
                )
            return RegionTerms(
                const=np.zeros(2),
                step_indices=(a,),
                weights=(1.0,),
                orientation=float(self._orient[a]),
                half_x=half_x,
                half_y=half_y,
            )
        if kind == _INIT_DS:
            th0 = self.initial_region.orientation
            th = _wrap_angle(th0 + lm * _wrap_angle(self._orient[b] - th0))
            return RegionTerms(
                const=(1.0 - lm) * init_c,
                step_indices=(b,),
                weights=(lm,),
                orientation=th,
                half_x=half_x,
                half_y=half_y,
            )
        if kind == _SS:
            return RegionTerms(
                const=np.zeros(2),
                step_indices=(a,),
                weights=(1.0,),
                orientation=float(self._orient[a]),
                half_x=half_x,
                half_y=half_y,
            )
        th_a = float(self._orient[a])
        th = _wrap_angle(th_a + lm * _wrap_angle(float(self._orient[b]) - th_a))
        return RegionTerms(
            const=np.zeros(2),
            step_indices=(a, b),
            weights=(1.0 - lm, lm),
            orientation=th,
            half_x=half_x,
            half_y=half_y,
        )

    def region_at(self, k: int) -> ZmpRegion:
        """Admissible ZMP region at sample k."""
        t = self.region_terms(k)
        c = t.const.copy()
        for j, w in zip(t.step_indices, t.weights):
            c += w * self._pos[j]
        return ZmpRegion(
            center_x=float(c[0]),
            center_y=float(c[1]),
            half_x=t.half_x,
            half_y=t.half_y,
            orientation=t.orientation,
        )

    def centers(self, k0: int, n: int) -> np.ndarray:
        """Region centers for samples k0 .. k0+n-1 as an (n, 2) array."""
        if n <= 0:
            return np.zeros((0, 2))
        self._check_sample(k0 + n - 1)
        sl = slice(k0, k0 + n)
        ja, jb, lam = self._ja[sl], self._jb[sl], self._lam[sl]
        init_c = np.array([self.initial_region.center_x, self.initial_region.center_y])
        pos_ext = np.vstack([self._pos, init_c[None, :]]) if self._pos.size else init_c[None, :]
        ca = pos_ext[ja]  # index -1 selects the appended initial center
        cb = pos_ext[jb]
        lam2 = lam[:, None]
        return (1.0 - lam2) * ca + lam2 * cb

    def free_steps_in_horizon(self, k: int, horizon: int) -> list[int]:
        """Steps whose single support begins strictly inside (k, k+horizon]."""
        self._check_sample(k + horizon)
        out = []
        j = 0
        while True:
            s = self.ss_start_sample(j)
            if s > k + horizon:
                break
            if s > k and j < self.n_steps:
                out.append(j)
            j += 1
            if j >= self.n_steps:
                break
        return out


def region_at(plan: FootstepPlan, k: int) -> ZmpRegion:
    """Admissible ZMP region of a plan at sample k."""
    return plan.region_at(k)


def anticipative_tail(plan: FootstepPlan, from_sample: int, length: int) -> np.ndarray:
    """Conjectured ZMP velocities beyond the horizon.

    Returns a (length, 2) array whose row i is the velocity that moves the
    region center from sample from_sample+i to from_sample+i+1, so that
    integrating the tail velocities reproduces the region centers exactly.
    """
    if length <= 0:
        return np.zeros((0, 2))
    c = plan.centers(from_sample, length + 1)
    return np.diff(c, axis=0) / plan.timing.sample_dt


def default_tail_samples(eta: float, dt: float) -> int:
    """Tail length making the truncated stability sum residual negligible.

    Chosen so e^(-eta dt T) < e^-12, which bounds the dropped tail of the
    geometric sum at about 6e-6 of max tail velocity.
    """
    return int(math.ceil(12.0 / (eta * dt)))
