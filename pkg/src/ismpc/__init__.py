"""Intrinsically stable MPC for LIP gait generation with a disturbance observer."""

from .lip import (
    AxisState,
    DecomposedState,
    LipParams,
    PlanarState,
    decompose,
    recompose,
    step_exact,
    unstable_flow,
)
from .footsteps import (
    Footstep,
    FootstepPlan,
    GaitTiming,
    PlanHorizonError,
    ZmpRegion,
    anticipative_tail,
    region_at,
)

__version__ = "0.1.0"
