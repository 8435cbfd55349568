"""Dense convex QP solver (primal active set) with optional compiled core."""

from .problem import (
    FarkasCertificate,
    KktReport,
    QpError,
    QpProblem,
    check_kkt,
    dump_problem,
    load_problem,
)
from .solver import (
    HAVE_CYTHON,
    QpSolution,
    WarmStart,
    available_backends,
    default_backend,
    solve,
)

__all__ = [
    "QpError",
    "QpProblem",
    "QpSolution",
    "WarmStart",
    "KktReport",
    "FarkasCertificate",
    "check_kkt",
    "dump_problem",
    "load_problem",
    "solve",
    "available_backends",
    "default_backend",
    "HAVE_CYTHON",
]
