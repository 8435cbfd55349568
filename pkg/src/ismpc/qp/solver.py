"""Driver for the primal active-set QP solver.

Responsibilities on top of the core iteration: choosing a backend,
finding a feasible start (warm-start cascade, then a phase-1 feasibility
search), detecting infeasibility with a Farkas certificate and packaging
the solution.

Start cascade, in order:

1. Warm working set: solve the equality-constrained subproblem on the
   caller's previous active set; if its solution is feasible, start there.
2. Warm point: project the caller's previous solution onto the equality
   constraints; if feasible, start there with an empty working set.
3. Equality-only optimum; if feasible, start there.
4. Phase-1: proximal sequence of slack problems
       min 1/2 ||u - u_c||^2 + 1/2 ||s||^2
       s.t. A_eq u = b_eq,  A_in u - s <= b_in,  s >= 0
   re-centered at each solution. At the fixed point the centering term
   vanishes, so the remaining violation is the true minimum violation:
   above FEAS_TOL the problem is declared infeasible and the fixed-point
   multipliers provide the certificate.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import cho_solve

from . import _active_set_py
from ._active_set_py import FEAS_TOL, MAX_ITER, OPTIMAL, _solve_spd
from .problem import FarkasCertificate, QpProblem, check_kkt

try:  # compiled core, optional
    from . import _active_set_cy  # type: ignore[attr-defined]

    HAVE_CYTHON = hasattr(_active_set_cy, "core_solve")
except ImportError:  # pragma: no cover - depends on build environment
    _active_set_cy = None
    HAVE_CYTHON = False

__all__ = ["WarmStart", "QpSolution", "solve", "available_backends", "default_backend"]

_PHASE1_MAX_ROUNDS = 30
_FIXED_POINT_TOL = 1e-11


def available_backends() -> tuple[str, ...]:
    return ("python", "cython") if HAVE_CYTHON else ("python",)


def default_backend() -> str:
    env = os.environ.get("ISMPC_QP_BACKEND", "auto").strip().lower()
    if env in ("python", "cython"):
        if env == "cython" and not HAVE_CYTHON:
            raise RuntimeError("ISMPC_QP_BACKEND=cython but the compiled core is unavailable")
        return env
    if env not in ("", "auto"):
        raise RuntimeError(f"unknown ISMPC_QP_BACKEND value {env!r}")
    return "cython" if HAVE_CYTHON else "python"


def _core(backend: str):
    if backend == "cython":
        if not HAVE_CYTHON:
            raise RuntimeError("compiled QP core is unavailable")
        return _active_set_cy.core_solve
    return _active_set_py.core_solve


@dataclass(frozen=True)
class WarmStart:
    """Hints from a previous solve of a related problem."""

    active_set: tuple[int, ...] | None = None
    u: np.ndarray | None = None


@dataclass
class QpSolution:
    """Result of a solve.

    status is one of "optimal", "infeasible", "max_iter". For infeasible
    problems u/multipliers/objective are None and certificate carries the
    Farkas multipliers.
    """

    status: str
    u: np.ndarray | None
    multipliers: np.ndarray | None
    active_set: tuple[int, ...]
    iterations: int
    objective: float | None
    backend: str
    certificate: FarkasCertificate | None = None
    phase1_rounds: int = 0
    kkt: object = field(default=None, repr=False)


def _feasible(problem: QpProblem, u: np.ndarray, tol: float = FEAS_TOL) -> bool:
    if problem.m_eq:
        r = np.max(np.abs(problem.A_eq @ u - problem.b_eq))
        if r > tol * max(1.0, float(np.max(np.abs(problem.b_eq)))):
            return False
    if problem.m_in:
        if float(np.max(problem.A_in @ u - problem.b_in)) > tol:
            return False
    return True


def _eqp_point(problem: QpProblem, rows: list[int], A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Optimum of the QP with the given stacked rows as equalities."""
    L = problem.chol
    h0 = cho_solve((L, True), problem.g)
    if not rows:
        return -h0
    Ar = A[rows]
    Y = cho_solve((L, True), np.ascontiguousarray(Ar.T))
    if Y.ndim == 1:
        Y = Y[:, None]
    lam = _solve_spd(Ar @ Y, -(b[rows] + Ar @ h0))
    return -h0 - Y @ lam


def _project_eq(problem: QpProblem, u: np.ndarray) -> np.ndarray:
    """Minimal correction of u onto the equality constraints."""
    if not problem.m_eq:
        return u.copy()
    Ae = problem.A_eq
    r = problem.b_eq - Ae @ u
    return u + Ae.T @ np.linalg.solve(Ae @ Ae.T, r)


def _violation(problem: QpProblem, u: np.ndarray) -> float:
    if not problem.m_in:
        return 0.0
    return float(np.max(np.clip(problem.A_in @ u - problem.b_in, 0.0, None)))


def _polish_on_structure(
    A1: np.ndarray, b1: np.ndarray, rows: list[int], v_round: np.ndarray, n: int
) -> np.ndarray:
    """Exact minimum-||s|| point on the affine set of active phase-1 rows.

    The round's solution satisfies the active rows exactly, so the set is
    nonempty; moving within its null space to shrink the slack part gives
    the limit of the proximal iteration for the current structure without
    crawling there geometrically.
    """
    if not rows:
        return v_round[:n]
    C = A1[rows]
    N = scipy.linalg.null_space(C)
    if N.shape[1] == 0:
        return v_round[:n]
    z = np.linalg.lstsq(N[n:], -v_round[n:], rcond=None)[0]
    v = v_round + N @ z
    return v[:n]


def _repair_start(
    problem: QpProblem, u: np.ndarray, rounds: int = 3, cap: float = 1e-6
) -> np.ndarray | None:
    """Minimal-norm correction of a nearly feasible point.

    Moves the point onto each violated inequality (as an equality) while
    keeping the equalities satisfied. Violations larger than `cap` are
    not worth chasing this way — returns None so the caller falls back
    to the full feasibility search.
    """
    for _ in range(rounds):
        r_eq = problem.A_eq @ u - problem.b_eq if problem.m_eq else np.zeros(0)
        r_in = problem.A_in @ u - problem.b_in if problem.m_in else np.zeros(0)
        bad = np.flatnonzero(r_in > 0.0)
        eq_ok = r_eq.size == 0 or float(np.max(np.abs(r_eq))) <= FEAS_TOL
        if bad.size == 0 and eq_ok:
            return u
        if bad.size and float(np.max(r_in[bad])) > cap:
            return None
        E = np.vstack([problem.A_eq, problem.A_in[bad]])
        r = np.concatenate([r_eq, r_in[bad]])
        G = E @ E.T
        scale = float(np.max(np.abs(G))) if G.size else 1.0
        try:
            c = np.linalg.solve(G + 1e-14 * max(1.0, scale) * np.eye(G.shape[0]), r)
        except np.linalg.LinAlgError:
            c = np.linalg.lstsq(G, r, rcond=None)[0]
        u = u - E.T @ c
    return u if _feasible(problem, u) else None


def _phase1(
    problem: QpProblem,
    seed: np.ndarray,
    core,
    max_iter: int,
    warm_rows: list[int] | None = None,
) -> tuple[np.ndarray | None, FarkasCertificate | None, int, int]:
    """Search for a feasible point; returns (u, certificate, rounds, iters).

    warm_rows (stacked indices, equalities first) seed the first round's
    working set alongside the tight slack rows.
    """
    n, m_eq, m_in = problem.n, problem.m_eq, problem.m_in
    nv = n + m_in
    A1 = np.zeros((m_eq + 2 * m_in, nv))
    b1 = np.zeros(m_eq + 2 * m_in)
    if m_eq:
        A1[:m_eq, :n] = problem.A_eq
        b1[:m_eq] = problem.b_eq
    A1[m_eq : m_eq + m_in, :n] = problem.A_in
    A1[m_eq : m_eq + m_in, n:] = -np.eye(m_in)
    b1[m_eq : m_eq + m_in] = problem.b_in
    A1[m_eq + m_in :, n:] = -np.eye(m_in)
    L1 = np.eye(nv)

    u_c = _project_eq(problem, seed)
    g1 = np.zeros(nv)
    total_iters = 0
    u_star = u_c
    viol = np.inf
    lam1 = np.zeros(m_eq + 2 * m_in)
    w_prev: list[int] = []
    rounds = 0
    for rounds in range(1, _PHASE1_MAX_ROUNDS + 1):
        s_c = np.clip(problem.A_in @ u_c - problem.b_in, 0.0, None)
        g1[:n] = -u_c
        v0 = np.concatenate([u_c, s_c])
        if rounds == 1:
            w0 = sorted(
                set(warm_rows or [])
                | {m_eq + m_in + i for i in range(m_in) if s_c[i] <= 0.0}
            )
        else:
            w0 = w_prev
        v, lam1, w_prev, it, _st = core(L1, g1, A1, b1, m_eq, v0, w0, max_iter)
        total_iters += it
        u_star = v[:n]
        viol = _violation(problem, u_star)
        if viol <= 1e-12:
            return u_star, None, rounds, total_iters
        # jump to the proximal limit for the current active structure
        u_cand = _polish_on_structure(A1, b1, list(range(m_eq)) + w_prev, v, n)
        viol_cand = _violation(problem, u_cand)
        if viol_cand <= 1e-12:
            return u_cand, None, rounds, total_iters
        if viol_cand < viol:
            u_star, viol = u_cand, viol_cand
        if float(np.max(np.abs(u_star - u_c))) <= _FIXED_POINT_TOL * (
            1.0 + float(np.max(np.abs(u_star)))
        ):
            break
        u_c = u_star

    if viol <= FEAS_TOL:
        return u_star, None, rounds, total_iters

    y_eq = lam1[:m_eq].copy()
    y_in = np.clip(lam1[m_eq : m_eq + m_in].copy(), 0.0, None)
    comb = problem.A_eq.T @ y_eq + problem.A_in.T @ y_in
    value = float(problem.b_eq @ y_eq + problem.b_in @ y_in)
    nrm = float(np.linalg.norm(comb))
    cert = FarkasCertificate(
        y_eq=y_eq,
        y_in=y_in,
        value=value,
        residual_inf=float(np.max(np.abs(comb))) if comb.size else 0.0,
        radius=abs(value) / nrm if nrm > 0.0 else np.inf,
    )
    return None, cert, rounds, total_iters


def solve(
    problem: QpProblem,
    warm_start: WarmStart | None = None,
    backend: str | None = None,
    max_iter: int | None = None,
) -> QpSolution:
    """Solve a validated QP.

    Args:
        problem: Problem data (validated at construction).
        warm_start: Optional previous active set and/or solution point.
        backend: "python", "cython" or None for the environment default.
        max_iter: Iteration budget for the core loop (default scales with
            problem size).

    Returns:
        QpSolution; status "infeasible" carries a Farkas certificate and
        is a regular outcome, not an error.
    """
    bk = backend or default_backend()
    core = _core(bk)
    n, m_eq, m_in = problem.n, problem.m_eq, problem.m_in
    if max_iter is None:
        max_iter = 20 * (n + m_eq + m_in) + 50

    A = np.vstack([problem.A_eq, problem.A_in])
    b = np.concatenate([problem.b_eq, problem.b_in])

    start: tuple[np.ndarray, list[int]] | None = None
    phase1_rounds = 0
    phase1_iters = 0

    w_rows: list[int] = []
    if warm_start is not None and warm_start.active_set:
        w_rows = sorted(
            {m_eq + int(i) for i in warm_start.active_set if 0 <= int(i) < m_in}
        )
        if len(w_rows) > max(0, n - m_eq):
            w_rows = w_rows[: max(0, n - m_eq)]

    if w_rows:
        u_w = _eqp_point(problem, list(range(m_eq)) + w_rows, A, b)
        if _feasible(problem, u_w):
            start = (u_w, w_rows)

    # The core accepts working rows that are not tight at the start point,
    # so a good active-set guess is kept even when its EQP point is not
    # feasible: the core walks toward it, adjusting the set on the way.
    if start is None and warm_start is not None and warm_start.u is not None:
        u_p = _project_eq(problem, np.asarray(warm_start.u, dtype=float))
        if not _feasible(problem, u_p):
            repaired = _repair_start(problem, u_p)
            u_p = repaired if repaired is not None else None
        if u_p is not None and _feasible(problem, u_p):
            start = (u_p, w_rows)

    u_e = None
    if start is None:
        u_e = _eqp_point(problem, list(range(m_eq)), A, b)
        if not _feasible(problem, u_e):
            repaired = _repair_start(problem, u_e)
            u_e2 = repaired if repaired is not None else None
        else:
            u_e2 = u_e
        if u_e2 is not None:
            start = (u_e2, w_rows)

    if start is None:
        seed = (
            np.asarray(warm_start.u, dtype=float)
            if warm_start is not None and warm_start.u is not None
            else u_e
        )
        u_f, cert, phase1_rounds, phase1_iters = _phase1(
            problem, seed, core, max_iter, warm_rows=w_rows
        )
        if u_f is None:
            return QpSolution(
                status="infeasible",
                u=None,
                multipliers=None,
                active_set=(),
                iterations=phase1_iters,
                objective=None,
                backend=bk,
                certificate=cert,
                phase1_rounds=phase1_rounds,
            )
        start = (u_f, w_rows)

    u0, w0 = start
    u, lam, working, iters, code = core(problem.chol, problem.g, A, b, m_eq, u0, w0, max_iter)

    sol = QpSolution(
        status="optimal" if code == OPTIMAL else "max_iter",
        u=u,
        multipliers=lam,
        active_set=tuple(sorted(r - m_eq for r in working)),
        iterations=iters + phase1_iters,
        objective=problem.objective(u),
        backend=bk,
        phase1_rounds=phase1_rounds,
    )
    if os.environ.get("ISMPC_QP_CHECK", "").strip() not in ("", "0"):
        report = check_kkt(problem, u, lam)
        sol.kkt = report
        if code == OPTIMAL and not report.ok(1e-8):
            raise RuntimeError(f"KKT certification failed: {report}")
    return sol
