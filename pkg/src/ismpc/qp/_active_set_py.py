"""Pure NumPy primal active-set core.

Reference implementation of the solver loop; the compiled backend in
``_active_set_cy`` mirrors this algorithm step for step (same working-set
updates, same tolerances, same tie-breaking), so both backends follow the
same path up to floating-point reassociation.

The core assumes the driver has prepared a feasible start: equalities
satisfied and inequalities within FEAS_TOL. It maintains the working set
W (all equality rows plus a subset of inequality rows treated as
equalities), solving each equality-constrained subproblem through the
Schur complement S = A_W H^-1 A_W' with a cached Y = H^-1 A_W'.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

# status codes
OPTIMAL = 0
MAX_ITER = 1

# shared tolerances (the compiled backend uses the same values)
FEAS_TOL = 1e-10
STAT_TOL = 1e-12
MULT_TOL = 1e-9
DEN_TOL = 1e-11
RATIO_TIE = 1e-10

_RIDGE_STEPS = (0.0, 1e-13, 1e-9)


def _solve_spd(S: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve S x = rhs for symmetric positive definite S.

    Near-singular S (dependent working rows) gets a tiny ridge; as a last
    resort a least-squares solve keeps the iteration deterministic.
    """
    if S.shape[0] == 0:
        return np.zeros(0)
    d = max(1.0, float(np.max(np.abs(np.diag(S)))))
    for ridge in _RIDGE_STEPS:
        try:
            if ridge == 0.0:
                c = np.linalg.cholesky(S)
            else:
                c = np.linalg.cholesky(S + (ridge * d) * np.eye(S.shape[0]))
            return cho_solve((c, True), rhs)
        except np.linalg.LinAlgError:
            continue
    return np.linalg.lstsq(S, rhs, rcond=None)[0]


def core_solve(
    L: np.ndarray,
    g: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    m_eq: int,
    u0: np.ndarray,
    w0,
    max_iter: int,
):
    """Run the active-set iteration.

    Args:
        L: Lower Cholesky factor of H.
        g: Linear cost term.
        A: Stacked constraint matrix, equality rows first.
        b: Stacked right-hand side.
        m_eq: Number of equality rows (always in the working set).
        u0: Feasible start point.
        w0: Initial working inequality rows (global indices >= m_eq).
        max_iter: Iteration budget (EQP solves).

    Returns:
        Tuple (u, lam, working, iterations, status) where lam holds the
        stacked multipliers (zeros for inactive rows), working the final
        inequality working set (global indices, insertion order) and
        status is OPTIMAL or MAX_ITER.
    """
    n = g.shape[0]
    m = A.shape[0]
    m_in = m - m_eq
    h0 = cho_solve((L, True), g) if n else np.zeros(0)

    working: list[int] = list(range(m_eq)) + [int(i) for i in w0]
    if working:
        Y = cho_solve((L, True), np.ascontiguousarray(A[working].T))
        if Y.ndim == 1:
            Y = Y[:, None]
        S = A[working] @ Y
    else:
        Y = np.zeros((n, 0))
        S = np.zeros((0, 0))

    in_working = np.zeros(m_in, dtype=bool)
    for i in w0:
        in_working[int(i) - m_eq] = True

    u = u0.astype(float).copy()
    A_in = A[m_eq:]
    b_in = b[m_eq:]
    lam_w = np.zeros(len(working))
    it = 0

    def add_row(row: int) -> None:
        nonlocal Y, S
        y = cho_solve((L, True), A[row])
        cross = A[working] @ y if working else np.zeros(0)
        nw = len(working)
        S_new = np.empty((nw + 1, nw + 1))
        S_new[:nw, :nw] = S
        S_new[:nw, nw] = cross
        S_new[nw, :nw] = cross
        S_new[nw, nw] = A[row] @ y
        S = S_new
        Y = np.column_stack([Y, y])
        working.append(row)
        in_working[row - m_eq] = True

    def drop_row(pos: int) -> None:
        nonlocal Y, S
        row = working.pop(pos)
        in_working[row - m_eq] = False
        Y = np.delete(Y, pos, axis=1)
        S = np.delete(np.delete(S, pos, axis=0), pos, axis=1)

    while it < max_iter:
        it += 1
        nw = len(working)
        if nw:
            rhs = -(b[working] + A[working] @ h0)
            lam_w = _solve_spd(S, rhs)
            u_eqp = -h0 - Y @ lam_w
        else:
            lam_w = np.zeros(0)
            u_eqp = -h0

        p = u_eqp - u
        scale_u = 1.0 + (float(np.max(np.abs(u_eqp))) if n else 0.0)
        stationary = n == 0 or float(np.max(np.abs(p))) <= STAT_TOL * scale_u

        if not stationary:
            # ratio test over inequality rows not in the working set
            ap = A_in @ p
            alpha = 1.0
            blocker = -1
            free = ~in_working
            if np.any(free):
                ap_free = ap[free]
                den_gate = DEN_TOL * max(1.0, float(np.max(np.abs(ap_free))))
                cand = free & (ap > den_gate)
                if np.any(cand):
                    slack = np.clip(b_in[cand] - A_in[cand] @ u, 0.0, None)
                    ratios = slack / ap[cand]
                    rmin = float(np.min(ratios))
                    if rmin < 1.0:
                        alpha = rmin
                        tie = rmin * (1.0 + RATIO_TIE) + 1e-300
                        idx = np.flatnonzero(cand)[ratios <= tie]
                        blocker = int(idx[0]) + m_eq
            if blocker >= 0:
                u = u + alpha * p
                add_row(blocker)
                continue
            u = u_eqp
        else:
            u = u_eqp

        # stationary on the working set: check inequality multipliers
        if nw > m_eq:
            lam_ineq = lam_w[m_eq:]
            lmin = float(np.min(lam_ineq))
            gate = -MULT_TOL * max(1.0, float(np.max(np.abs(lam_w))))
            if lmin < gate:
                tie = lmin + MULT_TOL * 0.01 * max(1.0, abs(lmin))
                cands = [
                    (working[m_eq + j], m_eq + j)
                    for j in range(nw - m_eq)
                    if lam_ineq[j] <= tie
                ]
                drop_row(min(cands)[1])
                continue
        lam = np.zeros(m)
        lam[working] = lam_w
        return u, lam, [r for r in working if r >= m_eq], it, OPTIMAL

    lam = np.zeros(m)
    if len(working) == lam_w.shape[0]:
        lam[working] = lam_w
    return u, lam, [r for r in working if r >= m_eq], it, MAX_ITER
