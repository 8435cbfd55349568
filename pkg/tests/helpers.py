"""Independent oracles shared by the test modules.

Everything here deliberately avoids the library's own closed forms:
propagation is checked against a fine-step Runge-Kutta integrator, QP
solutions against brute-force active-set enumeration, and exponentially
weighted integrals against adaptive quadrature.
"""

from __future__ import annotations

import itertools

import numpy as np


def rk4_lip(
    com_pos: float,
    com_vel: float,
    zmp_pos: float,
    zmp_vel: float,
    d0: float,
    d1: float,
    dt: float,
    eta_sq: float,
    n_sub: int = 1000,
) -> tuple[float, float, float]:
    """Integrate x'' = eta^2 (x - z) + d with affine d and constant z'.

    Classical fixed-step RK4 with n_sub substeps; time-dependence of z and
    d handled exactly inside each stage evaluation.
    """

    def rhs(t: float, state: np.ndarray) -> np.ndarray:
        x, v = state
        z = zmp_pos + zmp_vel * t
        d = d0 + d1 * t
        return np.array([v, eta_sq * (x - z) + d])

    h = dt / n_sub
    state = np.array([com_pos, com_vel], dtype=float)
    t = 0.0
    for _ in range(n_sub):
        k1 = rhs(t, state)
        k2 = rhs(t + 0.5 * h, state + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, state + 0.5 * h * k2)
        k4 = rhs(t + h, state + h * k3)
        state = state + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return float(state[0]), float(state[1]), zmp_pos + zmp_vel * dt


def enumerate_qp(H, g, A_eq, b_eq, A_in, b_in, tol: float = 1e-9):
    """Brute-force QP solution by enumerating active sets.

    Solves every equality-constrained subproblem over subsets of the
    inequality rows (sizes 0..n), keeps candidates that are primal
    feasible with nonnegative multipliers on the chosen rows, and returns
    the best (u, objective). Exponential; use small instances only.
    """
    H = np.asarray(H, float)
    g = np.asarray(g, float)
    A_eq = np.asarray(A_eq, float).reshape(-1, H.shape[0])
    b_eq = np.asarray(b_eq, float).reshape(-1)
    A_in = np.asarray(A_in, float).reshape(-1, H.shape[0])
    b_in = np.asarray(b_in, float).reshape(-1)
    n = H.shape[0]
    m_eq, m_in = A_eq.shape[0], A_in.shape[0]

    best_u, best_obj = None, np.inf
    for size in range(0, min(n - m_eq, m_in) + 1):
        for subset in itertools.combinations(range(m_in), size):
            Aw = np.vstack([A_eq, A_in[list(subset)]]) if (m_eq + size) else np.zeros((0, n))
            bw = np.concatenate([b_eq, b_in[list(subset)]])
            k = Aw.shape[0]
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = H
            kkt[:n, n:] = Aw.T
            kkt[n:, :n] = Aw
            rhs = np.concatenate([-g, bw])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            u, lam = sol[:n], sol[n:]
            if size and np.min(lam[m_eq:]) < -tol:
                continue
            if m_in and np.max(A_in @ u - b_in) > tol:
                continue
            if m_eq and np.max(np.abs(A_eq @ u - b_eq)) > tol:
                continue
            obj = 0.5 * u @ H @ u + g @ u
            if obj < best_obj - 1e-14:
                best_obj, best_u = obj, u
    return best_u, best_obj


def random_qp(rng: np.random.RandomState, n: int, m_eq: int, m_in: int, feasible_bias=True):
    """Random strictly convex QP with controlled conditioning."""
    M = rng.randn(n, n)
    H = M @ M.T + n * np.eye(n)
    g = rng.randn(n)
    A_eq = rng.randn(m_eq, n) if m_eq else np.zeros((0, n))
    A_in = rng.randn(m_in, n) if m_in else np.zeros((0, n))
    u_anchor = rng.randn(n)
    b_eq = A_eq @ u_anchor if m_eq else np.zeros(0)
    if m_in:
        slack = rng.rand(m_in) * 2.0 if feasible_bias else rng.randn(m_in)
        b_in = A_in @ u_anchor + slack
    else:
        b_in = np.zeros(0)
    return H, g, A_eq, b_eq, A_in, b_in


def quad_discounted_disturbance(
    value: float,
    slopes: np.ndarray,
    dt: float,
    eta: float,
) -> float:
    """Exponentially discounted disturbance integral by adaptive quadrature.

    Evaluates (1/eta) * integral_0^inf exp(-eta*s) d(s) ds for a signal
    that starts at ``value``, follows the piecewise-linear profile given
    by ``slopes`` on consecutive intervals of width ``dt``, and stays
    constant afterwards. Each finite interval goes through
    scipy.integrate.quad; the constant tail is added in closed form.
    """
    from scipy.integrate import quad

    slopes = np.asarray(slopes, float)
    total = 0.0
    d_left = float(value)
    for i, slope in enumerate(slopes):
        t0 = i * dt
        part, _ = quad(
            lambda s, t0=t0, d0=d_left, sl=slope: np.exp(-eta * s) * (d0 + sl * (s - t0)),
            t0,
            t0 + dt,
            epsabs=1e-14,
            epsrel=1e-12,
        )
        total += part
        d_left += slope * dt
    t_end = len(slopes) * dt
    total += d_left * np.exp(-eta * t_end) / eta
    return total / eta
