"""Problem container, KKT certification and debug dump for the QP solver.

Problems are dense convex QPs

    min  1/2 u' H u + g' u
    s.t. A_eq u  = b_eq
         A_in u <= b_in

with H symmetric positive definite (a tiny diagonal regularization is
added automatically if a Cholesky factorization fails) and A_eq of full
row rank. Everything downstream of validation assumes these hold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "QpError",
    "QpProblem",
    "KktReport",
    "FarkasCertificate",
    "check_kkt",
    "dump_problem",
    "load_problem",
]

SYM_TOL = 1e-12
REG_EPS = 1e-9


class QpError(ValueError):
    """Invalid problem data (asymmetric/indefinite H, dependent equalities...)."""


def _as_matrix(a, rows: int | None, cols: int | None, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    if out.ndim != 2:
        raise QpError(f"{name} must be 2-dimensional, got shape {out.shape}")
    if rows is not None and out.shape[0] != rows:
        raise QpError(f"{name} must have {rows} rows, got {out.shape[0]}")
    if cols is not None and out.shape[1] != cols:
        raise QpError(f"{name} must have {cols} columns, got {out.shape[1]}")
    if not np.all(np.isfinite(out)):
        raise QpError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(out)


def _as_vector(a, size: int, name: str) -> np.ndarray:
    out = np.asarray(a, dtype=float).reshape(-1)
    if out.shape[0] != size:
        raise QpError(f"{name} must have length {size}, got {out.shape[0]}")
    if not np.all(np.isfinite(out)):
        raise QpError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(out)


@dataclass
class QpProblem:
    """Validated dense QP data.

    Construction symmetrizes H (rejecting asymmetry beyond a scaled
    1e-12), checks positive definiteness (adding a 1e-9-scaled diagonal
    regularization once if needed) and requires A_eq to have full row
    rank. The Cholesky factor of the (possibly regularized) H is computed
    once and shared by all solves.
    """

    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    regularized: bool = field(init=False, default=False)

    def __post_init__(self) -> None:
        H = _as_matrix(self.H, None, None, "H")
        n = H.shape[0]
        if H.shape[1] != n:
            raise QpError(f"H must be square, got shape {H.shape}")
        scale = max(1.0, float(np.max(np.abs(H))))
        if float(np.max(np.abs(H - H.T))) > SYM_TOL * scale:
            raise QpError("H is not symmetric within tolerance")
        H = 0.5 * (H + H.T)
        self.g = _as_vector(self.g, n, "g")

        if self.A_eq is None or (hasattr(self.A_eq, "__len__") and len(self.A_eq) == 0):
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.A_eq = _as_matrix(self.A_eq, None, n, "A_eq")
            self.b_eq = _as_vector(self.b_eq, self.A_eq.shape[0], "b_eq")
        if self.A_in is None or (hasattr(self.A_in, "__len__") and len(self.A_in) == 0):
            self.A_in = np.zeros((0, n))
            self.b_in = np.zeros(0)
        else:
            self.A_in = _as_matrix(self.A_in, None, n, "A_in")
            self.b_in = _as_vector(self.b_in, self.A_in.shape[0], "b_in")

        try:
            L = np.linalg.cholesky(H)
        except np.linalg.LinAlgError:
            H = H + (REG_EPS * scale) * np.eye(n)
            try:
                L = np.linalg.cholesky(H)
            except np.linalg.LinAlgError:
                raise QpError("H is not positive definite even after regularization")
            self.regularized = True
        self.H = H
        self._chol = np.ascontiguousarray(L)

        m_eq = self.A_eq.shape[0]
        if m_eq:
            if m_eq > n:
                raise QpError(f"A_eq has {m_eq} rows for {n} variables")
            if np.linalg.matrix_rank(self.A_eq) < m_eq:
                raise QpError("A_eq does not have full row rank")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def m_eq(self) -> int:
        return self.A_eq.shape[0]

    @property
    def m_in(self) -> int:
        return self.A_in.shape[0]

    @property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor of H (after any regularization)."""
        return self._chol

    def objective(self, u: np.ndarray) -> float:
        return float(0.5 * u @ self.H @ u + self.g @ u)


@dataclass(frozen=True)
class KktReport:
    """Scaled KKT residuals of a candidate primal/dual pair."""

    stationarity: float
    primal_eq: float
    primal_in: float
    dual: float
    complementarity: float

    @property
    def max_residual(self) -> float:
        return max(
            self.stationarity,
            self.primal_eq,
            self.primal_in,
            self.dual,
            self.complementarity,
        )

    def ok(self, tol: float = 1e-8) -> bool:
        return self.max_residual <= tol


def check_kkt(problem: QpProblem, u: np.ndarray, multipliers: np.ndarray) -> KktReport:
    """Independently certify a solution against the KKT conditions.

    Uses nothing from the solver internals: only the problem data,
    the primal point and the stacked multipliers (equalities first).

    Args:
        problem: The QP that was solved.
        u: Primal solution, length n.
        multipliers: Stacked multipliers of length m_eq + m_in.

    Returns:
        KktReport of scaled residuals; report.ok(tol) applies the 1e-8 gate.
    """
    u = np.asarray(u, dtype=float)
    lam = np.asarray(multipliers, dtype=float)
    mu_eq = lam[: problem.m_eq]
    lam_in = lam[problem.m_eq :]

    grad = problem.H @ u + problem.g
    stat_vec = grad + problem.A_eq.T @ mu_eq + problem.A_in.T @ lam_in
    stat_scale = max(1.0, float(np.max(np.abs(grad))) if grad.size else 1.0)
    stationarity = float(np.max(np.abs(stat_vec))) / stat_scale if stat_vec.size else 0.0

    if problem.m_eq:
        r = problem.A_eq @ u - problem.b_eq
        primal_eq = float(np.max(np.abs(r))) / max(1.0, float(np.max(np.abs(problem.b_eq))))
    else:
        primal_eq = 0.0

    if problem.m_in:
        resid = problem.A_in @ u - problem.b_in
        primal_in = float(np.max(np.clip(resid, 0.0, None))) / max(
            1.0, float(np.max(np.abs(problem.b_in)))
        )
        dual = float(np.max(np.clip(-lam_in, 0.0, None))) / max(1.0, float(np.max(np.abs(lam_in))))
        comp_scale = max(1.0, float(np.max(np.abs(lam_in)))) * max(
            1.0, float(np.max(np.abs(resid)))
        )
        complementarity = float(np.max(np.abs(lam_in * resid))) / comp_scale
    else:
        primal_in = dual = complementarity = 0.0

    return KktReport(
        stationarity=stationarity,
        primal_eq=primal_eq,
        primal_in=primal_in,
        dual=dual,
        complementarity=complementarity,
    )


@dataclass(frozen=True)
class FarkasCertificate:
    """Certificate of primal infeasibility.

    The multipliers satisfy y_in >= 0 and make
    A_eq' y_eq + A_in' y_in ~ 0 with b_eq' y_eq + b_in' y_in < 0,
    which no feasible u can reconcile. With a nonzero combination
    residual the certificate still excludes every u with
    ||u||_2 <= radius = |value| / ||residual||_2.
    """

    y_eq: np.ndarray
    y_in: np.ndarray
    value: float
    residual_inf: float
    radius: float

    def verify(
        self,
        problem: QpProblem,
        dual_tol: float = 1e-9,
        min_radius: float = 1e6,
    ) -> bool:
        """Recheck the certificate against the problem data."""
        if self.y_in.size and float(np.min(self.y_in)) < -dual_tol * max(
            1.0, float(np.max(np.abs(self.y_in)))
        ):
            return False
        comb = problem.A_eq.T @ self.y_eq + problem.A_in.T @ self.y_in
        value = float(problem.b_eq @ self.y_eq + problem.b_in @ self.y_in)
        if value >= 0.0:
            return False
        nrm = float(np.linalg.norm(comb))
        radius = abs(value) / nrm if nrm > 0.0 else np.inf
        return radius >= min_radius


def _fmt_vector(v: np.ndarray) -> str:
    return " ".join(format(x, ".17g") for x in v)


def dump_problem(problem: QpProblem, path) -> None:
    """Write a problem to a plain-text file for offline cross-checking.

    Format (all numbers %.17g, space separated, row-major):

        ismpc-qp-dump 1
        dims <n> <m_eq> <m_in>
        H          (n lines of n values)
        g          (1 line of n values)
        A_eq       (m_eq lines of n values)
        b_eq       (1 line of m_eq values, empty line when m_eq = 0)
        A_in       (m_in lines of n values)
        b_in       (1 line of m_in values, empty line when m_in = 0)
    """
    lines = ["ismpc-qp-dump 1", f"dims {problem.n} {problem.m_eq} {problem.m_in}"]
    lines.append("H")
    lines.extend(_fmt_vector(row) for row in problem.H)
    lines.append("g")
    lines.append(_fmt_vector(problem.g))
    lines.append("A_eq")
    lines.extend(_fmt_vector(row) for row in problem.A_eq)
    lines.append("b_eq")
    lines.append(_fmt_vector(problem.b_eq))
    lines.append("A_in")
    lines.extend(_fmt_vector(row) for row in problem.A_in)
    lines.append("b_in")
    lines.append(_fmt_vector(problem.b_in))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_problem(path) -> QpProblem:
    """Inverse of :func:`dump_problem`."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0].strip() != "ismpc-qp-dump 1":
        raise QpError(f"{path}: not an ismpc qp dump")
    head = lines[1].split()
    if len(head) != 4 or head[0] != "dims":
        raise QpError(f"{path}: malformed dims line")
    n, m_eq, m_in = (int(x) for x in head[1:])

    pos = 2

    def expect(tag: str) -> None:
        nonlocal pos
        if pos >= len(lines) or lines[pos].strip() != tag:
            raise QpError(f"{path}: expected section {tag!r} at line {pos + 1}")
        pos += 1

    def read_matrix(rows: int, cols: int) -> np.ndarray:
        nonlocal pos
        out = np.zeros((rows, cols))
        for i in range(rows):
            vals = lines[pos].split()
            if len(vals) != cols:
                raise QpError(f"{path}: bad row length at line {pos + 1}")
            out[i] = [float(v) for v in vals]
            pos += 1
        return out

    def read_vector(size: int) -> np.ndarray:
        nonlocal pos
        vals = lines[pos].split()
        if len(vals) != size:
            raise QpError(f"{path}: bad vector length at line {pos + 1}")
        pos += 1
        return np.array([float(v) for v in vals])

    expect("H")
    H = read_matrix(n, n)
    expect("g")
    g = read_vector(n)
    expect("A_eq")
    A_eq = read_matrix(m_eq, n)
    expect("b_eq")
    b_eq = read_vector(m_eq)
    expect("A_in")
    A_in = read_matrix(m_in, n)
    expect("b_in")
    b_in = read_vector(m_in)
    return QpProblem(H=H, g=g, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in)
