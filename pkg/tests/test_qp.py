import numpy as np
import pytest

import ismpc.qp as qp
from helpers import enumerate_qp, random_qp

BACKENDS = qp.available_backends()


def small_box_problem():
    # min ||u - (2, 0.5)||^2 inside the unit box
    H = 2.0 * np.eye(2)
    g = np.array([-4.0, -1.0])
    A_in = np.vstack([np.eye(2), -np.eye(2)])
    b_in = np.ones(4)
    return qp.QpProblem(H=H, g=g, A_in=A_in, b_in=b_in)


@pytest.mark.parametrize("backend", BACKENDS)
def test_simple_projection(backend):
    sol = qp.solve(small_box_problem(), backend=backend)
    assert sol.status == "optimal"
    assert sol.u == pytest.approx([1.0, 0.5], abs=1e-10)
    assert sol.active_set == (0,)
    report = qp.check_kkt(small_box_problem(), sol.u, sol.multipliers)
    assert report.ok(1e-8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_unconstrained_interior(backend):
    H = 2.0 * np.eye(2)
    g = np.array([-0.2, 0.4])
    A_in = np.vstack([np.eye(2), -np.eye(2)])
    b_in = np.ones(4)
    p = qp.QpProblem(H=H, g=g, A_in=A_in, b_in=b_in)
    sol = qp.solve(p, backend=backend)
    assert sol.status == "optimal"
    assert sol.u == pytest.approx([0.1, -0.2], abs=1e-12)
    assert sol.active_set == ()


@pytest.mark.parametrize("backend", BACKENDS)
def test_equality_only_matches_kkt_closed_form(backend):
    rng = np.random.RandomState(0)
    for _ in range(20):
        n, m = 6, 2
        M = rng.randn(n, n)
        H = M @ M.T + n * np.eye(n)
        g = rng.randn(n)
        A = rng.randn(m, n)
        b = rng.randn(m)
        p = qp.QpProblem(H=H, g=g, A_eq=A, b_eq=b)
        sol = qp.solve(p, backend=backend)
        assert sol.status == "optimal"
        kkt = np.block([[H, A.T], [A, np.zeros((m, m))]])
        ref = np.linalg.solve(kkt, np.concatenate([-g, b]))
        assert sol.u == pytest.approx(ref[:n], abs=1e-9)
        assert sol.multipliers[:m] == pytest.approx(ref[n:], abs=1e-8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_random_problems_match_enumeration(backend):
    rng = np.random.RandomState(42)
    solved = 0
    for trial in range(60):
        n = int(rng.randint(2, 6))
        m_eq = int(rng.randint(0, min(2, n - 1) + 1))
        m_in = int(rng.randint(1, 9))
        data = random_qp(rng, n, m_eq, m_in, feasible_bias=trial % 3 != 0)
        p = qp.QpProblem(*_fields(data))
        sol = qp.solve(p, backend=backend)
        u_ref, obj_ref = enumerate_qp(*data)
        if u_ref is None:
            assert sol.status == "infeasible", f"trial {trial}"
            assert sol.certificate is not None
            assert sol.certificate.verify(p, min_radius=1e3)
            continue
        assert sol.status == "optimal", f"trial {trial}"
        solved += 1
        assert np.max(np.abs(sol.u - u_ref)) < 1e-7, f"trial {trial}"
        assert sol.objective == pytest.approx(obj_ref, abs=1e-9)
        assert qp.check_kkt(p, sol.u, sol.multipliers).ok(1e-8)
    assert solved > 20


def _fields(data):
    H, g, A_eq, b_eq, A_in, b_in = data
    return H, g, A_eq, b_eq, A_in, b_in


@pytest.mark.parametrize("backend", BACKENDS)
def test_contradictory_constraints_infeasible(backend):
    # u1 <= -1 and u1 >= 1 cannot hold
    H = np.eye(2)
    g = np.zeros(2)
    A_in = np.array([[1.0, 0.0], [-1.0, 0.0]])
    b_in = np.array([-1.0, -1.0])
    p = qp.QpProblem(H=H, g=g, A_in=A_in, b_in=b_in)
    sol = qp.solve(p, backend=backend)
    assert sol.status == "infeasible"
    assert sol.u is None and sol.objective is None
    cert = sol.certificate
    assert cert is not None
    assert cert.verify(p, min_radius=1e6)
    assert cert.value < 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible_with_equalities(backend):
    # equality forces u1 + u2 = 4, inequality forces u1 + u2 <= 1
    H = np.eye(2)
    g = np.zeros(2)
    p = qp.QpProblem(
        H=H,
        g=g,
        A_eq=np.array([[1.0, 1.0]]),
        b_eq=np.array([4.0]),
        A_in=np.array([[1.0, 1.0]]),
        b_in=np.array([1.0]),
    )
    sol = qp.solve(p, backend=backend)
    assert sol.status == "infeasible"
    assert sol.certificate.verify(p, min_radius=1e6)


@pytest.mark.parametrize("backend", BACKENDS)
def test_warm_start_equals_cold(backend):
    rng = np.random.RandomState(5)
    for _ in range(25):
        data = random_qp(rng, 5, 1, 8)
        p = qp.QpProblem(*_fields(data))
        cold = qp.solve(p, backend=backend)
        if cold.status != "optimal":
            continue
        warm = qp.solve(
            p,
            warm_start=qp.WarmStart(active_set=cold.active_set, u=cold.u),
            backend=backend,
        )
        assert warm.status == "optimal"
        assert np.max(np.abs(warm.u - cold.u)) < 1e-9
        # nonsense warm hints must not change the optimum either
        bogus = qp.solve(
            p,
            warm_start=qp.WarmStart(active_set=(0, 3), u=rng.randn(5) * 10),
            backend=backend,
        )
        assert bogus.status == "optimal"
        assert np.max(np.abs(bogus.u - cold.u)) < 1e-9


@pytest.mark.parametrize("backend", BACKENDS)
def test_deterministic_resolve(backend):
    rng = np.random.RandomState(9)
    data = random_qp(rng, 6, 1, 10)
    p1 = qp.QpProblem(*_fields(data))
    p2 = qp.QpProblem(*_fields(data))
    s1 = qp.solve(p1, backend=backend)
    s2 = qp.solve(p2, backend=backend)
    assert s1.status == s2.status
    assert np.array_equal(s1.u, s2.u)
    assert np.array_equal(s1.multipliers, s2.multipliers)
    assert s1.active_set == s2.active_set
    assert s1.iterations == s2.iterations


def test_validation_rejects_bad_data():
    with pytest.raises(qp.QpError):
        qp.QpProblem(H=np.array([[1.0, 0.5], [0.0, 1.0]]), g=np.zeros(2))  # asymmetric
    with pytest.raises(qp.QpError):
        qp.QpProblem(H=-np.eye(2), g=np.zeros(2))  # negative definite
    with pytest.raises(qp.QpError):
        qp.QpProblem(  # dependent equality rows
            H=np.eye(2),
            g=np.zeros(2),
            A_eq=np.array([[1.0, 1.0], [2.0, 2.0]]),
            b_eq=np.zeros(2),
        )
    with pytest.raises(qp.QpError):
        qp.QpProblem(H=np.eye(2), g=np.zeros(3))
    with pytest.raises(qp.QpError):
        qp.QpProblem(H=np.eye(2), g=np.array([np.nan, 0.0]))


def test_near_semidefinite_h_regularized():
    # rank-1 H: needs the automatic diagonal regularization to factor
    H = np.outer([1.0, 2.0], [1.0, 2.0])
    p = qp.QpProblem(H=H, g=np.array([1.0, 1.0]), A_in=np.eye(2), b_in=np.ones(2))
    assert p.regularized
    sol = qp.solve(p)
    assert sol.status == "optimal"


def test_kkt_checker_flags_wrong_solution():
    p = small_box_problem()
    sol = qp.solve(p)
    good = qp.check_kkt(p, sol.u, sol.multipliers)
    assert good.ok(1e-8)
    bad = qp.check_kkt(p, sol.u + 1e-3, sol.multipliers)
    assert not bad.ok(1e-8)
    lam = sol.multipliers.copy()
    lam[0] += 0.5
    assert not qp.check_kkt(p, sol.u, lam).ok(1e-8)


def test_dump_load_round_trip(tmp_path):
    rng = np.random.RandomState(2)
    data = random_qp(rng, 4, 1, 5)
    p = qp.QpProblem(*_fields(data))
    path = tmp_path / "problem.txt"
    qp.dump_problem(p, path)
    q = qp.load_problem(path)
    assert np.array_equal(q.H, p.H)
    assert np.array_equal(q.g, p.g)
    assert np.array_equal(q.A_eq, p.A_eq)
    assert np.array_equal(q.b_eq, p.b_eq)
    assert np.array_equal(q.A_in, p.A_in)
    assert np.array_equal(q.b_in, p.b_in)
    s1, s2 = qp.solve(p), qp.solve(q)
    assert np.array_equal(s1.u, s2.u)


def test_duplicate_inequality_rows_ok():
    H = 2.0 * np.eye(2)
    g = np.array([-4.0, -1.0])
    A_in = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    b_in = np.array([1.0, 1.0, 1.0])
    p = qp.QpProblem(H=H, g=g, A_in=A_in, b_in=b_in)
    sol = qp.solve(p)
    assert sol.status == "optimal"
    assert sol.u == pytest.approx([1.0, 0.5], abs=1e-9)
    assert qp.check_kkt(p, sol.u, sol.multipliers).ok(1e-8)


def test_active_set_reported_sorted():
    rng = np.random.RandomState(31)
    for _ in range(10):
        data = random_qp(rng, 4, 0, 7)
        p = qp.QpProblem(*_fields(data))
        sol = qp.solve(p)
        if sol.status == "optimal":
            assert list(sol.active_set) == sorted(sol.active_set)
            resid = p.A_in @ sol.u - p.b_in
            for i in sol.active_set:
                assert abs(resid[i]) < 1e-7
