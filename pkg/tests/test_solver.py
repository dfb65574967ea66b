import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linprog

from rampc.solver import (
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    QuadraticProgram,
    qp_kkt_residual,
    solve_lp,
    solve_qp,
)
from rampc.solver import kernels
from rampc.solver.qp import _polish

from conftest import brute_vertices, random_polytope

# -- LP ----------------------------------------------------------------------


def test_lp_box():
    lp = LinearProgram([1, 1], np.vstack([np.eye(2), -np.eye(2)]), [1, 1, 0, 0])
    res = solve_lp(lp)
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(2.0)
    np.testing.assert_allclose(res.x, [1, 1])


def test_lp_infeasible_and_unbounded():
    assert solve_lp(LinearProgram([1], [[1], [-1]], [1, -2])).status == INFEASIBLE
    assert solve_lp(LinearProgram([1, 0], [[0, 1]], [1])).status == UNBOUNDED


def test_lp_with_equality():
    # max x + 2y s.t. x + y = 1, x, y >= 0
    res = solve_lp(LinearProgram([1, 2], -np.eye(2), [0, 0], [[1, 1]], [1]))
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, [0, 1], atol=1e-12)
    assert res.info["dual_objective"] == pytest.approx(2.0)


def test_lp_rejects_bad_input():
    with pytest.raises(ValueError):
        LinearProgram([1, 1], [[1, 1, 1]], [1])
    with pytest.raises(ValueError):
        LinearProgram([np.nan])
    with pytest.raises(ValueError):
        solve_lp(LinearProgram([1], [[1]], [1]), tol=0.0)


@given(seed=st.integers(0, 10_000), m=st.integers(1, 4), extra=st.integers(0, 5))
def test_lp_matches_vertex_oracle(seed, m, extra):
    rng = np.random.default_rng(seed)
    A, b = random_polytope(rng, m, 2 * m + extra)
    c = rng.normal(size=m)
    res = solve_lp(LinearProgram(c, A, b))
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx((brute_vertices(A, b) @ c).max(), abs=1e-7)
    # strong duality
    assert res.info["dual_objective"] == pytest.approx(res.objective, abs=10 * 1e-8 * (1 + abs(res.objective)))
    assert res.kkt_residual <= 1e-8


@given(seed=st.integers(0, 10_000))
def test_lp_matches_highs_with_equalities(seed):
    rng = np.random.default_rng(seed)
    n = 6
    A_eq = rng.normal(size=(2, n))
    x0 = rng.uniform(0.1, 1.0, n)
    lp = LinearProgram(rng.normal(size=n), np.vstack([np.eye(n), -np.eye(n)]),
                       np.concatenate([np.full(n, 2.0), np.zeros(n)]), A_eq, A_eq @ x0)
    ours = solve_lp(lp)
    ref = linprog(-lp.c, A_ub=lp.A_ineq, b_ub=lp.b_ineq, A_eq=A_eq, b_eq=lp.b_eq, bounds=(None, None), method="highs")
    assert ours.status == OPTIMAL and ref.status == 0
    assert ours.objective == pytest.approx(-ref.fun, abs=1e-7)


def test_lp_is_deterministic():
    rng = np.random.default_rng(3)
    A, b = random_polytope(rng, 4, 12)
    lp = LinearProgram(rng.normal(size=4), A, b)
    r1, r2 = solve_lp(lp), solve_lp(lp)
    assert r1.status == r2.status
    assert r1.x.tobytes() == r2.x.tobytes()


# -- QP ----------------------------------------------------------------------


def test_qp_clipped_scalar():
    res = solve_qp(QuadraticProgram([[2.0]], [-2.0], [[1.0]], [0.5]))
    assert res.status == OPTIMAL
    assert res.x[0] == pytest.approx(0.5, abs=1e-8)


def test_qp_unconstrained():
    res = solve_qp(QuadraticProgram([[2.0]], [0.0]))
    assert res.status == OPTIMAL and res.x[0] == pytest.approx(0.0, abs=1e-12)


def test_qp_equality_constrained():
    # min x^2 + y^2 s.t. x + y = 1
    res = solve_qp(QuadraticProgram(2 * np.eye(2), np.zeros(2), -np.eye(2), [5, 5], [[1, 1]], [1]))
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, [0.5, 0.5], atol=1e-8)


def test_qp_infeasible_and_unbounded():
    assert solve_qp(QuadraticProgram([[1.0]], [0.0], [[1], [-1]], [0, -1])).status == INFEASIBLE
    assert solve_qp(QuadraticProgram(np.zeros((1, 1)), [-1.0], [[-1.0]], [0.0])).status == UNBOUNDED


def test_qp_validation():
    with pytest.raises(ValueError):
        QuadraticProgram([[1.0, 2.0], [0.0, 1.0]], [0, 0])
    with pytest.raises(ValueError):
        QuadraticProgram(-np.eye(2), [0, 0])


def projected_gradient(P, q, lo, hi, iters=20000):
    x = np.clip(np.zeros_like(q), lo, hi)
    step = 1.0 / np.linalg.eigvalsh(P).max()
    for _ in range(iters):
        x = np.clip(x - step * (P @ x + q), lo, hi)
    return x


def random_box_qp(rng, n):
    M = rng.normal(size=(n, n))
    P = M @ M.T + np.eye(n)
    q = rng.normal(size=n) * 3
    lo, hi = -rng.uniform(0.2, 1, n), rng.uniform(0.2, 1, n)
    return P, q, lo, hi


@given(seed=st.integers(0, 10_000), n=st.integers(1, 5))
def test_box_qp_matches_projected_gradient(seed, n):
    rng = np.random.default_rng(seed)
    P, q, lo, hi = random_box_qp(rng, n)
    res = solve_qp(QuadraticProgram(P, q, np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo])))
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.x, projected_gradient(P, q, lo, hi), atol=1e-6)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 5))
def test_qp_feasible_perturbations_do_not_improve(seed, n):
    rng = np.random.default_rng(seed)
    P, q, lo, hi = random_box_qp(rng, n)
    qp = QuadraticProgram(P, q, np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))
    res = solve_qp(qp)
    f0 = qp.objective(res.x)
    for _ in range(20):
        d = rng.normal(size=n)
        d /= np.linalg.norm(d)
        x = np.clip(res.x + 1e-4 * d, lo, hi)
        assert qp.objective(x) >= f0 - 1e-8


def test_polish_repairs_perturbed_iterate(rng):
    n = 4
    P, q, lo, hi = random_box_qp(rng, n)
    qp = QuadraticProgram(P, q, np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))
    res = solve_qp(qp)
    x = res.x + 1e-5
    z = res.ineq_dual * (1 + 1e-3)
    before = qp_kkt_residual(qp, x, z, np.zeros(0))
    xp, zp, yp = _polish(qp, x, z, np.zeros(0))
    assert qp_kkt_residual(qp, xp, zp, yp) < 1e-12 < before
    np.testing.assert_allclose(xp, res.x, atol=1e-8)


# -- jitted kernels ------------------------------------------------------------


def _kernel_lp(rng, m, p):
    A, b = random_polytope(rng, m, p)
    plus = np.arange(m, dtype=np.int64)
    minus = np.arange(m, 2 * m, dtype=np.int64)
    return A, b, plus, minus


def test_batch_support_matches_highs(rng):
    for _ in range(20):
        m = int(rng.integers(2, 7))
        A, b, plus, minus = _kernel_lp(rng, m, 4 * m)
        C = rng.normal(size=(8, m))
        bases = np.full((8, m), -1, dtype=np.int64)
        status, vals, argmax, duals = kernels.batch_support(A, b, C, bases, plus, minus, 1e-10, 10_000)
        assert status == kernels.OPTIMAL
        for i in range(8):
            ref = linprog(-C[i], A_ub=A, b_ub=b, bounds=(None, None), method="highs")
            assert vals[i] == pytest.approx(-ref.fun, abs=1e-9)
            # multipliers certify the value: A' lam = c, lam >= 0, b' lam = value
            np.testing.assert_allclose(A.T @ duals[i], C[i], atol=1e-9)
            assert duals[i] @ b == pytest.approx(vals[i], abs=1e-9)
            assert np.all(A @ argmax[i] <= b + 1e-9)


def test_warm_start_after_rhs_change_matches_cold(rng):
    m = 5
    A, b, plus, minus = _kernel_lp(rng, m, 25)
    C = rng.normal(size=(6, m))
    bases = np.full((6, m), -1, dtype=np.int64)
    kernels.batch_support(A, b, C, bases, plus, minus, 1e-10, 10_000)
    b2 = b - rng.uniform(0, 0.05, b.size)
    cold = np.full((6, m), -1, dtype=np.int64)
    _, v_cold, _, _ = kernels.batch_support(A, b2, C, cold, plus, minus, 1e-10, 10_000)
    _, v_warm, _, _ = kernels.batch_support(A, b2, C, bases, plus, minus, 1e-10, 10_000)
    np.testing.assert_allclose(v_warm, v_cold, atol=1e-10)
    # objective change: primal resumes from the old basis
    C2 = C + 0.1 * rng.normal(size=C.shape)
    _, v_warm2, _, _ = kernels.batch_support(A, b2, C2, bases, plus, minus, 1e-10, 10_000)
    cold = np.full((6, m), -1, dtype=np.int64)
    _, v_cold2, _, _ = kernels.batch_support(A, b2, C2, cold, plus, minus, 1e-10, 10_000)
    np.testing.assert_allclose(v_warm2, v_cold2, atol=1e-10)


def test_cached_batch_matches_plain(rng):
    m = 6
    A, b, plus, minus = _kernel_lp(rng, m, 30)
    bases = np.full((10, m), -1, dtype=np.int64)
    binvs = np.zeros((10, m, m))
    C = rng.normal(size=(10, m))
    for r in range(5):
        trust = r > 0
        s1, v1, x1, _ = kernels.batch_support_cached(A, b, C, bases, binvs, trust, plus, minus, 1e-10, 10_000)
        fresh = np.full((10, m), -1, dtype=np.int64)
        s2, v2, _, _ = kernels.batch_support(A, b, C, fresh, plus, minus, 1e-10, 10_000)
        assert s1 == s2 == kernels.OPTIMAL
        np.testing.assert_allclose(v1, v2, atol=1e-10)
        for i in range(10):
            np.testing.assert_allclose(binvs[i] @ A[bases[i]], np.eye(m), atol=1e-8)
        C = C + 0.2 * rng.normal(size=C.shape)


def test_kernel_reports_infeasible():
    A = np.array([[1.0], [-1.0], [1.0]])
    b = np.array([1.0, -0.5, 0.2])  # 0.5 <= h <= 0.2
    plus, minus = np.array([0]), np.array([1])
    bases = np.full((1, 1), -1, dtype=np.int64)
    status, *_ = kernels.batch_support(A, b, np.ones((1, 1)), bases, plus, minus, 1e-10, 100)
    assert status == kernels.INFEASIBLE


@given(seed=st.integers(0, 10_000), n=st.integers(1, 8))
def test_ipm_kernel_matches_reference_qp(seed, n):
    rng = np.random.default_rng(seed)
    P, q, lo, hi = random_box_qp(rng, n)
    G = np.vstack([np.eye(n), -np.eye(n), rng.normal(size=(3, n))])
    h = np.concatenate([hi, -lo, rng.uniform(0.5, 1.0, 3)])
    status, x, z, _, res = kernels.ipm_qp(P, q, G, h, 1e-9, 200, np.zeros(n), 1.0)
    assert status == kernels.OPTIMAL and res <= 1e-9
    ref = solve_qp(QuadraticProgram(P, q, G, h), tol=1e-10)
    np.testing.assert_allclose(x, ref.x, atol=1e-6)
