"""Dense convex QP solver (Mehrotra predictor-corrector interior point).

Solves ``minimize 0.5 x'Px + q'x`` s.t. ``A_ineq x <= b_ineq``, ``A_eq x = b_eq``
for symmetric positive semidefinite ``P``.  Infeasibility and unboundedness
are settled up front with two small LPs (a phase-one feasibility problem and
a recession-direction problem), so the interior point iteration only ever
runs on problems that have a finite optimum.
"""

from dataclasses import dataclass
from typing import Optional

import warnings

import numpy as np
import scipy.linalg as la

from .lp import (
    DEFAULT_TOL,
    INFEASIBLE,
    MAX_ITERATIONS,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    SolveResult,
    _as_block,
    _as_vec,
    solve_lp,
)
from . import kernels

PSD_TOL = 1e-10


@dataclass
class QuadraticProgram:
    """minimize ``0.5 x'Px + q'x`` s.t. ``A_ineq x <= b_ineq``, ``A_eq x = b_eq``."""

    P: np.ndarray
    q: np.ndarray
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.q = _as_vec(self.q)
        n = self.q.size
        self.P = np.atleast_2d(np.asarray(self.P, dtype=float)).reshape(n, n)
        self.A_ineq = _as_block(self.A_ineq, n)
        self.b_ineq = _as_vec(self.b_ineq)
        self.A_eq = _as_block(self.A_eq, n)
        self.b_eq = _as_vec(self.b_eq)
        if self.A_ineq.shape != (self.b_ineq.size, n) or self.A_eq.shape != (self.b_eq.size, n):
            raise ValueError("inconsistent QP dimensions")
        scale = max(1.0, np.abs(self.P).max(initial=0.0))
        if np.abs(self.P - self.P.T).max(initial=0.0) > PSD_TOL * scale:
            raise ValueError("P must be symmetric")
        if n and np.linalg.eigvalsh(self.P).min() < -PSD_TOL * scale:
            raise ValueError("P must be positive semidefinite")

    @property
    def n(self):
        return self.q.size

    def objective(self, x):
        return float(0.5 * x @ self.P @ x + self.q @ x)


def _recession_unbounded(qp, tol):
    """True if some feasible direction decreases the objective without bound."""
    n = qp.n
    w, V = np.linalg.eigh(qp.P)
    rng_P = V[:, w > PSD_TOL * max(1.0, np.abs(w).max(initial=0.0))]
    A_eq = np.vstack([qp.A_eq, rng_P.T])
    A_in = np.vstack([qp.A_ineq, np.eye(n), -np.eye(n)])
    b_in = np.concatenate([np.zeros(qp.A_ineq.shape[0]), np.ones(2 * n)])
    res = solve_lp(LinearProgram(-qp.q, A_in, b_in, A_eq, np.zeros(A_eq.shape[0])), tol)
    return res.ok and res.objective > tol * (1.0 + np.abs(qp.q).max(initial=0.0))


def qp_kkt_residual(qp, x, z, y):
    """Scaled max-norm KKT residual (stationarity, feasibility, complementarity)."""
    parts = [np.max(np.abs(qp.P @ x + qp.q + qp.A_ineq.T @ z + qp.A_eq.T @ y), initial=0.0)]
    if qp.A_ineq.shape[0]:
        slack = qp.b_ineq - qp.A_ineq @ x
        parts += [np.max(-slack, initial=0.0), np.max(-z, initial=0.0), np.max(np.abs(z * slack))]
    if qp.A_eq.shape[0]:
        parts.append(np.max(np.abs(qp.A_eq @ x - qp.b_eq)))
    scale = 1.0 + max(
        np.abs(qp.q).max(initial=0.0),
        np.abs(qp.b_ineq).max(initial=0.0),
        np.abs(qp.b_eq).max(initial=0.0),
    )
    return float(max(parts) / scale)


def _kkt_solve(H, E, rhs_x, rhs_y, reg):
    n, me = H.shape[0], E.shape[0]
    if me == 0:
        Hr = H + reg * np.eye(n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", la.LinAlgWarning)
            try:
                c = la.cho_factor(Hr, check_finite=False)
                dx = la.cho_solve(c, rhs_x, check_finite=False)
                dx += la.cho_solve(c, rhs_x - H @ dx, check_finite=False)
            except la.LinAlgError:
                dx = np.linalg.lstsq(H, rhs_x, rcond=None)[0]
        return dx, np.zeros(0)
    K = np.block([[H + reg * np.eye(n), E.T], [E, -reg * np.eye(me)]])
    rhs = np.concatenate([rhs_x, rhs_y])
    K0 = np.block([[H, E.T], [E, np.zeros((me, me))]])
    with warnings.catch_warnings():
        # near-singular KKT systems are expected close to the optimum
        warnings.simplefilter("ignore", la.LinAlgWarning)
        sol = la.solve(K, rhs, assume_a="sym", check_finite=False)
        sol += la.solve(K, rhs - K0 @ sol, assume_a="sym", check_finite=False)
    return sol[:n], sol[n:]


def _interior_point(qp, tol, max_iter):
    """Returns the iterate with the smallest KKT residual seen, and its residual."""
    n = qp.n
    G, h, E, d = qp.A_ineq, qp.b_ineq, qp.A_eq, qp.b_eq
    mi = G.shape[0]
    x = np.zeros(n)
    y = np.zeros(E.shape[0])
    s = np.maximum(h - G @ x, 1.0)
    z = np.ones(mi)
    reg = 1e-11 * (1.0 + np.abs(qp.P).max(initial=0.0))
    target = 0.1 * tol
    best = (np.inf, x.copy(), z.copy(), y.copy(), 0)
    for it in range(max_iter):
        res = qp_kkt_residual(qp, x, z, y)
        if res < best[0]:
            best = (res, x.copy(), z.copy(), y.copy(), it)
        if res <= target:
            break
        rd = qp.P @ x + qp.q + G.T @ z + E.T @ y
        re = E @ x - d
        ri = G @ x + s - h
        mu = s @ z / mi
        w = z / s
        H = qp.P + (G.T * w) @ G

        def direction(rc):
            tmp = (-rc + z * ri) / s
            dx, dy = _kkt_solve(H, E, -rd - G.T @ tmp, -re, reg)
            dz = tmp + w * (G @ dx)
            ds = -ri - G @ dx
            return dx, dy, dz, ds

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            with np.errstate(over="ignore"):
                return min(1.0, np.min(-v[neg] / dv[neg]))

        dx, dy, dz, ds = direction(s * z)
        a_aff = min(max_step(s, ds), max_step(z, dz))
        mu_aff = (s + a_aff * ds) @ (z + a_aff * dz) / mi
        sigma = (mu_aff / mu) ** 3
        dx, dy, dz, ds = direction(s * z + ds * dz - sigma * mu)
        alpha = min(1.0, 0.995 * min(max_step(s, ds), max_step(z, dz)))
        x = x + alpha * dx
        y = y + alpha * dy
        z = np.maximum(z + alpha * dz, 1e-300)
        s = np.maximum(s + alpha * ds, 1e-300)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            break
    res, x, z, y, it = best
    return x, z, y, it


def _polish(qp, x, z, y):
    """Re-solve the KKT system on guessed active sets around ``(x, z)``.

    Interior point iterates on degenerate problems can stall with a small
    complementarity gap; fixing the active set removes it.  Candidates are
    the rows with ``z > slack`` and the rows with slack below a few
    thresholds; the candidate with the smallest KKT residual wins, and the
    input point is kept if none improves on it.
    """
    slack = qp.b_ineq - qp.A_ineq @ x
    n, me = qp.n, qp.A_eq.shape[0]
    best = (qp_kkt_residual(qp, x, z, y), x, z, y)
    candidates = [np.flatnonzero(z > slack)]
    candidates += [np.flatnonzero(slack <= thr) for thr in (1e-9, 1e-8, 1e-7, 1e-6, 1e-5)]
    seen = set()
    for act in candidates:
        key = act.tobytes()
        if key in seen:
            continue
        seen.add(key)
        E = np.vstack([qp.A_eq, qp.A_ineq[act]])
        K = np.block([[qp.P, E.T], [E, np.zeros((E.shape[0], E.shape[0]))]])
        rhs = np.concatenate([-qp.q, qp.b_eq, qp.b_ineq[act]])
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        zp = np.zeros_like(z)
        zp[act] = np.maximum(sol[n + me:], 0.0)
        cand = (qp_kkt_residual(qp, sol[:n], zp, sol[n:n + me]), sol[:n], zp, sol[n:n + me])
        if cand[0] < best[0]:
            best = cand
    return best[1:]


def solve_qp(
    qp: QuadraticProgram, tol: float = DEFAULT_TOL, max_iter: int = 200, presolve: bool = True
) -> SolveResult:
    """Solve a convex QP; ``status == "optimal"`` guarantees ``kkt_residual <= tol``.

    ``presolve=False`` skips the feasibility and recession LPs; callers that
    know the problem has a finite optimum use it in hot loops and fall back
    to the full path when the result is not optimal.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if presolve:
        feas = solve_lp(LinearProgram(np.zeros(qp.n), qp.A_ineq, qp.b_ineq, qp.A_eq, qp.b_eq), tol)
        if feas.status != OPTIMAL:
            return SolveResult(feas.status if feas.status != UNBOUNDED else INFEASIBLE)
        if _recession_unbounded(qp, tol):
            return SolveResult(UNBOUNDED)
    if qp.A_ineq.shape[0] == 0:
        n, me = qp.n, qp.A_eq.shape[0]
        K = np.block([[qp.P, qp.A_eq.T], [qp.A_eq, np.zeros((me, me))]])
        sol = np.linalg.lstsq(K, np.concatenate([-qp.q, qp.b_eq]), rcond=None)[0]
        x, y, z, it = sol[:n], sol[n:], np.zeros(0), 0
    elif qp.A_eq.shape[0] == 0:
        _, x, z, it, _ = kernels.ipm_qp(qp.P, qp.q, qp.A_ineq, qp.b_ineq, tol, max_iter, np.zeros(qp.n), 1.0)
        y = np.zeros(0)
    else:
        x, z, y, it = _interior_point(qp, tol, max_iter)
    if qp.A_ineq.shape[0]:
        # snap to the identified active set; removes the interior offset of the iterate
        x, z, y = _polish(qp, x, z, y)
    res = qp_kkt_residual(qp, x, z, y)
    status = OPTIMAL if res <= tol else MAX_ITERATIONS
    return SolveResult(status, x=x, objective=qp.objective(x), kkt_residual=res, ineq_dual=z, eq_dual=y, iterations=it)
