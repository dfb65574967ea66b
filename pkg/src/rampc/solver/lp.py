"""Dense two-phase simplex for small linear programs.

Problems are stated as ``maximize c'x`` subject to ``A_ineq x <= b_ineq`` and
``A_eq x = b_eq`` with ``x`` free. Internally the free variables are split,
slacks are added and a phase-one tableau with one artificial per row finds a
starting basis. The final basis is re-solved against the original data so
that the reported point and multipliers do not carry tableau round-off.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max-iterations"

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000


def _as_block(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.size == 0:
        return np.zeros((0, n))
    return A


def _as_vec(b):
    if b is None:
        return np.zeros(0)
    return np.atleast_1d(np.asarray(b, dtype=float)).ravel()


@dataclass
class LinearProgram:
    """maximize ``c'x`` s.t. ``A_ineq x <= b_ineq``, ``A_eq x = b_eq``."""

    c: np.ndarray
    A_ineq: Optional[np.ndarray] = None
    b_ineq: Optional[np.ndarray] = None
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = _as_vec(self.c)
        n = self.c.size
        self.A_ineq = _as_block(self.A_ineq, n)
        self.b_ineq = _as_vec(self.b_ineq)
        self.A_eq = _as_block(self.A_eq, n)
        self.b_eq = _as_vec(self.b_eq)
        if self.A_ineq.shape[1] != n or self.A_eq.shape[1] != n:
            raise ValueError("constraint blocks must have one column per variable")
        if self.A_ineq.shape[0] != self.b_ineq.size:
            raise ValueError("A_ineq and b_ineq row counts differ")
        if self.A_eq.shape[0] != self.b_eq.size:
            raise ValueError("A_eq and b_eq row counts differ")
        for arr in (self.c, self.A_ineq, self.b_ineq, self.A_eq, self.b_eq):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def n(self):
        return self.c.size


@dataclass
class SolveResult:
    status: str
    x: Optional[np.ndarray] = None
    objective: float = float("nan")
    kkt_residual: float = float("inf")
    ineq_dual: Optional[np.ndarray] = None
    eq_dual: Optional[np.ndarray] = None
    iterations: int = 0
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL


def _pivot(T, row, col):
    T[row] /= T[row, col]
    piv = T[row]
    col_vals = T[:, col].copy()
    col_vals[row] = 0.0
    T -= np.outer(col_vals, piv)


def _run_simplex(T, basis, allowed, tol, max_iter, it0=0):
    """Minimise the objective held in the last tableau row.

    Returns ``(status, iterations)``.
    """
    m = T.shape[0] - 1
    bland_after = it0 + 20 * (T.shape[1] + m)
    it = it0
    while it < max_iter:
        red = T[-1, :-1]
        candidates = np.flatnonzero((red < -tol) & allowed)
        if candidates.size == 0:
            return OPTIMAL, it
        col = candidates[np.argmin(red[candidates])] if it < bland_after else candidates[0]
        colv = T[:m, col]
        pos = colv > tol
        if not np.any(pos):
            return UNBOUNDED, it
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(T[:m, -1][pos], 0.0) / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-13 * max(1.0, abs(best)))
        row = ties[np.argmin(basis[ties])]
        _pivot(T, row, col)
        basis[row] = col
        it += 1
    return MAX_ITERATIONS, it


def _standard_form(lp):
    """Rows ``M z = r`` with ``z = [x+, x-, slack] >= 0`` and ``r >= 0``."""
    n = lp.n
    mi, me = lp.A_ineq.shape[0], lp.A_eq.shape[0]
    M = np.zeros((mi + me, 2 * n + mi))
    M[:mi, :n] = lp.A_ineq
    M[:mi, n:2 * n] = -lp.A_ineq
    M[:mi, 2 * n:] = np.eye(mi)
    M[mi:, :n] = lp.A_eq
    M[mi:, n:2 * n] = -lp.A_eq
    r = np.concatenate([lp.b_ineq, lp.b_eq])
    sign = np.where(r < 0, -1.0, 1.0)
    return M * sign[:, None], r * sign, sign


def solve_lp(lp: LinearProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SolveResult:
    """Solve ``lp`` to optimality or report why not (never raises on bad data)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    n = lp.n
    mi, me = lp.A_ineq.shape[0], lp.A_eq.shape[0]
    M, r, sign = _standard_form(lp)
    rows, cols = M.shape
    scale = 1.0 + max(np.abs(M).max(initial=0.0), np.abs(r).max(initial=0.0), np.abs(lp.c).max(initial=0.0))
    ptol = tol * 1e-3

    # phase one: artificials on every row
    T = np.zeros((rows + 1, cols + rows + 1))
    T[:rows, :cols] = M
    T[:rows, cols:cols + rows] = np.eye(rows)
    T[:rows, -1] = r
    T[-1, :cols] = -M.sum(axis=0)
    T[-1, -1] = -r.sum()
    basis = np.arange(cols, cols + rows)
    allowed = np.ones(cols + rows, dtype=bool)
    status, it = _run_simplex(T, basis, allowed, ptol, max_iter)
    if status == MAX_ITERATIONS:
        return SolveResult(MAX_ITERATIONS, iterations=it)
    if -T[-1, -1] > tol * scale:
        return SolveResult(INFEASIBLE, iterations=it)

    # drive remaining artificials out; rows that cannot pivot are redundant
    keep = np.ones(rows, dtype=bool)
    for i in range(rows):
        if basis[i] >= cols:
            cand = np.flatnonzero(np.abs(T[i, :cols]) > 1e-9)
            if cand.size:
                _pivot(T, i, cand[0])
                basis[i] = cand[0]
            else:
                keep[i] = False
    T = np.vstack([T[:rows][keep], T[-1:]])
    basis = basis[keep]

    # phase two: minimise -c'x
    d = np.concatenate([-lp.c, lp.c, np.zeros(mi)])
    T[-1, :] = 0.0
    T[-1, :cols] = d
    for i, j in enumerate(basis):
        T[-1] -= d[j] * T[i]
    allowed = np.zeros(cols + rows, dtype=bool)
    allowed[:cols] = True
    status, it = _run_simplex(T, basis, allowed, ptol, max_iter, it)
    if status != OPTIMAL:
        return SolveResult(status, iterations=it)

    # re-solve the final basis on the original data
    Mk, rk = M[keep], r[keep]
    B = Mk[:, basis]
    z = np.zeros(cols)
    z[basis] = np.linalg.solve(B, rk)
    y_min = np.linalg.solve(B.T, d[basis])
    y_full = np.zeros(rows)
    y_full[keep] = -y_min * sign[keep]
    x = z[:n] - z[n:2 * n]
    lam = y_full[:mi]
    nu = y_full[mi:]
    res = _lp_kkt(lp, x, lam, nu) / scale
    return SolveResult(
        OPTIMAL,
        x=x,
        objective=float(lp.c @ x),
        kkt_residual=res,
        ineq_dual=lam,
        eq_dual=nu,
        iterations=it,
        info={"dual_objective": float(lp.b_ineq @ lam + lp.b_eq @ nu)},
    )


def _lp_kkt(lp, x, lam, nu):
    parts = [0.0]
    if lp.A_ineq.shape[0]:
        slack = lp.b_ineq - lp.A_ineq @ x
        parts += [np.max(-slack, initial=0.0), np.max(-lam, initial=0.0), np.max(np.abs(lam * slack))]
    if lp.A_eq.shape[0]:
        parts.append(np.max(np.abs(lp.A_eq @ x - lp.b_eq)))
    stat = lp.A_ineq.T @ lam + lp.A_eq.T @ nu - lp.c
    parts.append(np.max(np.abs(stat), initial=0.0))
    gap = lp.c @ x - (lp.b_ineq @ lam + lp.b_eq @ nu)
    parts.append(abs(gap))
    return float(max(parts))
