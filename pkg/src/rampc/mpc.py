"""Robust adaptive MPC for FIR models.

Both controllers enforce the output constraints for every model in the
feasible system set. RAMPC minimises the worst-case tracking cost over the
set; AMPC minimises the nominal tracking cost of the set's Chebyshev centre.

Index convention: at time ``t`` the prediction index ``k = 0 .. N+m-2``
stands for the regressor ``phi(t+k|t) = [q(t+k), ..., q(t+k-m+1)]`` whose
inner product with ``h`` is the output one step later, ``y(t+k+1)``.  The
first ``N`` indices carry the tracking cost against ``y_des[0..N-1]`` (the
references for ``y(t+1) .. y(t+N)``); all ``N+m-1`` indices carry the robust
output constraint, the last one being the steady state under the held input.

Two equivalent routes to the optimum exist:

* :func:`assemble_rampc` / :func:`assemble_ampc` build the dense QP in which
  every inner maximisation is replaced by its LP dual (one multiplier vector
  per robust row).  This is exact but has ``p`` extra variables per row.
* :func:`solve_rampc` / :func:`solve_ampc` solve the same semi-infinite
  problem by constraint generation in ``(U, c)`` only: the maximisers of the
  violated inner LPs are added as cuts until none is violated.  The dual
  multipliers can be recovered afterwards from the inner LPs
  (:func:`recover_duals`).  This is the path used in closed loop.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core_model import SystemBounds, truncation_error
from .errors import ConfigurationError, FeasibilityLoss, InternalError, SolverError
from .set_membership import FeasibleSet, FssTracker, default_facets, initial_fss
from .solver import INFEASIBLE, OPTIMAL, QuadraticProgram, solve_qp
from .solver import kernels

VARIANTS = ("rampc", "ampc")
AUDIT_TOL = 1e-9
_LP_TOL = 1e-10
_LP_MAX_PIVOTS = 10_000
S_FLOOR = 0.1  # initial slack floor of the relaxation interior point solves


@dataclass(frozen=True)
class MpcConfig:
    N: int = 15
    m: int = 12
    input_weight: float = 0.0
    rate_weight: float = 0.0
    tol: float = 1e-8
    gap_tol: float = 1e-8
    max_cut_rounds: int = 200

    def __post_init__(self):
        if self.N < 1 or self.m < 1:
            raise ConfigurationError("N and m must be positive")
        if self.tol <= 0 or self.gap_tol < 0:
            raise ConfigurationError("solver tolerances must be positive")
        if self.input_weight < 0 or self.rate_weight < 0:
            raise ConfigurationError("penalty weights must be nonnegative")


@dataclass(frozen=True)
class RegressorPlan:
    """Affine maps ``phi_k(U) = const[k] + lin[k] @ U`` for ``k = 0 .. N+m-2``."""

    const: np.ndarray  # (K, m)
    lin: np.ndarray  # (K, m, N)

    @property
    def K(self) -> int:
        return self.const.shape[0]

    @property
    def N(self) -> int:
        return self.lin.shape[2]

    def evaluate(self, U) -> np.ndarray:
        return self.const + self.lin @ np.asarray(U, dtype=float)


def build_regressor_plan(past_inputs, N: int, m: int) -> RegressorPlan:
    """``past_inputs[0]`` is the last applied input ``u(t-1)``; missing entries are zero."""
    past = np.zeros(max(m - 1, 0))
    given = np.asarray(past_inputs, dtype=float)[: m - 1]
    past[: given.size] = given
    K = N + m - 1
    const = np.zeros((K, m))
    lin = np.zeros((K, m, N))
    for k in range(K):
        for lag in range(m):
            j = k - lag
            if j < 0:
                const[k, lag] = past[-j - 1]
            else:
                lin[k, lag, min(j, N - 1)] = 1.0
    return RegressorPlan(const, lin)


@dataclass
class MpcProblem:
    """Everything the optimiser needs at one time step."""

    fss: FeasibleSet
    plan: RegressorPlan
    y_des: np.ndarray
    u_prev: float
    bounds: SystemBounds
    eta_m: float
    cfg: MpcConfig

    def __post_init__(self):
        self.y_des = np.asarray(self.y_des, dtype=float)
        if self.y_des.shape != (self.cfg.N,):
            raise ConfigurationError(f"y_des must hold N={self.cfg.N} values")

    @property
    def N(self):
        return self.cfg.N

    @property
    def output_rhs(self) -> float:
        return self.bounds.y_max - self.eta_m


def make_problem(past_inputs, fss, y_des, bounds, cfg, eta_m=None) -> MpcProblem:
    if eta_m is None:
        eta_m = truncation_error(bounds, cfg.m)
    past = np.asarray(past_inputs, dtype=float)
    u_prev = float(past[0]) if past.size else 0.0
    plan = build_regressor_plan(past, cfg.N, cfg.m)
    return MpcProblem(fss, plan, y_des, u_prev, bounds, eta_m, cfg)


# --------------------------------------------------------------------------
# input constraints and penalties (shared by both variants and both routes)


def _input_block(problem):
    """``G U <= h`` for magnitude and rate limits; rate at k=0 uses ``u_prev``."""
    N = problem.N
    I = np.eye(N)
    D = I - np.eye(N, k=-1)
    e0 = np.zeros(N)
    e0[0] = problem.u_prev
    ub, dub = problem.bounds.u_max, problem.bounds.du_max
    G = np.vstack([I, -I, D, -D])
    h = np.concatenate([np.full(N, ub), np.full(N, ub), dub + e0, dub - e0])
    return G, h


def _penalty(problem):
    """``(P, q, offset)`` of the optional input and input-rate penalties in U."""
    N = problem.N
    cfg = problem.cfg
    D = np.eye(N) - np.eye(N, k=-1)
    e0 = np.zeros(N)
    e0[0] = problem.u_prev
    P = 2.0 * (cfg.input_weight * np.eye(N) + cfg.rate_weight * D.T @ D)
    q = -2.0 * cfg.rate_weight * D.T @ e0
    offset = cfg.rate_weight * problem.u_prev**2
    return P, q, offset


def _nominal_objective(problem, center):
    """``(P, q, offset)`` of ``sum_k (y_des_k - phi_k(U)' h_c)^2``."""
    N = problem.N
    plan = problem.plan
    g = np.einsum("kmn,m->kn", plan.lin[:N], center)
    a = problem.y_des - plan.const[:N] @ center
    return 2.0 * g.T @ g, -2.0 * g.T @ a, float(a @ a)


# --------------------------------------------------------------------------
# dense dualised assembly


@dataclass(frozen=True)
class DualizedConstraint:
    """``b_h' theta - r_lin' z <= r_const``, ``A_h' theta - phi_lin z = phi_const``, ``theta >= 0``.

    Equivalent to ``max_{A_h h <= b_h} (phi_const + phi_lin z)' h <= r_const + r_lin' z``.
    """

    ineq_z: np.ndarray
    ineq_theta: np.ndarray
    ineq_b: float
    eq_z: np.ndarray
    eq_theta: np.ndarray
    eq_b: np.ndarray


def dualize_max_constraint(fss: FeasibleSet, phi_const, phi_lin, r_const, r_lin) -> DualizedConstraint:
    phi_const = np.asarray(phi_const, dtype=float)
    phi_lin = np.atleast_2d(np.asarray(phi_lin, dtype=float))
    return DualizedConstraint(
        ineq_z=-np.asarray(r_lin, dtype=float),
        ineq_theta=fss.b_h.copy(),
        ineq_b=float(r_const),
        eq_z=-phi_lin,
        eq_theta=fss.A_h.T.copy(),
        eq_b=phi_const,
    )


@dataclass
class DenseAssembly:
    qp: QuadraticProgram
    n_u: int
    has_c: bool
    rows: list  # (kind, k, sign) per dual block, in theta order
    p: int
    offset: float = 0.0

    @property
    def n_theta(self):
        return len(self.rows) * self.p

    def theta(self, x, j):
        start = self.n_u * (2 if self.has_c else 1) + j * self.p
        return x[start:start + self.p]


def _robust_rows(problem, with_cost):
    """``(kind, k, sign, phi_const, phi_lin, r_const, r_lin)`` in the ``(U, c)`` space."""
    N, K = problem.N, problem.plan.K
    nz = 2 * N if with_cost else N
    out = []
    if with_cost:
        for k in range(N):
            for sign in (1.0, -1.0):
                phi_c = sign * problem.plan.const[k]
                phi_l = np.zeros((problem.cfg.m, nz))
                phi_l[:, :N] = sign * problem.plan.lin[k]
                r_lin = np.zeros(nz)
                r_lin[N + k] = 1.0
                out.append(("cost", k, sign, phi_c, phi_l, sign * problem.y_des[k], r_lin))
    for k in range(K):
        for sign in (1.0, -1.0):
            phi_l = np.zeros((problem.cfg.m, nz))
            phi_l[:, :N] = sign * problem.plan.lin[k]
            out.append(("output", k, sign, sign * problem.plan.const[k], phi_l, problem.output_rhs, np.zeros(nz)))
    return out


def _assemble(problem, with_cost, P_z, q_z, offset):
    N = problem.N
    nz = 2 * N if with_cost else N
    p = problem.fss.p
    rows = _robust_rows(problem, with_cost)
    R = len(rows)
    n = nz + R * p
    G_u, h_u = _input_block(problem)
    A_in = [np.hstack([G_u, np.zeros((G_u.shape[0], n - N))])]
    b_in = [h_u]
    A_eq, b_eq = [], []
    meta = []
    for j, (kind, k, sign, phi_c, phi_l, r_c, r_l) in enumerate(rows):
        blk = dualize_max_constraint(problem.fss, phi_c, phi_l, r_c, r_l)
        sl = slice(nz + j * p, nz + (j + 1) * p)
        row = np.zeros(n)
        row[:nz] = blk.ineq_z
        row[sl] = blk.ineq_theta
        A_in.append(row[None, :])
        b_in.append([blk.ineq_b])
        eq = np.zeros((problem.cfg.m, n))
        eq[:, :nz] = blk.eq_z
        eq[:, sl] = blk.eq_theta
        A_eq.append(eq)
        b_eq.append(blk.eq_b)
        nonneg = np.zeros((p, n))
        nonneg[:, sl] = -np.eye(p)
        A_in.append(nonneg)
        b_in.append(np.zeros(p))
        meta.append((kind, k, sign))
    P = np.zeros((n, n))
    q = np.zeros(n)
    P[:nz, :nz] = P_z
    q[:nz] = q_z
    qp = QuadraticProgram(P, q, np.vstack(A_in), np.concatenate(b_in), np.vstack(A_eq), np.concatenate(b_eq))
    return DenseAssembly(qp, N, with_cost, meta, p, offset)


def assemble_rampc(problem: MpcProblem) -> DenseAssembly:
    """Dense QP in ``(U, c, theta_1, ..., theta_R)`` minimising ``sum c_j^2``."""
    N = problem.N
    P_u, q_u, off = _penalty(problem)
    P = np.zeros((2 * N, 2 * N))
    P[:N, :N] = P_u
    P[N:, N:] = 2.0 * np.eye(N)
    q = np.concatenate([q_u, np.zeros(N)])
    return _assemble(problem, True, P, q, off)


def assemble_ampc(problem: MpcProblem, center=None) -> DenseAssembly:
    """Dense QP in ``(U, theta_1, ..., theta_R)`` with the Chebyshev-centre cost."""
    if center is None:
        center, _ = chebyshev_center_fss(problem.fss)
    P_u, q_u, off = _penalty(problem)
    P_n, q_n, off_n = _nominal_objective(problem, center)
    return _assemble(problem, False, P_u + P_n, q_u + q_n, off + off_n)


# --------------------------------------------------------------------------
# inner LPs


def _supports(fss, C, bases, binvs=None, trust=False):
    plus, minus = fss.coordinate_index()
    C = np.ascontiguousarray(C)
    if binvs is None:
        status, values, argmax, duals = kernels.batch_support(
            fss.A_h, fss.b_h, C, bases, plus, minus, _LP_TOL, _LP_MAX_PIVOTS
        )
    else:
        status, values, argmax, duals = kernels.batch_support_cached(
            fss.A_h, fss.b_h, C, bases, binvs, trust, plus, minus, _LP_TOL, _LP_MAX_PIVOTS
        )
    if status != kernels.OPTIMAL:
        raise SolverError(f"support LP failed (status {status})")
    return values, argmax, duals


def worst_case_outputs(problem: MpcProblem, U):
    """``(max_h phi_k'h, max_h -phi_k'h)`` over the FSS for every prediction index."""
    Phi = problem.plan.evaluate(U)
    K = problem.plan.K
    bases = np.full((2 * K, problem.cfg.m), -1, dtype=np.int64)
    vals, _, _ = _supports(problem.fss, np.vstack([Phi, -Phi]), bases)
    return vals[:K], vals[K:]


def worst_case_cost(problem: MpcProblem, U):
    """Worst-case tracking cost of a fixed input sequence, and the per-step bounds."""
    U = np.asarray(U, dtype=float)
    s_plus, s_minus = worst_case_outputs(problem, U)
    N = problem.N
    c = np.maximum(s_plus[:N] - problem.y_des, problem.y_des + s_minus[:N])
    P_u, q_u, off = _penalty(problem)
    pen = 0.5 * U @ P_u @ U + q_u @ U + off
    return float(c @ c + pen), c


def chebyshev_center_fss(fss: FeasibleSet, basis=None):
    """Chebyshev centre of the FSS via a warm-startable dual simplex.

    The rows ``(e_1, 1)``, ``(-e_1, 1)``, ``(e_k, 1)`` for ``k > 1`` (scaled)
    form a dual feasible starting basis for ``max r``, so no phase one is needed.
    Returns ``(center, radius, basis)`` when ``basis`` is passed, else ``(center, radius)``.
    """
    m = fss.m
    norms = np.linalg.norm(fss.A_h, axis=1)
    A = np.zeros((fss.p + 1, m + 1))
    A[: fss.p, :m] = fss.A_h
    A[: fss.p, m] = norms
    A[fss.p, m] = -1.0
    b = np.concatenate([fss.b_h, [0.0]])
    c = np.zeros(m + 1)
    c[m] = 1.0
    want_basis = basis is not None
    if basis is None or basis[0] < 0:
        plus, minus = fss.coordinate_index()
        basis = np.concatenate([[plus[0], minus[0]], plus[1:]]).astype(np.int64)
    status, x, _, _ = kernels.dual_simplex(A, b, c, basis, _LP_TOL, _LP_MAX_PIVOTS)
    if status != kernels.OPTIMAL:
        raise SolverError(f"Chebyshev LP failed (status {status})")
    if want_basis:
        return x[:m], max(float(x[m]), 0.0), basis
    return x[:m], max(float(x[m]), 0.0)


def recover_duals(problem: MpcProblem, U):
    """Dual multipliers certifying every robust row at ``U``.

    Returns a dict ``(kind, k, sign) -> (theta, support)`` with
    ``A_h' theta = sign * phi_k(U)``, ``theta >= 0``, ``b_h' theta = support``.
    """
    Phi = problem.plan.evaluate(U)
    K = problem.plan.K
    bases = np.full((2 * K, problem.cfg.m), -1, dtype=np.int64)
    vals, _, duals = _supports(problem.fss, np.vstack([Phi, -Phi]), bases)
    out = {}
    for k in range(K):
        for j, sign in enumerate((1.0, -1.0)):
            idx = k + j * K
            out[("output", k, sign)] = (duals[idx], vals[idx])
            if k < problem.N:
                out[("cost", k, sign)] = (duals[idx], vals[idx])
    return out


# --------------------------------------------------------------------------
# constraint generation


@dataclass
class MpcSolution:
    U: np.ndarray
    cost: float  # worst-case cost (RAMPC objective) of U
    c: np.ndarray  # per-step worst-case deviation bounds
    variant: str
    nominal_cost: float = float("nan")
    status: str = OPTIMAL
    diagnostics: dict = field(default_factory=dict)


@dataclass
class WarmStart:
    """Carry-over between consecutive steps (all optional)."""

    U: Optional[np.ndarray] = None
    bases: Optional[np.ndarray] = None
    cuts: list = field(default_factory=list)  # (k, sign, vertex)

    def shifted(self, K):
        U = None if self.U is None else np.concatenate([self.U[1:], self.U[-1:]])
        bases = None
        if self.bases is not None:
            bases = self.bases.copy()
            for half in (0, K):
                bases[half:half + K - 1] = self.bases[half + 1:half + K]
        cuts = [(max(k - 1, 0), s, v) for k, s, v in self.cuts]
        return WarmStart(U, bases, cuts)


class _Cuts:
    """Vertices of the FSS used as cuts, with their rows in ``(U, c)`` space.

    A vertex ``v`` for prediction index ``k`` and sign ``sign`` yields the
    output cut ``sign * phi_k(U)'v <= y_max - eta_m`` and, for ``k < N``, the
    cost cut ``sign * (phi_k(U)'v - y_des_k) <= c_k``.
    """

    def __init__(self, problem, with_cost):
        self.problem = problem
        self.with_cost = with_cost
        self.nz = 2 * problem.N if with_cost else problem.N
        self.keys = set()  # (k, sign, rounded vertex)
        self.items = []
        self._G = [np.zeros((0, self.nz))]
        self._h = [np.zeros(0)]
        self._owner = [np.zeros(0, dtype=np.int64)]  # index into items for every row

    def add_many(self, ks, signs, V) -> int:
        """Add the cuts that are not present yet; returns how many were new."""
        new = []
        for i, key in enumerate(zip(ks.tolist(), signs.tolist(), map(bytes, np.round(V, 10)))):
            if key not in self.keys:
                self.keys.add(key)
                new.append(i)
        if not new:
            return 0
        problem, N = self.problem, self.problem.N
        ks, signs, V = ks[new], signs[new], V[new]
        plan = problem.plan
        g = signs[:, None] * np.einsum("jmn,jm->jn", plan.lin[ks], V)
        h0 = signs * np.einsum("jm,jm->j", plan.const[ks], V)
        first = len(self.items)
        G = np.zeros((len(new), self.nz))
        G[:, :N] = g
        self._G.append(G)
        self._h.append(problem.output_rhs - h0)
        self._owner.append(first + np.arange(len(new)))
        if self.with_cost:
            cost = np.flatnonzero(ks < N)
            Gc = np.zeros((cost.size, self.nz))
            Gc[:, :N] = g[cost]
            Gc[np.arange(cost.size), N + ks[cost]] = -1.0
            self._G.append(Gc)
            self._h.append(signs[cost] * problem.y_des[ks[cost]] - h0[cost])
            self._owner.append(first + cost)
        self.items.extend(zip(ks.tolist(), signs.tolist(), V))
        return len(new)

    @property
    def n_rows(self) -> int:
        return sum(len(h) for h in self._h)

    def rows(self):
        if len(self._G) > 2:
            self._G = [np.vstack(self._G)]
            self._h = [np.concatenate(self._h)]
            self._owner = [np.concatenate(self._owner)]
        return (self._G[-1], self._h[-1]) if len(self._G) == 1 else (np.vstack(self._G), np.concatenate(self._h))

    def active(self, z, tol=1e-6):
        """Cuts with at least one row within ``tol`` of being tight at ``z``."""
        G, h = self.rows()
        owner = np.concatenate(self._owner)
        tight = np.zeros(len(self.items), dtype=bool)
        tight[owner[h - G @ z <= tol]] = True
        return [item for item, t in zip(self.items, tight) if t]


def _solve_relaxation(cuts, P, q, G_base, h_base, tol, x0=None):
    """Solve the cut-restricted QP; returns the primal solution."""
    G_c, h_c = cuts.rows()
    G = np.vstack([G_base, G_c])
    h = np.concatenate([h_base, h_c])
    if x0 is None:
        x0 = np.zeros(P.shape[0])
    status, x, _, _, _ = kernels.ipm_qp(P, q, G, h, tol, 200, x0, S_FLOOR)
    if status == kernels.OPTIMAL:
        return x
    # slow path: full solver with polishing and infeasibility detection
    qp = QuadraticProgram(P, q, G, h)
    res = solve_qp(qp, tol=tol, presolve=False)
    if res.status != OPTIMAL:
        res = solve_qp(qp, tol=tol, presolve=True)
    if res.status == INFEASIBLE:
        raise FeasibilityLoss("robust MPC problem is infeasible")
    if res.status != OPTIMAL:
        raise SolverError(f"QP relaxation failed (status {res.status}, residual {res.kkt_residual:.2e})")
    return res.x


def _solve_robust(problem: MpcProblem, variant: str, center=None, warm: Optional[WarmStart] = None):
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    t0 = time.perf_counter()
    cfg = problem.cfg
    N, K, m = cfg.N, problem.plan.K, cfg.m
    with_cost = variant == "rampc"
    nz = 2 * N if with_cost else N
    fss = problem.fss

    P_u, q_u, off = _penalty(problem)
    P = np.zeros((nz, nz))
    q = np.zeros(nz)
    P[:N, :N] = P_u
    q[:N] = q_u
    offset = off
    if with_cost:
        P[N:, N:] = 2.0 * np.eye(N)
    else:
        if center is None:
            center, _ = chebyshev_center_fss(fss)
        P_n, q_n, off_n = _nominal_objective(problem, center)
        P[:N, :N] += P_n
        q[:N] += q_n
        offset += off_n
    G_u, h_u = _input_block(problem)
    G_base = np.hstack([G_u, np.zeros((G_u.shape[0], nz - N))])

    warm = warm or WarmStart()
    bases = warm.bases.copy() if warm.bases is not None else np.full((2 * K, m), -1, dtype=np.int64)
    binvs = np.zeros((2 * K, m, m))
    U = warm.U.copy() if warm.U is not None else np.zeros(N)
    U = np.clip(U, -problem.bounds.u_max, problem.bounds.u_max)
    cuts = _Cuts(problem, with_cost)
    if warm.cuts:
        ks = np.array([c[0] for c in warm.cuts], dtype=np.int64)
        signs = np.array([c[1] for c in warm.cuts])
        V = np.array([c[2] for c in warm.cuts])
        keep = (ks < K) & np.all(fss.A_h @ V.T <= fss.b_h[:, None] + 1e-9, axis=0)
        cuts.add_many(ks[keep], signs[keep], V[keep])

    z = None
    gap = float("nan")
    rounds = 0
    max_viol = 0.0
    lp_time = 0.0
    while True:
        t_lp = time.perf_counter()
        Phi = problem.plan.evaluate(U)
        vals, argmax, _ = _supports(fss, np.vstack([Phi, -Phi]), bases, binvs, trust=z is not None)
        lp_time += time.perf_counter() - t_lp
        s_plus, s_minus = vals[:K], vals[K:]
        if z is None:
            viol = np.ones(2 * K)  # seed with every maximiser at the initial guess
        else:
            viol = vals - problem.output_rhs
            if with_cost:
                c = z[N:]
                viol[:N] = np.maximum(viol[:N], s_plus[:N] - problem.y_des - c)
                viol[K:K + N] = np.maximum(viol[K:K + N], s_minus[:N] + problem.y_des - c)
            max_viol = float(max(viol.max(), 0.0))
            if with_cost and (vals - problem.output_rhs).max() <= cfg.tol:
                # relaxation optimum is a lower bound, the exact worst case at U an upper one
                c_wc = np.maximum(s_plus[:N] - problem.y_des, problem.y_des + s_minus[:N])
                gap = float(c_wc @ c_wc - c @ c)
                if gap <= cfg.gap_tol:
                    break
        idx = np.flatnonzero(viol > cfg.tol)
        added = cuts.add_many(idx % K, np.where(idx < K, 1.0, -1.0), argmax[idx])
        if added == 0 and z is not None:
            break
        if rounds >= cfg.max_cut_rounds:
            raise SolverError(f"constraint generation did not converge in {rounds} rounds")
        z = _solve_relaxation(cuts, P, q, G_base, h_u, cfg.tol, z)
        U = z[:N]
        rounds += 1

    c_wc = np.maximum(s_plus[:N] - problem.y_des, problem.y_des + s_minus[:N])
    pen = 0.5 * U @ P_u @ U + q_u @ U + off
    wc_cost = float(c_wc @ c_wc + pen)
    nominal = float("nan")
    if not with_cost:
        nominal = float(0.5 * U @ P[:N, :N] @ U + q[:N] @ U + offset)
    # keep only cuts that are (nearly) tight at the optimum for the next step
    active = cuts.active(z, tol=1e-3)
    n_cut_rows = cuts.n_rows
    sol = MpcSolution(
        U=U.copy(),
        cost=wc_cost,
        c=c_wc,
        variant=variant,
        nominal_cost=nominal,
        diagnostics={
            "rounds": rounds,
            "cuts": len(cuts.items),
            "active_cuts": len(active),
            "max_violation": max_viol,
            "gap": gap,
            "qp_vars": nz,
            "qp_rows": G_base.shape[0] + n_cut_rows,
            "dense_vars": nz + (2 * N * with_cost + 2 * K) * fss.p,
            "lp_time": lp_time,
            "solve_time": time.perf_counter() - t0,
            "s_plus": s_plus,
            "s_minus": s_minus,
        },
    )
    sol.diagnostics["warm"] = WarmStart(U.copy(), bases, active)
    return sol


def solve_rampc(problem: MpcProblem, warm: Optional[WarmStart] = None) -> MpcSolution:
    """Minimise the worst-case tracking cost subject to robust constraints."""
    return _solve_robust(problem, "rampc", warm=warm)


def solve_ampc(problem: MpcProblem, center=None, warm: Optional[WarmStart] = None) -> MpcSolution:
    """Minimise the Chebyshev-centre tracking cost subject to robust constraints."""
    return _solve_robust(problem, "ampc", center=center, warm=warm)


def solve_dense(assembly: DenseAssembly, tol: float = 1e-8):
    """Solve a dense dualised assembly with the generic QP solver.

    Returns ``(U, objective_including_offset, SolveResult)``.
    """
    res = solve_qp(assembly.qp, tol=tol)
    if res.status == INFEASIBLE:
        raise FeasibilityLoss("dense robust QP is infeasible")
    if res.status != OPTIMAL:
        raise SolverError(f"dense QP failed ({res.status})")
    return res.x[: assembly.n_u], res.objective + assembly.offset, res


# --------------------------------------------------------------------------
# closed-loop controller


@dataclass
class StepResult:
    u: float
    solution: MpcSolution
    fss: FeasibleSet
    problem: MpcProblem
    timings: dict


class Controller:
    """Algorithm state for one closed loop: FSS tracker, input history, warm starts.

    ``step`` consumes the measurement ``y(t)`` and the next ``N`` references
    (for ``y(t+1) .. y(t+N)``) and returns the input ``u(t)`` to apply.
    """

    def __init__(
        self,
        bounds: SystemBounds,
        cfg: MpcConfig = MpcConfig(),
        variant: str = "rampc",
        p: int = 156,
        s: int = 36,
        A_h=None,
        eta_m: Optional[float] = None,
        facet_kind: str = "random",
        facet_seed: int = 0,
        warm_start: bool = True,
    ):
        if variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {variant!r}")
        self.bounds = bounds
        self.cfg = cfg
        self.variant = variant
        self.eta_m = truncation_error(bounds, cfg.m) if eta_m is None else float(eta_m)
        if A_h is None:
            A_h = default_facets(cfg.m, p, seed=facet_seed, kind=facet_kind)
        fss0 = initial_fss(bounds, cfg.m, A_h)
        self.tracker = FssTracker(fss0, s, self.eta_m, bounds.eps)
        self.inputs = np.zeros(cfg.m)  # newest first: u(t-1), u(t-2), ...
        self.t = 0
        self.warm_start = warm_start
        self._warm: Optional[WarmStart] = None
        self._cheb_basis = np.full(cfg.m + 1, -1, dtype=np.int64)

    @property
    def fss(self) -> FeasibleSet:
        return self.tracker.fss

    @property
    def u_prev(self) -> float:
        return float(self.inputs[0])

    def step(self, y_meas: float, y_des) -> StepResult:
        cfg = self.cfg
        self.t += 1
        t0 = time.perf_counter()
        fss = self.tracker.update(self.inputs.copy(), y_meas)
        t_id = time.perf_counter() - t0
        problem = MpcProblem(
            fss, build_regressor_plan(self.inputs, cfg.N, cfg.m), y_des, self.u_prev, self.bounds, self.eta_m, cfg
        )
        warm = self._warm.shifted(problem.plan.K) if (self.warm_start and self._warm) else None
        t1 = time.perf_counter()
        try:
            if self.variant == "rampc":
                sol = solve_rampc(problem, warm)
            else:
                center, _, self._cheb_basis = chebyshev_center_fss(fss, self._cheb_basis)
                sol = solve_ampc(problem, center, warm)
                sol.diagnostics["center"] = center
        except FeasibilityLoss as exc:
            raise FeasibilityLoss(str(exc), step=self.t) from exc
        t_mpc = time.perf_counter() - t1
        self._warm = sol.diagnostics.pop("warm")
        u = self._audit(sol.U[0])
        self.inputs = np.concatenate([[u], self.inputs[:-1]])
        return StepResult(u, sol, fss, problem, {"identification": t_id, "mpc": t_mpc, "total": time.perf_counter() - t0})

    def _audit(self, u):
        b = self.bounds
        lo = max(-b.u_max, self.u_prev - b.du_max)
        hi = min(b.u_max, self.u_prev + b.du_max)
        if u < lo - AUDIT_TOL or u > hi + AUDIT_TOL:
            raise InternalError(f"step {self.t}: optimiser returned u={u!r} outside [{lo}, {hi}]")
        return float(min(max(u, lo), hi))


def controller_step(controller: Controller, y_meas: float, y_des):
    """Functional form of :meth:`Controller.step`: ``(u, controller, result)``."""
    res = controller.step(y_meas, y_des)
    return res.u, controller, res
