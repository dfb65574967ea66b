"""Dense LP/QP solvers and the warm-started active-set LP kernels."""

from .lp import (
    DEFAULT_TOL,
    INFEASIBLE,
    MAX_ITERATIONS,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    SolveResult,
    solve_lp,
)
from .qp import QuadraticProgram, qp_kkt_residual, solve_qp

__all__ = [
    "DEFAULT_TOL",
    "INFEASIBLE",
    "MAX_ITERATIONS",
    "OPTIMAL",
    "UNBOUNDED",
    "LinearProgram",
    "QuadraticProgram",
    "SolveResult",
    "qp_kkt_residual",
    "solve_lp",
    "solve_qp",
]
