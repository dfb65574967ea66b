"""H-polytopes ``{h : A h <= b}``: support function, membership, Chebyshev centre."""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EmptySetError, UnboundedError
from .solver import INFEASIBLE, UNBOUNDED, LinearProgram, solve_lp

VERTEX_MAX_DIM = 6
VERTEX_MAX_FACETS = 40


@dataclass(frozen=True)
class Polytope:
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b must have the same number of rows")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @classmethod
    def box(cls, lower, upper) -> "Polytope":
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        n = lower.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([upper, -lower]))

    def intersect(self, A, b) -> "Polytope":
        return Polytope(np.vstack([self.A, A]), np.concatenate([self.b, b]))


def _lp_max(poly: Polytope, direction):
    res = solve_lp(LinearProgram(np.asarray(direction, dtype=float), poly.A, poly.b))
    if res.status == INFEASIBLE:
        raise EmptySetError("polytope is empty")
    if res.status == UNBOUNDED:
        raise UnboundedError("polytope is unbounded in the requested direction")
    if not res.ok:
        raise EmptySetError(f"LP failed with status {res.status}")
    return res


def support(poly: Polytope, direction) -> float:
    """``max d'h`` over the polytope."""
    return _lp_max(poly, direction).objective


def support_point(poly: Polytope, direction):
    """A maximiser of ``d'h`` together with the optimal value."""
    res = _lp_max(poly, direction)
    return res.x, res.objective


def contains(poly: Polytope, h, tol: float = 1e-9) -> bool:
    return bool(np.all(poly.A @ np.asarray(h, dtype=float) <= poly.b + tol))


def chebyshev_center(poly: Polytope):
    """Centre and radius of the largest inscribed Euclidean ball.

    Solves ``max r`` s.t. ``A h + r ||A_i|| <= b``, ``r >= 0``.
    """
    norms = np.linalg.norm(poly.A, axis=1)
    n = poly.dim
    A = np.vstack([np.column_stack([poly.A, norms]), np.eye(1, n + 1, n) * -1.0])
    b = np.concatenate([poly.b, [0.0]])
    c = np.zeros(n + 1)
    c[-1] = 1.0
    res = solve_lp(LinearProgram(c, A, b))
    if res.status == INFEASIBLE:
        raise EmptySetError("polytope is empty")
    if res.status == UNBOUNDED:
        raise UnboundedError("polytope is unbounded")
    if not res.ok:
        raise EmptySetError(f"Chebyshev LP failed with status {res.status}")
    return res.x[:n], max(float(res.x[n]), 0.0)


def enumerate_vertices(poly: Polytope, tol: float = 1e-9):
    """Brute-force vertex list: every ``dim``-subset of facets, solved and filtered.

    Meant as a test oracle; refuses problems where the combinatorics explode.
    """
    n = poly.dim
    rows = poly.A.shape[0]
    if n > VERTEX_MAX_DIM or rows > VERTEX_MAX_FACETS:
        raise ValueError(
            f"vertex enumeration limited to dim <= {VERTEX_MAX_DIM} and <= {VERTEX_MAX_FACETS} facets"
        )
    vertices = []
    for idx in itertools.combinations(range(rows), n):
        sub = poly.A[list(idx)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, poly.b[list(idx)])
        if np.all(poly.A @ v <= poly.b + tol * (1.0 + np.abs(poly.b))):
            if not any(np.allclose(v, w, atol=1e-10) for w in vertices):
                vertices.append(v)
    return vertices
