"""Online set-membership identification of the FIR coefficient set.

The feasible system set is kept at fixed complexity: a facet matrix ``A_h``
chosen once, and offsets ``b_h(t)`` recomputed each step as the support of
``H(t-1)`` intersected with the non-falsified set of the latest window.
"""

import csv
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm, qmc

from .core_model import SystemBounds
from .errors import AssumptionViolation, ConfigurationError, SolverError
from .polytope import Polytope
from .solver import kernels

FEAS_TOL = 1e-9
MAX_PIVOTS = 10_000


def coordinate_rows(A_h: np.ndarray, tol: float = 1e-12):
    """Indices of the ``+e_k`` and ``-e_k`` rows of ``A_h`` (up to positive scaling).

    Raises ConfigurationError if some coordinate facet is missing.
    """
    m = A_h.shape[1]
    plus = np.full(m, -1, dtype=np.int64)
    minus = np.full(m, -1, dtype=np.int64)
    single = np.flatnonzero((np.abs(A_h) > tol).sum(axis=1) == 1)
    for i in single[::-1]:  # reversed so the first matching row wins
        k = int(np.argmax(np.abs(A_h[i])))
        if A_h[i, k] > 0:
            plus[k] = i
        else:
            minus[k] = i
    if np.any(plus < 0) or np.any(minus < 0):
        raise ConfigurationError("A_h must contain the +e_k and -e_k facets for every coordinate")
    return plus, minus


def default_facets(m: int, p: int, seed: int = 0, kind: str = "random") -> np.ndarray:
    """Facet matrix with the ``2m`` coordinate rows first.

    ``kind="random"`` fills the remaining ``p - 2m`` rows with unit directions
    from a scrambled Halton sequence pushed through the Gaussian quantile
    function.  ``kind="pairwise"`` uses the ``m(m-1)`` rows ``e_i - e_j``
    (normalised), which requires ``p == m(m+1)``.
    """
    if p < 2 * m:
        raise ConfigurationError(f"p={p} is smaller than the 2m={2 * m} coordinate facets")
    coord = np.vstack([np.eye(m), -np.eye(m)])
    extra = p - 2 * m
    if kind == "pairwise":
        if extra != m * (m - 1):
            raise ConfigurationError("pairwise facets need p == m(m+1)")
        rows = []
        for i in range(m):
            for j in range(m):
                if i != j:
                    r = np.zeros(m)
                    r[i], r[j] = 1.0, -1.0
                    rows.append(r / np.sqrt(2.0))
        return np.vstack([coord] + rows)
    if kind != "random":
        raise ConfigurationError(f"unknown facet kind {kind!r}")
    if extra == 0:
        return coord
    pts = qmc.Halton(d=m, scramble=True, seed=seed).random(extra)
    dirs = norm.ppf(np.clip(pts, 1e-12, 1 - 1e-12))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return np.vstack([coord, dirs])


@dataclass(frozen=True)
class FeasibleSet:
    """``H(t) = {h : A_h h <= b_h}``; ``A_h`` never changes, ``b_h`` shrinks."""

    A_h: np.ndarray
    b_h: np.ndarray
    coord: Optional[tuple] = field(default=None, compare=False, repr=False)

    def coordinate_index(self):
        """Cached :func:`coordinate_rows` of ``A_h``."""
        if self.coord is None:
            object.__setattr__(self, "coord", coordinate_rows(self.A_h))
        return self.coord

    def with_offsets(self, b_h) -> "FeasibleSet":
        return FeasibleSet(self.A_h, b_h, self.coord)

    @property
    def p(self) -> int:
        return self.A_h.shape[0]

    @property
    def m(self) -> int:
        return self.A_h.shape[1]

    def polytope(self) -> Polytope:
        return Polytope(self.A_h, self.b_h)

    def contains(self, h, tol: float = 1e-7) -> bool:
        return bool(np.all(self.A_h @ np.asarray(h, dtype=float) <= self.b_h + tol))

    def coordinate_supports(self):
        """``(upper, lower)`` bounds of every coefficient; tight because each
        offset is an exact support value."""
        plus, minus = self.coordinate_index()
        scale_p = self.A_h[plus, np.arange(self.m)]
        scale_m = -self.A_h[minus, np.arange(self.m)]
        return self.b_h[plus] / scale_p, -self.b_h[minus] / scale_m

    def to_csv(self, path) -> None:
        """One row per facet: the facet normal followed by its offset."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"a{k + 1}" for k in range(self.m)] + ["b"])
            for row, off in zip(self.A_h, self.b_h):
                w.writerow([repr(float(v)) for v in row] + [repr(float(off))])

    @classmethod
    def from_csv(cls, path) -> "FeasibleSet":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1])


class MeasurementWindow:
    """The last ``s`` (regressor, measurement) pairs, regressors newest-lag-first."""

    def __init__(self, s: int, m: int):
        if s < 1:
            raise ConfigurationError("window length s must be positive")
        self.s = s
        self.m = m
        self._items = deque(maxlen=s)
        self._count = 0

    def push(self, phi, y_meas: float) -> None:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (self.m,):
            raise ValueError(f"regressor must have length {self.m}")
        self._items.append((self._count, phi, float(y_meas)))
        self._count += 1

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        for _, phi, y in self._items:
            yield phi, y

    def tagged(self):
        """``(sequence_number, phi, y)`` triples, oldest first."""
        return list(self._items)

    def copy(self) -> "MeasurementWindow":
        w = MeasurementWindow(self.s, self.m)
        w._items = deque(self._items, maxlen=self.s)
        w._count = self._count
        return w


def fir_box(bounds: SystemBounds, m: int):
    return bounds.envelope(m)


def initial_fss(bounds: SystemBounds, m: int, A_h: np.ndarray) -> FeasibleSet:
    """Offsets that make every facet touch the prior coefficient box."""
    A_h = np.asarray(A_h, dtype=float)
    if A_h.shape[1] != m:
        raise ConfigurationError("A_h must have m columns")
    coord = coordinate_rows(A_h)
    lo, hi = fir_box(bounds, m)
    b = np.maximum(A_h * hi, A_h * lo).sum(axis=1)
    return FeasibleSet(A_h, b, coord)


def nonfalsified_set(window: MeasurementWindow, eta_m: float, eps: float):
    """Two half-spaces per measurement: ``|y - phi'h| <= eta_m + eps``."""
    if len(window) == 0:
        raise ValueError("window is empty")
    rows, rhs = [], []
    for phi, y in window:
        rows += [phi, -phi]
        rhs += [y + eta_m + eps, -y + eta_m + eps]
    return np.vstack(rows), np.array(rhs)


def _normalised_rows(A, b):
    """Drop vacuous zero rows and scale the rest to unit norm."""
    nrm = np.linalg.norm(A, axis=1)
    keep = nrm > 1e-14
    if np.any(~keep & (b < -FEAS_TOL)):
        raise AssumptionViolation("a zero regressor row is violated: measurement exceeds noise bound")
    return A[keep] / nrm[keep, None], b[keep] / nrm[keep], keep


def _solve_supports(A_all, b_all, fss, bases, tol=FEAS_TOL):
    plus, minus = fss.coordinate_index()
    status, values, argmax, _ = kernels.batch_support(
        A_all, b_all, fss.A_h, bases, plus, minus, tol, MAX_PIVOTS
    )
    if status == kernels.INFEASIBLE:
        raise AssumptionViolation("feasible system set became empty")
    if status != kernels.OPTIMAL:
        raise SolverError(f"support LP failed (status {status})")
    return values, argmax


def update_fss(fss: FeasibleSet, delta, tol: float = FEAS_TOL) -> FeasibleSet:
    """Recompute every offset as a support of ``H(t-1)`` intersected with ``delta``."""
    A_d, b_d = delta
    A_n, b_n, _ = _normalised_rows(np.atleast_2d(A_d), np.asarray(b_d, dtype=float))
    A_all = np.vstack([fss.A_h, A_n])
    b_all = np.concatenate([fss.b_h, b_n])
    bases = np.full((fss.p, fss.m), -1, dtype=np.int64)
    values, _ = _solve_supports(A_all, b_all, fss, bases, tol)
    return fss.with_offsets(np.minimum(values, fss.b_h))


class FssTracker:
    """Stateful identifier: sliding window plus warm-started offset updates.

    Produces the same offsets as repeated :func:`update_fss` calls but keeps,
    per facet, the last maximiser and simplex basis.  A facet whose maximiser
    survives the new half-spaces keeps its offset unchanged; the rest resume
    the dual simplex from their previous basis.
    """

    def __init__(self, fss: FeasibleSet, s: int, eta_m: float, eps: float, tol: float = FEAS_TOL):
        self.fss = fss
        self.window = MeasurementWindow(s, fss.m)
        self.eta_m = eta_m
        self.eps = eps
        self.tol = tol
        self._plus, self._minus = fss.coordinate_index()
        self._bases: Optional[np.ndarray] = None  # global row ids
        self._argmax: Optional[np.ndarray] = None
        self.resolved = 0

    def copy(self) -> "FssTracker":
        other = FssTracker.__new__(FssTracker)
        other.__dict__.update(self.__dict__)
        other.window = self.window.copy()
        if self._bases is not None:
            other._bases = self._bases.copy()
            other._argmax = self._argmax.copy()
        return other

    def _delta_rows(self):
        rows, rhs, ids = [], [], []
        margin = self.eta_m + self.eps
        p = self.fss.p
        for seq, phi, y in self.window.tagged():
            nrm = np.linalg.norm(phi)
            if nrm <= 1e-14:
                if abs(y) > margin + FEAS_TOL:
                    raise AssumptionViolation("measurement exceeds noise bound under zero input")
                continue
            rows += [phi / nrm, -phi / nrm]
            rhs += [(y + margin) / nrm, (-y + margin) / nrm]
            ids += [p + 2 * seq, p + 2 * seq + 1]
        m = self.fss.m
        return (
            np.array(rows).reshape(-1, m),
            np.array(rhs),
            np.array(ids, dtype=np.int64),
        )

    def update(self, phi, y_meas: float) -> FeasibleSet:
        self.window.push(phi, y_meas)
        fss = self.fss
        p = fss.p
        A_d, b_d, ids = self._delta_rows()
        if A_d.shape[0] == 0:
            return fss
        A_all = np.vstack([fss.A_h, A_d])
        b_all = np.concatenate([fss.b_h, b_d])
        global_ids = np.concatenate([np.arange(p), ids])
        if self._argmax is None:
            todo = np.arange(p)
            local = np.full((p, fss.m), -1, dtype=np.int64)
        else:
            viol = (A_all @ self._argmax.T - b_all[:, None]).max(axis=0)
            todo = np.flatnonzero(viol > self.tol)
            pos = {g: i for i, g in enumerate(global_ids)}
            local = np.full((todo.size, fss.m), -1, dtype=np.int64)
            for r, i in enumerate(todo):
                mapped = [pos.get(g, -1) for g in self._bases[i]]
                if min(mapped) >= 0:
                    local[r] = mapped
        if todo.size == 0:
            return fss
        plus, minus = self._plus, self._minus
        status, values, argmax, _ = kernels.batch_support(
            A_all, b_all, fss.A_h[todo], local, plus, minus, self.tol, MAX_PIVOTS
        )
        if status == kernels.INFEASIBLE:
            raise AssumptionViolation("feasible system set became empty")
        if status != kernels.OPTIMAL:
            raise SolverError(f"support LP failed (status {status})")
        if self._argmax is None:
            self._argmax = np.zeros((p, fss.m))
            self._bases = np.zeros((p, fss.m), dtype=np.int64)
        self._argmax[todo] = argmax
        self._bases[todo] = global_ids[local]
        b_new = fss.b_h.copy()
        b_new[todo] = np.minimum(values, fss.b_h[todo])
        self.resolved += todo.size
        self.fss = fss.with_offsets(b_new)
        return self.fss
