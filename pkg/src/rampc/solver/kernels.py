"""Active-set simplex kernels for ``max c'x  s.t.  A x <= b`` with free ``x``.

The LPs solved in the closed loop are tiny (a dozen variables) but there
are a great many of them, and consecutive problems differ only slightly.
These kernels work directly on the inequality form: a basis is a set of
``n`` constraint rows whose matrix is nonsingular, its vertex is
``x = A_B^{-1} b_B`` and its multipliers are ``lam = A_B^{-T} c``.

* ``dual_simplex`` starts from a dual feasible basis (``lam >= 0``) and
  restores primal feasibility. It is the natural warm start after rows are
  added or right-hand sides tightened.
* ``primal_simplex`` starts from a feasible vertex and restores ``lam >= 0``.
  It is the natural warm start after the objective changes.

Both switch from Dantzig-style pricing to Bland's rule after a fixed number
of pivots so that degenerate polytopes cannot make them cycle.
"""

import numpy as np
from numba import njit

OPTIMAL = 0
INFEASIBLE = 1
UNBOUNDED = 2
MAX_ITER = 3
SINGULAR = 4

PIVOT_TOL = 1e-11


REFACTOR_EVERY = 32
HARRIS_TOL = 1e-11  # slack allowed in the ratio tests in exchange for larger pivots


@njit(cache=True)
def _basis_inverse(A, basis):
    """Inverse of the basis rows by Gauss-Jordan with partial pivoting.

    Returns ``(ok, Binv)``; ``ok`` is False for a numerically singular basis.
    """
    n = basis.shape[0]
    M = np.empty((n, 2 * n))
    for k in range(n):
        for j in range(n):
            M[k, j] = A[basis[k], j]
            M[k, n + j] = 1.0 if j == k else 0.0
    for col in range(n):
        piv = col
        big = abs(M[col, col])
        for r in range(col + 1, n):
            if abs(M[r, col]) > big:
                big = abs(M[r, col])
                piv = r
        if big < 1e-13:
            return False, np.eye(n)
        if piv != col:
            for j in range(2 * n):
                tmp = M[col, j]
                M[col, j] = M[piv, j]
                M[piv, j] = tmp
        inv = 1.0 / M[col, col]
        for j in range(2 * n):
            M[col, j] *= inv
        for r in range(n):
            if r != col:
                f = M[r, col]
                if f != 0.0:
                    for j in range(2 * n):
                        M[r, j] -= f * M[col, j]
    return True, M[:, n:].copy()


@njit(cache=True)
def _replace_row(Binv, k, aB):
    """Update ``Binv`` when basis row ``k`` is replaced by ``a`` with ``aB = a' Binv``."""
    n = Binv.shape[0]
    piv = aB[k]
    col = Binv[:, k].copy()
    for j in range(n):
        f = (aB[j] - (1.0 if j == k else 0.0)) / piv
        if f != 0.0:
            for i in range(n):
                Binv[i, j] -= col[i] * f


@njit(cache=True)
def _vertex(Binv, b, basis):
    n = basis.shape[0]
    x = np.zeros(n)
    for k in range(n):
        bk = b[basis[k]]
        for i in range(n):
            x[i] += Binv[i, k] * bk
    return x


@njit(cache=True)
def _multipliers(Binv, c):
    n = c.shape[0]
    lam = np.zeros(n)
    for k in range(n):
        v = 0.0
        for i in range(n):
            v += Binv[i, k] * c[i]
        lam[k] = v
    return lam


@njit(cache=True)
def _row_times(A, j, Binv):
    """``A[j] @ Binv``."""
    n = Binv.shape[0]
    out = np.zeros(n)
    for i in range(n):
        a = A[j, i]
        if a != 0.0:
            for k in range(n):
                out[k] += a * Binv[i, k]
    return out


@njit(cache=True)
def _harris_leave(w, lam):
    """Leaving position for the dual ratio test, or -1 if no ``w_k`` is positive.

    Among the positions whose ratio ``lam_k / w_k`` lies within the relaxed
    minimum, the largest pivot ``w_k`` wins; this keeps the basis well
    conditioned on degenerate vertices where many ratios are zero.
    """
    n = w.shape[0]
    bound = np.inf
    for k in range(n):
        if w[k] > PIVOT_TOL:
            r = (max(lam[k], 0.0) + HARRIS_TOL) / w[k]
            if r < bound:
                bound = r
    k_out = -1
    big = 0.0
    for k in range(n):
        if w[k] > PIVOT_TOL and max(lam[k], 0.0) / w[k] <= bound and w[k] > big:
            big = w[k]
            k_out = k
    return k_out


@njit(cache=True)
def _dual(A, b, c, basis, Binv, tol, max_iter):
    rows, n = A.shape
    in_basis = np.zeros(rows, dtype=np.bool_)
    for k in range(n):
        in_basis[basis[k]] = True
    bland_after = 4 * (rows + n)
    x = _vertex(Binv, b, basis)
    lam = _multipliers(Binv, c)
    fresh = False
    for it in range(max_iter):
        if it > 0 and it % REFACTOR_EVERY == 0:
            ok, Binv = _basis_inverse(A, basis)
            if not ok:
                return SINGULAR, x, lam, it, Binv
            fresh = True
        x = _vertex(Binv, b, basis)
        lam = _multipliers(Binv, c)
        j = -1
        worst = tol
        for i in range(rows):
            if in_basis[i]:
                continue
            r = -b[i]
            for k in range(n):
                r += A[i, k] * x[k]
            if r > worst:
                worst = r
                j = i
                if it >= bland_after:
                    break
        if j < 0:
            return OPTIMAL, x, lam, it, Binv
        w = _row_times(A, j, Binv)
        k_out = _harris_leave(w, lam)
        if k_out < 0 and not fresh:
            # confirm the certificate on a freshly factored basis before trusting it
            ok, Binv = _basis_inverse(A, basis)
            if not ok:
                return SINGULAR, x, lam, it, Binv
            fresh = True
            continue
        if k_out < 0:
            return INFEASIBLE, x, lam, it, Binv
        fresh = False
        _replace_row(Binv, k_out, w)
        in_basis[basis[k_out]] = False
        basis[k_out] = j
        in_basis[j] = True
    return MAX_ITER, x, lam, max_iter, Binv


@njit(cache=True)
def _primal(A, b, c, basis, Binv, tol, max_iter):
    rows, n = A.shape
    in_basis = np.zeros(rows, dtype=np.bool_)
    for k in range(n):
        in_basis[basis[k]] = True
    bland_after = 4 * (rows + n)
    ads = np.zeros(rows)
    slack = np.zeros(rows)
    x = _vertex(Binv, b, basis)
    lam = _multipliers(Binv, c)
    for it in range(max_iter):
        if it > 0 and it % REFACTOR_EVERY == 0:
            ok, Binv = _basis_inverse(A, basis)
            if not ok:
                return SINGULAR, x, lam, it, Binv
        x = _vertex(Binv, b, basis)
        lam = _multipliers(Binv, c)
        k_out = -1
        if it < bland_after:
            worst = -tol
            for k in range(n):
                if lam[k] < worst:
                    worst = lam[k]
                    k_out = k
        else:
            best_row = rows
            for k in range(n):
                if lam[k] < -tol and basis[k] < best_row:
                    best_row = basis[k]
                    k_out = k
        if k_out < 0:
            return OPTIMAL, x, lam, it, Binv
        # move along d = -Binv[:, k_out], leaving facet k_out; Harris two-pass ratio test
        bound = np.inf
        for i in range(rows):
            ads[i] = 0.0
            if in_basis[i]:
                continue
            ad = 0.0
            ax = 0.0
            for k in range(n):
                ad -= A[i, k] * Binv[k, k_out]
                ax += A[i, k] * x[k]
            ads[i] = ad
            slack[i] = max(b[i] - ax, 0.0)
            if ad > PIVOT_TOL:
                step = (slack[i] + HARRIS_TOL) / ad
                if step < bound:
                    bound = step
        j = -1
        big = 0.0
        for i in range(rows):
            ad = ads[i]
            if ad > PIVOT_TOL and slack[i] / ad <= bound and ad > big:
                big = ad
                j = i
        if j < 0:
            return UNBOUNDED, x, lam, it, Binv
        _replace_row(Binv, k_out, _row_times(A, j, Binv))
        in_basis[basis[k_out]] = False
        basis[k_out] = j
        in_basis[j] = True
    return MAX_ITER, x, lam, max_iter, Binv


@njit(cache=True)
def dual_simplex(A, b, c, basis, tol, max_iter):
    """Dual simplex from a dual feasible ``basis`` (modified in place).

    Returns ``(status, x, lam, iterations)``.
    """
    ok, Binv = _basis_inverse(A, basis)
    if not ok:
        return SINGULAR, np.zeros(A.shape[1]), np.zeros(A.shape[1]), 0
    status, x, lam, it, _ = _dual(A, b, c, basis, Binv, tol, max_iter)
    return status, x, lam, it


@njit(cache=True)
def primal_simplex(A, b, c, basis, tol, max_iter):
    """Primal simplex from a basis whose vertex is feasible (``basis`` modified).

    Returns ``(status, x, lam, iterations)``.
    """
    ok, Binv = _basis_inverse(A, basis)
    if not ok:
        return SINGULAR, np.zeros(A.shape[1]), np.zeros(A.shape[1]), 0
    status, x, lam, it, _ = _primal(A, b, c, basis, Binv, tol, max_iter)
    return status, x, lam, it


@njit(cache=True)
def box_basis(c, plus_rows, minus_rows):
    """Dual feasible basis made of coordinate facets: ``+e_k`` if ``c_k >= 0``."""
    n = c.shape[0]
    basis = np.empty(n, dtype=np.int64)
    for k in range(n):
        basis[k] = plus_rows[k] if c[k] >= 0.0 else minus_rows[k]
    return basis


@njit(cache=True)
def _warm(A, b, c, basis, Binv, have_binv, plus_rows, minus_rows, tol, max_iter):
    rows, n = A.shape
    if basis[0] >= 0:
        ok = True
        if not have_binv:
            ok, Binv = _basis_inverse(A, basis)
        if ok:
            x = _vertex(Binv, b, basis)
            feasible = True
            for i in range(rows):
                r = -b[i]
                for k in range(n):
                    r += A[i, k] * x[k]
                if r > tol:
                    feasible = False
                    break
            if feasible:
                status, x, lam, it, Binv = _primal(A, b, c, basis, Binv, tol, max_iter)
                if status != SINGULAR:
                    return status, x, lam, basis, it, Binv
            else:
                lam = _multipliers(Binv, c)
                if lam.min() >= -tol:
                    status, x, lam, it, Binv = _dual(A, b, c, basis, Binv, tol, max_iter)
                    if status != SINGULAR:
                        return status, x, lam, basis, it, Binv
    basis = box_basis(c, plus_rows, minus_rows)
    ok, Binv = _basis_inverse(A, basis)
    if not ok:
        return SINGULAR, np.zeros(n), np.zeros(n), basis, 0, Binv
    status, x, lam, it, Binv = _dual(A, b, c, basis, Binv, tol, max_iter)
    return status, x, lam, basis, it, Binv


@njit(cache=True)
def warm_solve(A, b, c, basis, plus_rows, minus_rows, tol, max_iter):
    """Solve from whatever the previous ``basis`` still offers.

    If its vertex is still feasible the primal simplex resumes; if its
    multipliers are still nonnegative the dual simplex resumes; otherwise
    the coordinate-facet basis provides a dual feasible cold start.  A
    negative first entry in ``basis`` means "no warm start".
    Returns ``(status, x, lam, basis, iterations)``.
    """
    n = A.shape[1]
    status, x, lam, basis, it, _ = _warm(
        A, b, c, basis, np.eye(n), False, plus_rows, minus_rows, tol, max_iter
    )
    return status, x, lam, basis, it


@njit(cache=True)
def batch_support(A, b, C, bases, plus_rows, minus_rows, tol, max_iter):
    """Support of ``{A x <= b}`` in every row direction of ``C``.

    ``bases`` (one row per direction) holds warm starts and receives the
    optimal bases.  Returns ``(status, values, argmax, multipliers)`` where
    ``multipliers[i]`` is a full-length dual vector (zero off the basis).
    """
    q = C.shape[0]
    rows, n = A.shape
    values = np.empty(q)
    argmax = np.empty((q, n))
    duals = np.zeros((q, rows))
    for i in range(q):
        status, x, lam, basis, it = warm_solve(
            A, b, C[i], bases[i].copy(), plus_rows, minus_rows, tol, max_iter
        )
        if status != OPTIMAL:
            return status, values, argmax, duals
        bases[i, :] = basis
        values[i] = C[i] @ x
        argmax[i, :] = x
        for k in range(n):
            duals[i, basis[k]] = max(lam[k], 0.0)
    return OPTIMAL, values, argmax, duals


@njit(cache=True)
def batch_support_cached(A, b, C, bases, binvs, trust, plus_rows, minus_rows, tol, max_iter):
    """:func:`batch_support` that also keeps the basis inverses in ``binvs``.

    With ``trust`` the stored inverses are used as is (valid while ``A`` is
    unchanged); otherwise they are recomputed, which bounds the drift of
    the rank-one updates.
    """
    q = C.shape[0]
    rows, n = A.shape
    values = np.empty(q)
    argmax = np.empty((q, n))
    duals = np.zeros((q, rows))
    for i in range(q):
        status, x, lam, basis, it, Binv = _warm(
            A, b, C[i], bases[i].copy(), binvs[i].copy(), trust, plus_rows, minus_rows, tol, max_iter
        )
        if status != OPTIMAL:
            return status, values, argmax, duals
        bases[i, :] = basis
        binvs[i] = Binv
        values[i] = C[i] @ x
        argmax[i, :] = x
        for k in range(n):
            duals[i, basis[k]] = max(lam[k], 0.0)
    return OPTIMAL, values, argmax, duals


# --------------------------------------------------------------------------
# interior point for inequality-form QPs


@njit(cache=True)
def _cholesky(H, floor):
    """Lower Cholesky factor of SPD ``H``; tiny pivots are lifted to ``floor``."""
    n = H.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        d = H[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if d < floor:
            d = floor
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            v = H[i, j]
            for k in range(j):
                v -= L[i, k] * L[j, k]
            L[i, j] = v / L[j, j]
    return L


@njit(cache=True)
def _cho_solve(L, rhs):
    n = L.shape[0]
    x = rhs.copy()
    for i in range(n):
        v = x[i]
        for k in range(i):
            v -= L[i, k] * x[k]
        x[i] = v / L[i, i]
    for i in range(n - 1, -1, -1):
        v = x[i]
        for k in range(i + 1, n):
            v -= L[k, i] * x[k]
        x[i] = v / L[i, i]
    return x


@njit(cache=True)
def _refined_solve(H, L, rhs):
    x = _cho_solve(L, rhs)
    x += _cho_solve(L, rhs - H @ x)
    return x


@njit(cache=True)
def _compress_rows(G):
    """Row-compressed copy of ``G``: ``(start, cols, vals)``."""
    m, n = G.shape
    nnz = 0
    for i in range(m):
        for j in range(n):
            if G[i, j] != 0.0:
                nnz += 1
    start = np.zeros(m + 1, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    t = 0
    for i in range(m):
        for j in range(n):
            if G[i, j] != 0.0:
                cols[t] = j
                vals[t] = G[i, j]
                t += 1
        start[i + 1] = t
    return start, cols, vals


@njit(cache=True)
def _rows_dot(start, cols, vals, x, out):
    """``out = G @ x``."""
    for i in range(out.size):
        v = 0.0
        for t in range(start[i], start[i + 1]):
            v += vals[t] * x[cols[t]]
        out[i] = v


@njit(cache=True)
def _rows_tdot(start, cols, vals, z, out):
    """``out = G.T @ z``."""
    out[:] = 0.0
    for i in range(z.size):
        zi = z[i]
        if zi != 0.0:
            for t in range(start[i], start[i + 1]):
                out[cols[t]] += vals[t] * zi


@njit(cache=True)
def _sym_dot(P, x, out):
    n = x.size
    for i in range(n):
        v = 0.0
        for j in range(n):
            v += P[i, j] * x[j]
        out[i] = v


@njit(cache=True)
def qp_residual(P, q, G, h, x, z):
    """Scaled KKT residual, same definition as the generic QP solver."""
    r = np.abs(P @ x + q + G.T @ z).max() if x.size else 0.0
    if G.shape[0]:
        slack = h - G @ x
        r = max(r, max(-slack.min(), 0.0), max(-z.min(), 0.0), np.abs(z * slack).max())
    scale = 1.0 + max(np.abs(q).max() if q.size else 0.0, np.abs(h).max() if h.size else 0.0)
    return r / scale


@njit(cache=True)
def _residual_sparse(P, q, start, cols, vals, h, x, z, scale, gx, grad):
    _rows_dot(start, cols, vals, x, gx)
    _rows_tdot(start, cols, vals, z, grad)
    n = x.size
    r = 0.0
    for i in range(n):
        v = q[i] + grad[i]
        for j in range(n):
            v += P[i, j] * x[j]
        r = max(r, abs(v))
    for i in range(h.size):
        sl = h[i] - gx[i]
        r = max(r, -sl, -z[i], abs(z[i] * sl))
    return r / scale


@njit(cache=True)
def _max_step(v, dv):
    a = 1.0
    for i in range(v.size):
        if dv[i] < 0.0:
            a = min(a, -v[i] / dv[i])
    return a


@njit(cache=True)
def ipm_qp(P, q, G, h, tol, max_iter, x0, s_floor):
    """Mehrotra predictor-corrector for ``min 0.5x'Px + q'x`` s.t. ``Gx <= h``.

    Assumes a finite optimum exists.  ``G`` is used in row-compressed form,
    which pays off for the sparse cut rows of the MPC relaxations.  Returns
    ``(status, x, z, iterations, residual)`` for the best iterate seen;
    status is OPTIMAL iff the scaled KKT residual is within ``tol``.
    ``x0`` is the primal starting point; slacks start at ``max(h - G x0, s_floor)``.
    """
    n = q.size
    mi = G.shape[0]
    start, cols, vals = _compress_rows(G)
    scale = 1.0 + max(np.abs(q).max() if n else 0.0, np.abs(h).max() if mi else 0.0)
    reg = 1e-11 * (1.0 + np.abs(P).max())
    x = x0.copy()
    gx = np.empty(mi)
    _rows_dot(start, cols, vals, x, gx)
    s = np.maximum(h - gx, s_floor)
    z = np.ones(mi)
    grad = np.empty(n)
    gdx = np.empty(mi)
    tmp_n = np.empty(n)
    rd = np.empty(n)
    ri = np.empty(mi)
    H = np.empty((n, n))
    best_res = np.inf
    best_x = x.copy()
    best_z = z.copy()
    it = 0
    for it in range(max_iter):
        res = _residual_sparse(P, q, start, cols, vals, h, x, z, scale, gx, grad)
        if res < best_res:
            best_res = res
            best_x[:] = x
            best_z[:] = z
        if res <= tol:
            break
        # gx = G x and grad = G'z are current after the residual call
        _sym_dot(P, x, rd)
        for i in range(n):
            rd[i] += q[i] + grad[i]
        for i in range(mi):
            ri[i] = gx[i] + s[i] - h[i]
        mu = (s @ z) / mi
        w = z / s
        H[:, :] = P
        for i in range(mi):
            wi = w[i]
            for t in range(start[i], start[i + 1]):
                a = cols[t]
                va = wi * vals[t]
                for u in range(start[i], start[i + 1]):
                    H[a, cols[u]] += va * vals[u]
        for i in range(n):
            H[i, i] += reg
        L = _cholesky(H, reg)

        dx = np.empty(n)
        dz = np.empty(mi)
        ds = np.empty(mi)
        sigma_mu = 0.0
        for phase in range(2):
            if phase == 0:
                tmp = (-s * z + z * ri) / s
            else:
                a_aff = min(_max_step(s, ds), _max_step(z, dz))
                mu_aff = ((s + a_aff * ds) @ (z + a_aff * dz)) / mi
                sigma_mu = (mu_aff / mu) ** 3 * mu
                tmp = (-(s * z + ds * dz - sigma_mu) + z * ri) / s
            _rows_tdot(start, cols, vals, tmp, tmp_n)
            rhs = -rd - tmp_n
            dx = _refined_solve(H, L, rhs)
            _rows_dot(start, cols, vals, dx, gdx)
            ds = -ri - gdx
            dz = tmp + w * gdx
        alpha = min(1.0, 0.995 * min(_max_step(s, ds), _max_step(z, dz)))
        x = x + alpha * dx
        z = np.maximum(z + alpha * dz, 1e-300)
        s = np.maximum(s + alpha * ds, 1e-300)
        ok = True
        for i in range(n):
            if not np.isfinite(x[i]):
                ok = False
        if not ok:
            break
    status = OPTIMAL if best_res <= tol else MAX_ITER
    return status, best_x, best_z, it, best_res
