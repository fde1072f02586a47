"""Pure-numpy kernels, vectorized over rows.

Used when numba is unavailable or ``LQTURNPIKE_DISABLE_NUMBA=1``.
"""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

NAME = "numpy"

BOX, HALFSPACE, SOC, FULL = 0, 1, 2, 3


def _project_piece(T, j, kinds, idx, nidx, lo, hi, aa, bb):
    kind = kinds[j]
    cols = idx[j, :nidx[j]]
    if kind == BOX:
        T[:, cols] = np.clip(T[:, cols], lo[j, :nidx[j]], hi[j, :nidx[j]])
    elif kind == HALFSPACE:
        a = aa[j]
        nrm2 = a @ a
        if nrm2 > 0.0:
            viol = np.maximum(T @ a - bb[j], 0.0)
            T -= np.outer(viol / nrm2, a)
    elif kind == SOC:
        apex, vec = cols[0], cols[1:]
        r = np.sqrt(np.sum(T[:, vec] ** 2, axis=1))
        s = T[:, apex].copy()
        vertex = r <= -s
        middle = (r > np.abs(s))
        alpha = 0.5 * (s + r)
        scale = np.where(middle, alpha / np.where(middle, r, 1.0), 1.0)
        T[:, vec] *= scale[:, None]
        T[:, apex] = np.where(middle, alpha, s)
        T[np.ix_(vertex, cols)] = 0.0


def project_rows(Y, kinds, idx, nidx, lo, hi, aa, bb, tol, maxit):
    """Dykstra projection of every row of ``Y`` onto the encoded set.

    Returns the projected rows, the final per-row change (the convergence
    residual) and the sweep count.
    """
    X = np.array(Y, dtype=float, copy=True)
    npieces = len(kinds)
    res = np.zeros(X.shape[0])
    if npieces == 0:
        return X, res, 0
    if npieces == 1:
        _project_piece(X, 0, kinds, idx, nidx, lo, hi, aa, bb)
        return X, res, 1
    incr = np.zeros((npieces,) + X.shape)
    for it in range(maxit):
        start = X.copy()
        res = np.zeros(X.shape[0])
        for j in range(npieces):
            T = X + incr[j]
            _project_piece(T, j, kinds, idx, nidx, lo, hi, aa, bb)
            new_inc = X + incr[j] - T
            res = np.maximum(res, np.max(np.abs(new_inc - incr[j]), axis=1, initial=0.0))
            incr[j] = new_inc
            X = T
        res = np.maximum(res, np.max(np.abs(X - start), axis=1, initial=0.0))
        if np.max(res, initial=0.0) <= tol:
            return X, res, it + 1
    return X, res, maxit


class LQSolver:
    """Sparse-LU solver for the penalized dynamics-constrained QP.

    Same problem as the Riccati solver in the numba backend, posed as one
    KKT system over all stages and factored once.
    """

    def __init__(self, A, B, H, rho, N):
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        n, m = B.shape
        d = n + m
        self.n, self.m, self.N = n, m, int(N)
        self.rho = float(rho)
        half = 0.5 * self.rho
        stage = np.asarray(H, dtype=float) + half * np.eye(d)
        hess = sp.block_diag([stage] * self.N + [half * np.eye(d)], format="csr")
        # rows: x_0 = x0, then x_{i+1} - A x_i - B u_i = 0
        AB = np.hstack([A, B])
        blocks = [sp.hstack([sp.eye(n), sp.csr_matrix((n, d * self.N + m))])]
        for i in range(self.N):
            row = sp.lil_matrix((n, d * (self.N + 1)))
            row[:, d * i:d * i + d] = -AB
            row[:, d * (i + 1):d * (i + 1) + n] = np.eye(n)
            blocks.append(row.tocsr())
        E = sp.vstack(blocks, format="csr")
        kkt = sp.bmat([[2.0 * hess, E.T], [E, None]], format="csc")
        self._lu = spla.splu(kkt)
        self._ny = d * (self.N + 1)

    def solve(self, g, x0):
        n = self.n
        rhs = np.zeros(self._ny + n * (self.N + 1))
        rhs[:self._ny] = -2.0 * np.asarray(g, dtype=float).ravel()
        rhs[self._ny:self._ny + n] = x0
        sol = self._lu.solve(rhs)
        return sol[:self._ny].reshape(self.N + 1, n + self.m)


def make_lq_solver(A, B, H, rho, N):
    return LQSolver(A, B, H, rho, N)
