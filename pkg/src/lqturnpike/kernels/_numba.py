"""Numba-compiled kernels.

Same call signatures as :mod:`lqturnpike.kernels._numpy`; the two are
interchangeable and cross-checked in the test suite.
"""
import numpy as np
from numba import njit

NAME = "numba"

BOX, HALFSPACE, SOC, FULL = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def project_rows(Y, kinds, idx, nidx, lo, hi, aa, bb, tol, maxit):
    """Dykstra projection of every row of ``Y`` onto the encoded set.

    Returns the projected rows, the final per-row change (the convergence
    residual) and the largest sweep count.  One monolithic kernel: the per-piece projections are written inline
    because a call per row and piece, with seven array arguments, costs
    several times the arithmetic for the small dimensions used here.
    """
    out = Y.copy()
    nrows, d = Y.shape
    npieces = kinds.size
    res = np.zeros(nrows)
    if npieces == 0:
        return out, res, 0
    incr = np.zeros((npieces, d))
    t = np.empty(d)
    start = np.empty(d)
    iters = 0
    sweeps = maxit if npieces > 1 else 1
    for r in range(nrows):
        x = out[r]
        incr[:, :] = 0.0
        change = 0.0
        it = 0
        for it in range(sweeps):
            for k in range(d):
                start[k] = x[k]
            change = 0.0
            for j in range(npieces):
                for k in range(d):
                    t[k] = x[k] + incr[j, k]
                kind = kinds[j]
                if kind == BOX:
                    for q in range(nidx[j]):
                        k = idx[j, q]
                        if t[k] < lo[j, q]:
                            t[k] = lo[j, q]
                        elif t[k] > hi[j, q]:
                            t[k] = hi[j, q]
                elif kind == HALFSPACE:
                    viol = -bb[j]
                    nrm2 = 0.0
                    for k in range(d):
                        viol += aa[j, k] * t[k]
                        nrm2 += aa[j, k] * aa[j, k]
                    if viol > 0.0 and nrm2 > 0.0:
                        scale = viol / nrm2
                        for k in range(d):
                            t[k] -= scale * aa[j, k]
                elif kind == SOC:
                    apex = idx[j, 0]
                    r2 = 0.0
                    for q in range(1, nidx[j]):
                        r2 += t[idx[j, q]] ** 2
                    rad = np.sqrt(r2)
                    s = t[apex]
                    if rad > s:
                        if rad <= -s:
                            t[apex] = 0.0
                            for q in range(1, nidx[j]):
                                t[idx[j, q]] = 0.0
                        else:
                            alpha = 0.5 * (s + rad)
                            t[apex] = alpha
                            scale = alpha / rad
                            for q in range(1, nidx[j]):
                                t[idx[j, q]] *= scale
                for k in range(d):
                    new_inc = x[k] + incr[j, k] - t[k]
                    change = max(change, abs(new_inc - incr[j, k]))
                    incr[j, k] = new_inc
                    x[k] = t[k]
            for k in range(d):
                change = max(change, abs(x[k] - start[k]))
            if change <= tol:
                break
        if npieces > 1:
            res[r] = change
        iters = max(iters, it + 1)
    return out, res, iters


@njit(cache=True, nogil=True)
def _lq_factor(A, B, H, rho, N):
    n, m = B.shape
    half = 0.5 * rho
    AT = np.ascontiguousarray(A.T)
    BT = np.ascontiguousarray(B.T)
    Gxx = H[:n, :n].copy()
    Guu = H[n:, n:].copy()
    Gux = np.ascontiguousarray(H[n:, :n])
    for k in range(n):
        Gxx[k, k] += half
    for k in range(m):
        Guu[k, k] += half
    P = np.eye(n) * half
    K = np.empty((N, m, n))
    Qinv = np.empty((N, m, m))
    for i in range(N - 1, -1, -1):
        PA = P @ A
        PB = P @ B
        Quu = Guu + BT @ PB
        Qux = Gux + BT @ PA
        Qxx = Gxx + AT @ PA
        Qi = np.linalg.inv(Quu)
        Ki = -(Qi @ Qux)
        P = Qxx + np.ascontiguousarray(Qux.T) @ Ki
        P = 0.5 * (P + P.T)
        K[i] = Ki
        Qinv[i] = Qi
    return K, Qinv


@njit(cache=True, nogil=True)
def _lq_solve(A, B, K, Qinv, g, x0, rho):
    """Backward affine recursion, then forward roll-out; explicit loops
    because the per-stage products are far too small for BLAS calls."""
    N = K.shape[0]
    n, m = B.shape
    p = g[N, :n].copy()
    p_new = np.empty(n)
    qu = np.empty(m)
    kff = np.empty((N, m))
    for i in range(N - 1, -1, -1):
        for a in range(m):
            acc = g[i, n + a]
            for b in range(n):
                acc += B[b, a] * p[b]
            qu[a] = acc
        for a in range(m):
            acc = 0.0
            for b in range(m):
                acc -= Qinv[i, a, b] * qu[b]
            kff[i, a] = acc
        for a in range(n):
            acc = g[i, a]
            for b in range(n):
                acc += A[b, a] * p[b]
            for b in range(m):
                acc += K[i, b, a] * qu[b]
            p_new[a] = acc
        for a in range(n):
            p[a] = p_new[a]
    y = np.empty((N + 1, n + m))
    for a in range(n):
        y[0, a] = x0[a]
    for i in range(N):
        for a in range(m):
            acc = kff[i, a]
            for b in range(n):
                acc += K[i, a, b] * y[i, b]
            y[i, n + a] = acc
        for a in range(n):
            acc = 0.0
            for b in range(n):
                acc += A[a, b] * y[i, b]
            for b in range(m):
                acc += B[a, b] * y[i, n + b]
            y[i + 1, a] = acc
    for a in range(m):
        y[N, n + a] = -g[N, n + a] / (0.5 * rho)
    return y


class LQSolver:
    """Riccati-factored solver for the penalized dynamics-constrained QP.

    Minimizes ``sum_i y_i' (H + rho/2 I) y_i + 2 g_i' y_i`` over stage rows
    ``y_i = (x_i, u_i)``, ``i < N``, plus ``rho/2 |y_N|^2 + 2 g_N' y_N``,
    subject to ``x_{i+1} = A x_i + B u_i`` and ``x_0`` fixed.
    """

    def __init__(self, A, B, H, rho, N):
        self.A = np.ascontiguousarray(A, dtype=float)
        self.B = np.ascontiguousarray(B, dtype=float)
        self.rho = float(rho)
        self.K, self.Qinv = _lq_factor(self.A, self.B,
                                       np.ascontiguousarray(H, dtype=float),
                                       self.rho, int(N))

    def solve(self, g, x0):
        return _lq_solve(self.A, self.B, self.K, self.Qinv,
                         np.ascontiguousarray(g), np.asarray(x0, dtype=float),
                         self.rho)


def make_lq_solver(A, B, H, rho, N):
    return LQSolver(A, B, H, rho, N)
