"""Problem data, trajectories and the stage-level primitives."""
from dataclasses import dataclass, field

import numpy as np

from .constraints import ConstraintSet, full_space
from .errors import DimensionError, NotPDError, NotPSDError

PSD_TOL = 1e-9
PD_TOL = 1e-9
FACTOR_RTOL = 1e-9
MEMBERSHIP_TOL = 1e-10


def factor_cost(Q, R):
    """Return ``(C, K)`` with ``C'C = Q`` and ``K'K = R``.

    ``C`` is the symmetric PSD square root of ``Q``; ``K`` is the upper
    triangular Cholesky factor of ``R``.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    Qs = 0.5 * (Q + Q.T)
    Rs = 0.5 * (R + R.T)
    if not np.allclose(Q, Qs, atol=1e-12, rtol=0):
        raise NotPSDError("Q (asymmetric)", np.nan)
    if not np.allclose(R, Rs, atol=1e-12, rtol=0):
        raise NotPDError("R (asymmetric)", np.nan)
    wq, vq = np.linalg.eigh(Qs)
    if wq.size and wq[0] < -PSD_TOL:
        raise NotPSDError("Q", wq[0])
    wr = np.linalg.eigvalsh(Rs)
    if wr[0] < PD_TOL:
        raise NotPDError("R", wr[0])
    C = (vq * np.sqrt(np.clip(wq, 0.0, None))) @ vq.T
    C = 0.5 * (C + C.T)
    K = np.linalg.cholesky(Rs).T
    return C, K


@dataclass(frozen=True, eq=False)
class Problem:
    """Constrained LQ problem data.

    The stage cost is ``x'Qx + u'Ru + 2z'x + 2v'u + c`` with ``Q = C'C`` and
    ``R = K'K``; dynamics ``x+ = Ax + Bu``; stage constraint ``(x, u) in S``.
    """

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    z: np.ndarray = None
    v: np.ndarray = None
    c: float = 0.0
    S: ConstraintSet = None
    C: np.ndarray = field(default=None)
    K: np.ndarray = field(default=None)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionError(f"A must be square, got {A.shape}")
        if B.ndim > 2 or B.size % n or (B.ndim == 2 and B.shape[0] != n):
            raise DimensionError(f"B must have {n} rows, got shape {B.shape}")
        B = B.reshape(n, -1)
        m = B.shape[1]
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape != (n, n) or R.shape != (m, m):
            raise DimensionError(f"Q must be {n}x{n} and R {m}x{m}")
        z = np.zeros(n) if self.z is None else np.asarray(self.z, dtype=float).ravel()
        v = np.zeros(m) if self.v is None else np.asarray(self.v, dtype=float).ravel()
        if z.size != n or v.size != m:
            raise DimensionError("z and v must match the state/control sizes")
        C, K = factor_cost(Q, R)
        if self.C is not None:
            C = np.atleast_2d(np.asarray(self.C, dtype=float))
            if np.linalg.norm(C.T @ C - Q) > FACTOR_RTOL * (1 + np.linalg.norm(Q)):
                raise DimensionError("supplied C does not satisfy C'C = Q")
        if self.K is not None:
            K = np.atleast_2d(np.asarray(self.K, dtype=float))
            if np.linalg.norm(K.T @ K - R) > FACTOR_RTOL * (1 + np.linalg.norm(R)):
                raise DimensionError("supplied K does not satisfy K'K = R")
            if np.linalg.matrix_rank(K) < m:
                raise NotPDError("K (rank deficient)", 0.0)
        S = full_space(n, m) if self.S is None else self.S
        if (S.n, S.m) != (n, m):
            raise DimensionError(f"constraint set is over R^{S.n}xR^{S.m}, "
                                 f"problem is R^{n}xR^{m}")
        for name, val in dict(A=A, B=B, Q=Q, R=R, z=z, v=v, C=C, K=K, S=S,
                              c=float(self.c)).items():
            object.__setattr__(self, name, val)
        for arr in (A, B, Q, R, z, v, C, K):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def H(self):
        """Block-diagonal Hessian half ``diag(Q, R)`` of the stage cost."""
        H = np.zeros((self.n + self.m,) * 2)
        H[:self.n, :self.n] = self.Q
        H[self.n:, self.n:] = self.R
        return H

    @property
    def h(self):
        return np.concatenate([self.z, self.v])


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``x(0..N)`` and controls ``u(0..N-1)`` with their stage costs."""

    x: np.ndarray
    u: np.ndarray
    stage_costs: np.ndarray
    info: dict = None

    @property
    def N(self):
        return self.u.shape[0]

    @property
    def cost(self):
        return float(np.sum(self.stage_costs))

    @classmethod
    def from_controls(cls, p, x0, u):
        u = np.asarray(u, dtype=float).reshape(-1, p.m)
        x = rollout(p, x0, u)
        return cls(x, u, stage_cost(p, x[:-1], u))

    @classmethod
    def from_states_controls(cls, p, x, u):
        x = np.asarray(x, dtype=float).reshape(-1, p.n)
        u = np.asarray(u, dtype=float).reshape(-1, p.m)
        return cls(x, u, stage_cost(p, x[:-1], u))


def stage_cost(p, x, u):
    """Stage cost, row-wise when given 2-d arrays."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != p.n or u.shape[-1] != p.m:
        raise DimensionError(f"expected x in R^{p.n}, u in R^{p.m}")
    val = (np.einsum("...i,ij,...j->...", x, p.Q, x)
           + np.einsum("...i,ij,...j->...", u, p.R, u)
           + 2.0 * (x @ p.z) + 2.0 * (u @ p.v) + p.c)
    return float(val) if np.ndim(val) == 0 else val


def step_dynamics(p, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != p.n or u.shape[-1] != p.m:
        raise DimensionError(f"expected x in R^{p.n}, u in R^{p.m}")
    return x @ p.A.T + u @ p.B.T


def rollout(p, x0, u):
    u = np.asarray(u, dtype=float).reshape(-1, p.m)
    x = np.empty((u.shape[0] + 1, p.n))
    x[0] = x0
    for i in range(u.shape[0]):
        x[i + 1] = p.A @ x[i] + p.B @ u[i]
    return x


@dataclass(frozen=True)
class Admissibility:
    ok: bool
    first_violation: int = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def is_admissible(p, t, tol=MEMBERSHIP_TOL):
    """Check ``(x(i), u(i)) in S`` for ``i < N`` and ``x(N) in X``."""
    N = t.N
    if N:
        Y = np.hstack([t.x[:N], t.u])
        g = p.S.g(Y)
        bad = np.flatnonzero(g > tol)
        if bad.size:
            i = int(bad[0])
            return Admissibility(False, i, f"g(x({i}), u({i})) = {g[i]:.3e} > 0")
    if not p.S.state_contains(t.x[N], tol=tol):
        return Admissibility(False, N, "terminal state outside X")
    return Admissibility(True)
