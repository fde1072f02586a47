"""Convex stage-constraint sets built from simple pieces.

A set ``S`` over stacked stage vectors ``y = (x, u)`` is an intersection of
pieces.  Each piece carries a normalized convex function whose zero
sublevel set is the piece; ``g`` is their pointwise maximum, so
``y in S  <=>  g(y) <= 0`` and ``g = 0`` exactly on the boundary.

Indices always refer to the stacked vector: states occupy ``0..n-1`` and
controls ``n..n+m-1``.
"""
import threading
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError, NonConvergenceError

PROJECTION_TOL = 1e-10
PROJECTION_MAXIT = 20000
POLISH_FEAS_TOL = 1e-9


def _rows(Y):
    Y = np.asarray(Y, dtype=float)
    return Y[None, :] if Y.ndim == 1 else Y


def _out(vals, Y):
    return float(vals[0]) if np.ndim(Y) == 1 else vals


@dataclass(frozen=True, eq=False)
class NormBox:
    """``max_k |y_k| <= radius`` over ``indices``."""

    indices: tuple
    radius: float
    kind = kernels.BOX

    def value(self, Y):
        R = _rows(Y)
        return _out(np.max(np.abs(R[:, list(self.indices)]), axis=1) - self.radius, Y)

    def gradient(self, y):
        sub = np.abs(y[list(self.indices)])
        q = int(np.argmax(sub))
        k = self.indices[q]
        grad = np.zeros_like(y)
        grad[k] = 1.0 if y[k] >= 0 else -1.0
        return grad

    def generators(self, y, tol):
        out = []
        for k in self.indices:
            if abs(abs(y[k]) - self.radius) <= tol:
                e = np.zeros_like(y)
                e[k] = 1.0 if y[k] >= 0 else -1.0
                out.append(e)
        return out

    def encode(self, d):
        r = float(self.radius)
        n = len(self.indices)
        return self.indices, [-r] * n, [r] * n, np.zeros(d), 0.0

    def bounds(self):
        return {k: (-self.radius, self.radius) for k in self.indices}


@dataclass(frozen=True, eq=False)
class Box:
    """Per-coordinate bounds ``lower_k <= y_k <= upper_k``; may be infinite."""

    indices: tuple
    lower: tuple
    upper: tuple
    kind = kernels.BOX

    def _parts(self, R):
        cols = R[:, list(self.indices)]
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        # interleave (upper, lower) per coordinate so argmax respects declaration order
        parts = np.empty((R.shape[0], 2 * len(self.indices)))
        with np.errstate(invalid="ignore"):
            parts[:, 0::2] = cols - hi
            parts[:, 1::2] = lo - cols
        parts[np.isnan(parts)] = -np.inf
        return parts

    def value(self, Y):
        return _out(np.max(self._parts(_rows(Y)), axis=1), Y)

    def gradient(self, y):
        parts = self._parts(y[None, :])[0]
        q = int(np.argmax(parts))
        grad = np.zeros_like(y)
        grad[self.indices[q // 2]] = 1.0 if q % 2 == 0 else -1.0
        return grad

    def generators(self, y, tol):
        out = []
        for k, lo, hi in zip(self.indices, self.lower, self.upper):
            if abs(y[k] - hi) <= tol:
                e = np.zeros_like(y)
                e[k] = 1.0
                out.append(e)
            if abs(lo - y[k]) <= tol:
                e = np.zeros_like(y)
                e[k] = -1.0
                out.append(e)
        return out

    def encode(self, d):
        return self.indices, list(self.lower), list(self.upper), np.zeros(d), 0.0

    def bounds(self):
        return {k: (lo, hi) for k, lo, hi in zip(self.indices, self.lower, self.upper)}


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``a . y <= b``."""

    a: np.ndarray
    b: float
    kind = kernels.HALFSPACE

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))

    @property
    def indices(self):
        return tuple(int(k) for k in np.flatnonzero(self.a))

    def value(self, Y):
        return _out(_rows(Y) @ self.a - self.b, Y)

    def gradient(self, y):
        return self.a.copy()

    def generators(self, y, tol):
        return [self.a.copy()] if abs(self.a @ y - self.b) <= tol else []

    def encode(self, d):
        return (), [], [], self.a, float(self.b)

    def bounds(self):
        return {}


@dataclass(frozen=True, eq=False)
class SecondOrderCone:
    """``|y_indices|_2 <= y_apex``."""

    apex: int
    indices: tuple
    kind = kernels.SOC

    def value(self, Y):
        R = _rows(Y)
        return _out(np.linalg.norm(R[:, list(self.indices)], axis=1) - R[:, self.apex], Y)

    def gradient(self, y):
        grad = np.zeros_like(y)
        vec = y[list(self.indices)]
        r = np.linalg.norm(vec)
        grad[self.apex] = -1.0
        if r > 0.0:
            grad[list(self.indices)] = vec / r
        return grad

    def generators(self, y, tol):
        vec = y[list(self.indices)]
        r = np.linalg.norm(vec)
        if abs(r - y[self.apex]) > tol:
            return []
        if r > tol:
            return [self.gradient(y)]
        # vertex: the subdifferential is a disc; use its center plus a ring
        base = np.zeros_like(y)
        base[self.apex] = -1.0
        out = [base]
        k = len(self.indices)
        if k == 2:
            dirs = [(np.cos(t), np.sin(t)) for t in np.linspace(0, 2 * np.pi, 16, endpoint=False)]
        else:
            dirs = [s * e for e in np.eye(k) for s in (1.0, -1.0)]
        for dvec in dirs:
            g = base.copy()
            g[list(self.indices)] = dvec
            out.append(g)
        return out

    def encode(self, d):
        return (self.apex,) + tuple(self.indices), [], [], np.zeros(d), 0.0

    def bounds(self):
        return {}

    @property
    def support(self):
        return (self.apex,) + tuple(self.indices)


@dataclass(frozen=True, eq=False)
class FullSpace:
    kind = kernels.FULL
    indices: tuple = ()

    def value(self, Y):
        return _out(np.full(_rows(Y).shape[0], -np.inf), Y)

    def gradient(self, y):
        return np.zeros_like(y)

    def generators(self, y, tol):
        return []

    def encode(self, d):
        return (), [], [], np.zeros(d), 0.0

    def bounds(self):
        return {}


def _support(piece):
    return tuple(getattr(piece, "support", piece.indices))


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Closed convex set ``S`` in R^(n+m) given as an intersection of pieces."""

    n: int
    m: int
    pieces: tuple = ()
    _enc: tuple = field(init=False, repr=False)
    _conic: tuple = field(init=False, repr=False, default=None)
    _conic_lock: object = field(init=False, repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        d = self.n + self.m
        for p in self.pieces:
            sup = _support(p)
            if any(k < 0 or k >= d for k in sup):
                raise DimensionError(f"piece {p!r} indexes outside 0..{d - 1}")
            if isinstance(p, Halfspace) and p.a.shape != (d,):
                raise DimensionError(f"halfspace normal must have length {d}")
        object.__setattr__(self, "_enc", self._encode())
        object.__setattr__(self, "_conic_lock", threading.Lock())

    @property
    def dim(self):
        return self.n + self.m

    def _encode(self):
        d = self.dim
        active = [p for p in self.pieces if not isinstance(p, FullSpace)]
        P = len(active)
        L = max([len(p.encode(d)[0]) for p in active] + [1])
        kinds = np.zeros(P, dtype=np.int64)
        idx = np.full((P, L), -1, dtype=np.int64)
        nidx = np.zeros(P, dtype=np.int64)
        lo = np.zeros((P, L))
        hi = np.zeros((P, L))
        aa = np.zeros((P, d))
        bb = np.zeros(P)
        for j, p in enumerate(active):
            ind, plo, phi, a, b = p.encode(d)
            kinds[j] = p.kind
            nidx[j] = len(ind)
            idx[j, :len(ind)] = ind
            lo[j, :len(plo)] = plo
            hi[j, :len(phi)] = phi
            aa[j] = a
            bb[j] = b
        return kinds, idx, nidx, lo, hi, aa, bb

    def stack(self, x, u):
        x = np.asarray(x, dtype=float).ravel()
        u = np.asarray(u, dtype=float).ravel()
        if x.size != self.n or u.size != self.m:
            raise DimensionError(f"expected x in R^{self.n}, u in R^{self.m}")
        return np.concatenate([x, u])

    # -- g and its subgradient -------------------------------------------
    def g(self, Y):
        """Max of the piece functions, row-wise for 2-d input."""
        R = _rows(Y)
        if R.shape[1] != self.dim:
            raise DimensionError(f"expected stage vectors of length {self.dim}")
        vals = np.full(R.shape[0], -np.inf)
        for p in self.pieces:
            vals = np.maximum(vals, p.value(R))
        return _out(vals, Y)

    def evaluate_g(self, x, u):
        return self.g(self.stack(x, u))

    def subgradient(self, y):
        """One element of the subdifferential of ``g`` at ``y``.

        The lowest-index piece attaining the max supplies its gradient; the
        pieces break their own kinks the same way.
        """
        y = np.asarray(y, dtype=float)
        if not self.pieces:
            return np.zeros(self.dim)
        vals = [p.value(y) for p in self.pieces]
        top = max(vals)
        j = next(i for i, v in enumerate(vals) if v >= top - 1e-12)
        return self.pieces[j].gradient(y), j

    def subgradient_g(self, x, u):
        return self.subgradient(self.stack(x, u))[0]

    def active_generators(self, y, tol=1e-8):
        """Extreme subgradients of the pieces active (value 0) at ``y``."""
        out = []
        for j, p in enumerate(self.pieces):
            if abs(p.value(y)) <= tol:
                out.extend((j, gvec) for gvec in p.generators(y, tol))
        return out

    def contains(self, y, tol=1e-10):
        return self.g(y) <= tol

    # -- projection -------------------------------------------------------
    def project_many(self, Y, tol=PROJECTION_TOL, maxit=PROJECTION_MAXIT, strict=True):
        """Row-wise Euclidean projection onto ``S`` by Dykstra's algorithm.

        With ``strict``, rows Dykstra leaves unconverged (it is sublinear where
        pieces meet tangentially) are re-solved exactly as small conic
        programs; failure of that fallback raises NonConvergenceError.
        Without ``strict`` the Dykstra iterates are returned as they are.
        """
        Y = np.ascontiguousarray(_rows(Y), dtype=float)
        Z, res, it = kernels.project_rows(Y, *self._enc, tol, maxit)
        if strict:
            bad = np.flatnonzero(res > tol)
            if bad.size:
                Z[bad] = self._conic_projection(Y[bad], res[bad], it)
        return Z

    def _conic_projection(self, Y, res, it):
        import cvxpy as cp

        out = np.empty_like(Y)
        with self._conic_lock:
            if self._conic is None:  # compiled once, then re-solved per row
                target = cp.Parameter(self.dim)
                z = cp.Variable(self.dim)
                cons = [c for piece in self.pieces for c in cvx_constraints(cp, piece, z)]
                prob = cp.Problem(cp.Minimize(cp.sum_squares(z - target)), cons)
                object.__setattr__(self, "_conic", (prob, target, z))
            prob, target, z = self._conic
            for r, y in enumerate(Y):
                target.value = y
                prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10,
                           tol_feas=1e-10, max_iter=200)
                if z.value is None or self.g(z.value) > POLISH_FEAS_TOL:
                    raise NonConvergenceError("Dykstra projection", float(res[r]), it)
                out[r] = z.value
        return out

    def project(self, y, **kw):
        return self.project_many(np.asarray(y, dtype=float)[None, :], **kw)[0]

    def project_stage(self, x, u, **kw):
        z = self.project(self.stack(x, u), **kw)
        return z[:self.n], z[self.n:]

    @property
    def encoding(self):
        return self._enc

    # -- state set X ------------------------------------------------------
    @property
    def is_product(self):
        """True when every piece touches only states or only controls."""
        for p in self.pieces:
            sup = _support(p)
            if sup and min(sup) < self.n <= max(sup):
                return False
        return True

    def state_pieces(self):
        return tuple(p for p in self.pieces
                     if _support(p) and max(_support(p)) < self.n)

    def control_pieces(self):
        return tuple(p for p in self.pieces
                     if _support(p) and min(_support(p)) >= self.n)

    def state_contains(self, x, tol=1e-10, sweeps=20):
        """Membership in ``X``, the projection of ``S`` onto the states."""
        x = np.asarray(x, dtype=float)
        if self.is_product:
            vals = [p.value(np.concatenate([x, np.zeros(self.m)]))
                    for p in self.state_pieces()]
            return max(vals, default=-np.inf) <= tol
        return self.min_control_g(x, sweeps)[0] <= tol

    def min_control_g(self, x, sweeps=20):
        """``(min_u g(x, u), u)``: the control that best fits ``x`` into ``S``.

        A few alternating projections between ``{x} x R^m`` and ``S`` settle
        the easy cases; otherwise the convex problem in ``u`` is solved by a
        conic solver and ``g`` is re-evaluated exactly at its minimizer.
        """
        x = np.asarray(x, dtype=float)
        u = np.zeros(self.m)
        best = (np.inf, u)
        for _ in range(sweeps):
            u = self.project(np.concatenate([x, u]), strict=False)[self.n:]
            val = self.g(np.concatenate([x, u]))
            if val < best[0]:
                best = (float(val), u)
            if val <= 0.0:
                return best
        import cvxpy as cp

        uv, t = cp.Variable(self.m), cp.Variable()
        y = cp.hstack([x, uv])
        cons = [t >= -1.0]
        for piece in self.pieces:
            cons += cvx_piece_value_le(cp, piece, y, t)
        prob = cp.Problem(cp.Minimize(t), cons)
        prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10,
                   tol_feas=1e-10, max_iter=200)
        if uv.value is not None:
            u = np.asarray(uv.value, dtype=float)
            val = float(self.g(np.concatenate([x, u])))
            if val < best[0]:
                best = (val, u)
        return best

    def project_state(self, x):
        """Euclidean projection onto ``X``; product sets only."""
        if not self.is_product:
            raise NotImplementedError("state projection needs a product set")
        sub = ConstraintSet(self.n, 0, self.state_pieces())
        return sub.project(np.asarray(x, dtype=float))

    def bounds(self, default=np.inf):
        """Per-coordinate (lower, upper) implied by the box pieces."""
        lo = np.full(self.dim, -default)
        hi = np.full(self.dim, default)
        for p in self.pieces:
            for k, (a, b) in p.bounds().items():
                lo[k] = max(lo[k], a)
                hi[k] = min(hi[k], b)
        return lo, hi

    def state_is_bounded(self):
        lo, hi = self.bounds()
        return self.is_product and bool(np.all(np.isfinite(lo[:self.n]))
                                        and np.all(np.isfinite(hi[:self.n])))


def cvx_constraints(cp, piece, y):
    """cvxpy constraints stating ``y in piece`` for a cvxpy vector ``y``."""
    if isinstance(piece, NormBox):
        return [cp.norm(y[list(piece.indices)], "inf") <= piece.radius]
    if isinstance(piece, Box):
        out = []
        for k, lo, hi in zip(piece.indices, piece.lower, piece.upper):
            if np.isfinite(hi):
                out.append(y[k] <= hi)
            if np.isfinite(lo):
                out.append(y[k] >= lo)
        return out
    if isinstance(piece, Halfspace):
        return [piece.a @ y <= piece.b]
    if isinstance(piece, SecondOrderCone):
        return [cp.SOC(y[piece.apex], y[list(piece.indices)])]
    if isinstance(piece, FullSpace):
        return []
    raise TypeError(f"unsupported piece {piece!r}")


def cvx_piece_value_le(cp, piece, y, t):
    """cvxpy constraints stating ``piece.value(y) <= t``."""
    if isinstance(piece, NormBox):
        return [cp.norm(y[list(piece.indices)], "inf") - piece.radius <= t]
    if isinstance(piece, Box):
        out = []
        for k, lo, hi in zip(piece.indices, piece.lower, piece.upper):
            if np.isfinite(hi):
                out.append(y[k] - hi <= t)
            if np.isfinite(lo):
                out.append(lo - y[k] <= t)
        return out
    if isinstance(piece, Halfspace):
        return [piece.a @ y - piece.b <= t]
    if isinstance(piece, SecondOrderCone):
        return [cp.norm(y[list(piece.indices)], 2) - y[piece.apex] <= t]
    if isinstance(piece, FullSpace):
        return []
    raise TypeError(f"unsupported piece {piece!r}")


def full_space(n, m):
    return ConstraintSet(n, m, (FullSpace(),))
