"""Constrained optimal steady state and its KKT certificate."""
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize as sopt

from .analysis import has_unit_modulus_unobservable, kernel_basis_steady
from .errors import (HypothesisViolatedError, InfeasibleSteadyStateError,
                     NonConvergenceError, SingularReducedHessianError)
from .model import stage_cost

ACTIVE_TOL = 1e-8
KKT_TOL = 1e-6


class _KernelSetProjector:
    """Projection onto ``ker[A - I, B]`` intersected with ``S`` (Dykstra)."""

    def __init__(self, S, V, tol=1e-13, maxit=100000):
        self.S, self.V = S, V
        self.tol, self.maxit = tol, maxit
        self.trivial = all(type(p).__name__ == "FullSpace" for p in S.pieces)

    def __call__(self, y):
        V = self.V
        x = V @ (V.T @ y)
        if self.trivial:
            return x
        pS = np.zeros_like(y)
        pL = np.zeros_like(y)
        x = y.copy()
        for _ in range(self.maxit):
            t = x + pS
            s = self.S.project(t, tol=self.tol * 1e-2, strict=False)
            pS = t - s
            t2 = s + pL
            x_new = V @ (V.T @ t2)
            pL = t2 - x_new
            change = np.max(np.abs(x_new - x))
            x = x_new
            if change <= self.tol and np.max(np.abs(s - x)) <= 10 * self.tol:
                return x
        if np.max(np.abs(s - x)) > 1e-9:
            raise NonConvergenceError("kernel/set projection", float(np.max(np.abs(s - x))),
                                      self.maxit)
        return x

    def gap(self, y, sweeps=2000):
        """Alternating-projection distance between the subspace and ``S``."""
        V = self.V
        x = V @ (V.T @ y)
        gap = np.inf
        for _ in range(sweeps):
            s = self.S.project(x, strict=False)
            new_gap = float(np.linalg.norm(s - x))
            x = V @ (V.T @ s)
            if new_gap <= 1e-12 or (np.isfinite(gap) and gap - new_gap <= 1e-14 * max(1.0, gap)):
                return new_gap
            gap = new_gap
        return gap


def global_steady_state(p):
    """Minimizer of the stage cost over all steady pairs (no set constraint)."""
    V = kernel_basis_steady(p.A, p.B)
    Hr = V.T @ p.H @ V
    hr = V.T @ p.h
    w = np.linalg.eigvalsh(Hr) if Hr.size else np.array([1.0])
    if w[0] <= 1e-12 * (1.0 + abs(w[-1])):
        raise SingularReducedHessianError(
            f"reduced Hessian not positive definite (min eigenvalue {w[0]:.3e})")
    y = V @ np.linalg.solve(Hr, -hr)
    return y[:p.n], y[p.n:]


def solve_steady_state(p, start=None, tol=1e-9, maxit=200000, c_armijo=1e-4):
    """Constrained optimal steady state by projected gradient on the kernel.

    Raises HypothesisViolatedError when (A, C) has an unobservable eigenvalue
    on the unit circle and InfeasibleSteadyStateError when no steady pair
    lies in ``S``.
    """
    if has_unit_modulus_unobservable(p.A, p.C):
        raise HypothesisViolatedError("(A, C) has an unobservable eigenvalue of modulus 1")
    V = kernel_basis_steady(p.A, p.B)
    Hr = V.T @ p.H @ V
    hr = V.T @ p.h
    proj = _KernelSetProjector(p.S, V)

    try:
        xg, ug = global_steady_state(p)
        y_global = np.concatenate([xg, ug])
    except SingularReducedHessianError:
        y_global = np.zeros(p.n + p.m)
    if proj.gap(y_global) > 1e-7:
        raise InfeasibleSteadyStateError("no steady pair satisfies the stage constraints")

    def f(th):
        return th @ Hr @ th + 2.0 * hr @ th

    y0 = y_global if start is None else np.asarray(start, dtype=float)
    th = V.T @ proj(y0)
    L = 2.0 * max(np.linalg.eigvalsh(Hr)[-1], 1e-12)
    for _ in range(maxit):
        grad = 2.0 * (Hr @ th + hr)
        t = 1.0 / L
        fth = f(th)
        while True:
            th_new = V.T @ proj(V @ (th - t * grad))
            if f(th_new) <= fth + c_armijo * grad @ (th_new - th) + 1e-15 * abs(fth) or t < 1e-12:
                break
            t *= 0.5
        gmap = np.linalg.norm(th - th_new) / t
        th = th_new
        if gmap <= tol:
            y = V @ th
            return y[:p.n], y[p.n:]
    raise NonConvergenceError("steady-state projected gradient", gmap, maxit)


@dataclass
class SteadyStateCertificate:
    x_e: np.ndarray
    u_e: np.ndarray
    lam: np.ndarray
    mu: float
    nu: np.ndarray
    residuals: dict
    optimal_value: float
    g_value: float
    pieces: list = field(default_factory=list)

    @property
    def boundary(self):
        return abs(self.g_value) <= ACTIVE_TOL

    @property
    def ok(self):
        return max(self.residuals.values()) <= KKT_TOL and self.mu >= -1e-10

    def to_dict(self):
        return {
            "x_e": self.x_e.tolist(), "u_e": self.u_e.tolist(),
            "lambda": self.lam.tolist(), "mu": float(self.mu), "nu": self.nu.tolist(),
            "g": float(self.g_value), "boundary": bool(self.boundary),
            "pieces": list(self.pieces), "optimal_value": float(self.optimal_value),
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "ok": bool(self.ok),
        }


def _kkt_residuals(p, y, lam, mu, nu):
    x, u = y[:p.n], y[p.n:]
    r = 2.0 * (p.H @ y + p.h)
    M = np.vstack([p.A.T - np.eye(p.n), p.B.T])
    g = p.S.g(y)
    g_fin = g if np.isfinite(g) else -1.0
    return {
        "stationarity": float(np.linalg.norm(r + M @ lam + mu * nu)),
        "steadiness": float(np.linalg.norm(p.A @ x + p.B @ u - x)),
        "complementarity": float(abs(mu * g_fin)),
        "feasibility": float(max(g_fin, 0.0)),
    }


def kkt_certificate(p, x_e, u_e, active_tol=ACTIVE_TOL):
    """Multipliers ``(lambda, mu, nu)`` for the steady-state KKT system.

    Inactive constraint: ``mu = 0`` and ``lambda`` by least squares.  Active:
    first the lowest-index active piece's subgradient with a scalar
    ``mu >= 0``; if that leaves a residual, a nonnegative combination of all
    active extreme subgradients (folded into one ``mu * nu``).
    """
    y = np.concatenate([np.asarray(x_e, dtype=float), np.asarray(u_e, dtype=float)])
    r = 2.0 * (p.H @ y + p.h)
    M = np.vstack([p.A.T - np.eye(p.n), p.B.T])
    Mp = np.linalg.pinv(M, rcond=1e-12)
    Pperp = np.eye(p.n + p.m) - M @ Mp
    g = p.S.g(y)
    value = stage_cost(p, y[:p.n], y[p.n:])
    nu0, j0 = p.S.subgradient(y) if p.S.pieces else (np.zeros(p.n + p.m), None)

    def finish(mu, nu, pieces):
        lam = -Mp @ (r + mu * nu)
        res = _kkt_residuals(p, y, lam, mu, nu)
        return SteadyStateCertificate(y[:p.n].copy(), y[p.n:].copy(), lam, float(mu), nu,
                                      res, value, float(g) if np.isfinite(g) else -np.inf,
                                      pieces)

    if not np.isfinite(g) or g < -active_tol:
        return finish(0.0, nu0, [])

    a = Pperp @ nu0
    b = Pperp @ r
    mu = max(0.0, -(a @ b) / (a @ a)) if a @ a > 1e-24 else 0.0
    best = finish(mu, nu0, [j0])
    if best.residuals["stationarity"] <= 1e-9 * (1.0 + np.linalg.norm(r)):
        return best

    gens = p.S.active_generators(y, tol=max(active_tol, 1e-9))
    if gens:
        G = np.column_stack([gv for _, gv in gens])
        weights, _ = sopt.nnls(Pperp @ G, -b, maxiter=50 * G.shape[1])
        mu_tot = float(weights.sum())
        if mu_tot > 0.0:
            nu = G @ weights / mu_tot
            used = sorted({j for (j, _), wgt in zip(gens, weights) if wgt > 0.0})
            alt = finish(mu_tot, nu, used)
            if alt.residuals["stationarity"] < best.residuals["stationarity"]:
                best = alt
    if not best.ok:
        warnings.warn(f"KKT certificate residual {best.residuals['stationarity']:.3e} "
                      "exceeds tolerance", RuntimeWarning, stacklevel=2)
    return best


@dataclass(frozen=True)
class KKTReport:
    ok: bool
    residuals: dict
    sign_ok: bool

    def to_dict(self):
        return {"ok": self.ok, "sign_ok": self.sign_ok,
                "residuals": {k: float(v) for k, v in self.residuals.items()}}


def verify_kkt(cert, p, tol=KKT_TOL):
    """Recompute the four KKT residuals from the certificate's raw fields."""
    y = np.concatenate([cert.x_e, cert.u_e])
    res = _kkt_residuals(p, y, cert.lam, cert.mu, cert.nu)
    sign_ok = cert.mu >= -1e-10
    return KKTReport(bool(sign_ok and max(res.values()) <= tol), res, bool(sign_ok))
