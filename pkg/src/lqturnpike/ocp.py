"""Finite-horizon constrained LQ solves.

``solve_ocp`` runs ADMM on the stage-separable splitting

    minimize  sum_i l(x_i, u_i)   s.t.  dynamics,  y_i = z_i,  z_i in S

where ``y`` carries the dynamics (solved exactly by the structured
``kernels`` LQ solver) and ``z`` the set constraints (stage-wise Dykstra
projection).  The terminal condition ``x_N in X`` is imposed by an auxiliary
cost-free control ``u_N`` with ``(x_N, u_N) in S``, which is exactly
``x_N in X`` for any ``S``.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .constraints import cvx_constraints
from .errors import InfeasibleError, NonConvergenceError
from .model import Trajectory, is_admissible, rollout


@dataclass
class ADMMSettings:
    rho: float = 1.0
    alpha: float = 1.6
    eps_abs: float = 1e-8
    eps_rel: float = 1e-6
    feas_tol: float = 1e-11      # final primal residual, below the 1e-10 admissibility check
    max_iter: int = 50000
    adapt_every: int = 25
    adapt_ratio: float = 10.0
    probe_sweeps: int = 3000


@dataclass(frozen=True)
class ProbeResult:
    feasible: bool
    gap: float
    sweeps: int
    z: np.ndarray


def _stage_rows(p, x0, N):
    y = np.zeros((N + 1, p.n + p.m))
    y[:, :p.n] = rollout(p, x0, np.zeros((N, p.m)))
    return y


def feasibility_probe(p, x0, N, max_sweeps=3000, z0=None):
    """Alternating projections between the dynamics set and ``S^(N+1)``.

    Declares infeasible once the gap has stalled above 1e-6; feasible once it
    drops below 1e-9 relative to the trajectory scale.
    """
    x0 = np.asarray(x0, dtype=float)
    lq = kernels.make_lq_solver(p.A, p.B, np.zeros((p.n + p.m,) * 2), 2.0, N)
    y = _stage_rows(p, x0, N) if z0 is None else z0
    history = []
    z = y
    for k in range(max_sweeps):
        z = p.S.project_many(y, strict=False)
        y = lq.solve(-z, x0)
        gap = float(np.max(np.abs(y - z)))
        history.append(gap)
        scale = max(1.0, float(np.max(np.abs(z))))
        if gap <= 1e-9 * scale:
            return ProbeResult(True, gap, k + 1, z)
        if k >= 40 and gap > 1e-6 * scale and history[-21] - gap <= 1e-4 * gap:
            return ProbeResult(False, gap, k + 1, z)
    return ProbeResult(True, history[-1], max_sweeps, z)


def _linear_terms(p, d_rows, rho, N):
    g = np.empty_like(d_rows)
    g[:N] = p.h - 0.5 * rho * d_rows[:N]
    g[N] = -0.5 * rho * d_rows[N]
    return g


def solve_ocp(p, x0, N, settings=None, z0=None):
    """Admissible minimizer of the horizon-``N`` cost from ``x0``.

    Raises InfeasibleError when the probe finds no admissible control and
    NonConvergenceError when the iteration cap is hit.
    """
    st = settings or ADMMSettings()
    x0 = np.asarray(x0, dtype=float).ravel()
    N = int(N)
    if N < 1:
        raise ValueError("horizon must be >= 1")
    probe = feasibility_probe(p, x0, N, st.probe_sweeps, z0)
    if not probe.feasible:
        raise InfeasibleError(x0, N, probe.gap)

    H = p.H
    rho = st.rho
    lq = kernels.make_lq_solver(p.A, p.B, H, rho, N)
    z = probe.z.copy()
    w = np.zeros_like(z)
    it = 0
    r_prim = r_dual = np.inf
    for it in range(1, st.max_iter + 1):
        y = lq.solve(_linear_terms(p, z - w, rho, N), x0)
        yr = st.alpha * y + (1.0 - st.alpha) * z
        z_new = p.S.project_many(yr + w, strict=False)
        w += yr - z_new
        r_prim = float(np.max(np.abs(y - z_new)))
        r_dual = rho * float(np.max(np.abs(z_new - z)))
        z = z_new
        scale_p = max(1.0, float(np.max(np.abs(y))), float(np.max(np.abs(z))))
        scale_d = max(1.0, rho * float(np.max(np.abs(w))))
        tol_d = min(st.eps_abs, st.eps_rel * scale_d)
        tol_p = min(st.feas_tol, st.eps_rel * scale_p)
        if r_prim <= tol_p and r_dual <= tol_d:
            break
        if it % st.adapt_every == 0:
            ratio = (r_prim / tol_p) / max(r_dual / tol_d, 1e-300)
            new_rho = rho
            if ratio > st.adapt_ratio and rho < 1e6:
                new_rho = rho * 2.0
            elif ratio < 1.0 / st.adapt_ratio and rho > 1e-6:
                new_rho = rho / 2.0
            if new_rho != rho:
                w *= rho / new_rho
                rho = new_rho
                lq = kernels.make_lq_solver(p.A, p.B, H, rho, N)
    else:
        raise NonConvergenceError("ADMM", max(r_prim, r_dual), st.max_iter)

    traj = Trajectory.from_controls(p, x0, y[:N, p.n:])
    info = {"iterations": it, "primal_residual": r_prim, "dual_residual": r_dual,
            "rho": rho, "probe_sweeps": probe.sweeps, "backend": kernels.BACKEND}
    adm = is_admissible(p, traj)
    info["admissible"] = adm.ok
    return Trajectory(traj.x, traj.u, traj.stage_costs, info)


@dataclass(frozen=True)
class CondensedQP:
    """Cost in the stacked controls: ``ubar' P3 ubar + 2 q' ubar + P1``.

    ``q = P2' x0 + (affine terms)``; ``Phi``/``Gamma`` map ``(x0, ubar)`` to
    the stacked states ``x(0..N)``.
    """

    P1: float
    P2: np.ndarray
    P3: np.ndarray
    q: np.ndarray
    Phi: np.ndarray
    Gamma: np.ndarray
    N: int

    def cost(self, ubar):
        ubar = np.asarray(ubar, dtype=float).ravel()
        return float(ubar @ self.P3 @ ubar + 2.0 * self.q @ ubar + self.P1)


def condense(p, x0, N):
    """Eliminate the states through the dynamics."""
    n, m = p.n, p.m
    x0 = np.asarray(x0, dtype=float).ravel()
    Phi = np.zeros(((N + 1) * n, n))
    Gamma = np.zeros(((N + 1) * n, N * m))
    Ai = np.eye(n)
    for i in range(N + 1):
        Phi[i * n:(i + 1) * n] = Ai
        Ai = p.A @ Ai
    for i in range(1, N + 1):
        Gamma[i * n:(i + 1) * n] = p.A @ Gamma[(i - 1) * n:i * n]
        Gamma[i * n:(i + 1) * n, (i - 1) * m:i * m] = p.B
    Phi_s, Gamma_s = Phi[:N * n], Gamma[:N * n]
    Qbar = np.kron(np.eye(N), p.Q)
    Rbar = np.kron(np.eye(N), p.R)
    zbar = np.tile(p.z, N)
    vbar = np.tile(p.v, N)
    P3 = Gamma_s.T @ Qbar @ Gamma_s + Rbar
    P3 = 0.5 * (P3 + P3.T)
    P2 = Phi_s.T @ Qbar @ Gamma_s
    q = P2.T @ x0 + Gamma_s.T @ zbar + vbar
    xs = Phi_s @ x0
    P1 = float(xs @ Qbar @ xs + 2.0 * zbar @ xs + N * p.c)
    return CondensedQP(P1, P2, P3, q, Phi, Gamma, N)


def brute_oracle(p, x0, N):
    """Reference solve of the condensed QP by an interior-point conic solver.

    Independent of :func:`solve_ocp`: no splitting, no projections, no
    Riccati recursion.
    """
    import cvxpy as cp

    x0 = np.asarray(x0, dtype=float).ravel()
    cq = condense(p, x0, N)
    ubar = cp.Variable(N * p.m)
    u_term = cp.Variable(p.m)
    xs = cq.Phi @ x0 + cq.Gamma @ ubar
    cons = []
    for i in range(N + 1):
        xi = xs[i * p.n:(i + 1) * p.n]
        ui = ubar[i * p.m:(i + 1) * p.m] if i < N else u_term
        yi = cp.hstack([xi, ui])
        for piece in p.S.pieces:
            cons += cvx_constraints(cp, piece, yi)
    L = np.linalg.cholesky(cq.P3).T
    obj = cp.Minimize(cp.sum_squares(L @ ubar) + 2.0 * cq.q @ ubar + cq.P1)
    prob = cp.Problem(obj, cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10,
               tol_feas=1e-10, max_iter=500)
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        raise InfeasibleError(x0, N, np.inf)
    if ubar.value is None:
        raise NonConvergenceError(f"oracle ({prob.status})", np.nan, 500)
    traj = Trajectory.from_controls(p, x0, ubar.value.reshape(N, p.m))
    return Trajectory(traj.x, traj.u, traj.stage_costs, {"status": prob.status})
