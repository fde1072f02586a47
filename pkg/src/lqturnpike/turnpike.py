"""Empirical measure-turnpike checks.

Pipeline: a stabilizing policy gives a decay witness ``(M0, rho)`` over the
initial set, the witness bounds the accumulated cost gap by ``M``, and the
storage certificate converts ``M`` into the exceedance bound
``count <= M_E / eps`` with ``M_E = (M + spread) / s``.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .analysis import control_gain_m0
from .errors import InfeasibleError, NonConvergenceError, NotDecayingError
from .model import Trajectory, stage_cost
from .ocp import solve_ocp
from .scenarios import cone_feedback

RHO_DEFAULT = 0.1
DEV_FLOOR = 1e-12
ENVELOPE_TOL = 1e-9
BOUND_TOL = 1e-6


@dataclass(frozen=True)
class PolicyRun:
    trajectory: Trajectory
    first_violation: int = None

    @property
    def admissible(self):
        return self.first_violation is None


def simulate_policy(p, policy, x0, N, tol=1e-10):
    """Closed-loop roll-out of ``u = policy(x)``; violations are reported."""
    x = np.empty((N + 1, p.n))
    u = np.empty((N, p.m))
    x[0] = np.asarray(x0, dtype=float)
    first = None
    for i in range(N):
        u[i] = np.asarray(policy(x[i]), dtype=float).reshape(p.m)
        if first is None and p.S.evaluate_g(x[i], u[i]) > tol:
            first = i
        x[i + 1] = p.A @ x[i] + p.B @ u[i]
    if first is None and not p.S.state_contains(x[N], tol=tol):
        first = N
    return PolicyRun(Trajectory(x, u, stage_cost(p, x[:-1], u)), first)


def lqr_policy(p, x_e, u_e):
    """``u = u_e + K (x - x_e)`` from the unconstrained DARE with ``(Q + I, R)``."""
    Qr = p.Q + np.eye(p.n)
    X = sla.solve_discrete_are(p.A, p.B, Qr, p.R)
    K = -np.linalg.solve(p.R + p.B.T @ X @ p.B, p.B.T @ X @ p.A)
    return lambda x: u_e + K @ (np.asarray(x) - x_e)


def make_policy(name, p, x_e, u_e):
    if name == "hold":
        u_e = np.asarray(u_e, dtype=float)
        return lambda x: u_e.copy()
    if name == "lqr":
        return lqr_policy(p, x_e, u_e)
    if name == "cone":
        return cone_feedback
    raise ValueError(f"unknown policy {name!r} (expected hold, lqr or cone)")


@dataclass(frozen=True)
class DecayFit:
    M0: float
    rho: float
    degenerate: bool = False


def _deviations(traj, x_e):
    return np.linalg.norm(traj.x - np.asarray(x_e, dtype=float), axis=1)


def fit_exponential_decay(traj, x_e, skip=0, rho_default=RHO_DEFAULT):
    """Least-squares rate of ``log |x(i) - x_e|`` and the smallest envelope
    constant ``M0`` with ``|x(i) - x_e| <= M0 e^{-rho i}`` for every ``i``.

    Indices before ``skip`` are left out of the rate fit (not the envelope).
    """
    d = _deviations(traj, x_e)
    if np.all(d <= DEV_FLOOR):
        return DecayFit(0.0, rho_default, True)
    if not d[-1] < d[0]:
        raise NotDecayingError(f"deviation grew from {d[0]:.3e} to {d[-1]:.3e}")
    idx = np.arange(d.size)
    keep = (d > DEV_FLOOR) & (idx >= skip)
    if keep.sum() < 2:
        keep = d > DEV_FLOOR
    if keep.sum() >= 2:
        slope = np.polyfit(idx[keep], np.log(d[keep]), 1)[0]
        rho = -slope
    else:
        rho = rho_default
    if not rho > 0.0:
        # Finite-time or non-log-linear convergence: any positive rate works
        # once M0 is inflated to cover the samples.
        rho = rho_default
    M0 = float(np.max(d * np.exp(rho * idx)))
    return DecayFit(M0, float(rho), False)


@dataclass
class StabilizabilityWitness:
    policy: str
    X_tp: np.ndarray
    M0: float
    rho: float
    verified_horizon: int
    degenerate: bool = False
    runs: list = field(default_factory=list, repr=False)

    def envelope_ok(self, x_e, tol=ENVELOPE_TOL):
        for run in self.runs:
            d = _deviations(run.trajectory, x_e)
            if np.any(d > self.M0 * np.exp(-self.rho * np.arange(d.size)) + tol):
                return False
        return True

    def to_dict(self):
        return {"policy": self.policy, "M0": self.M0, "rho": self.rho,
                "verified_horizon": self.verified_horizon, "degenerate": self.degenerate,
                "n_points": int(len(self.X_tp))}


def build_witness(p, policy_name, X_tp, x_e, u_e, horizon=200, skip=0,
                  rho_default=RHO_DEFAULT):
    """Simulate the policy from every point of ``X_tp`` and fit one ``(M0, rho)``.

    ``rho`` is the slowest fitted rate; ``M0`` is then the smallest constant
    whose envelope covers every simulated deviation.
    """
    policy = make_policy(policy_name, p, x_e, u_e)
    runs = [simulate_policy(p, policy, x0, horizon) for x0 in X_tp]
    bad = [k for k, r in enumerate(runs) if not r.admissible]
    if bad:
        raise NotDecayingError(f"policy {policy_name!r} leaves S from X_tp point {bad[0]}")
    fits = [fit_exponential_decay(r.trajectory, x_e, skip, rho_default) for r in runs]
    live = [f for f in fits if not f.degenerate]
    if not live:
        return StabilizabilityWitness(policy_name, np.asarray(X_tp), 0.0, rho_default,
                                      horizon, True, runs)
    rho = min(f.rho for f in live)
    i = np.arange(horizon + 1)
    M0 = max(float(np.max(_deviations(r.trajectory, x_e) * np.exp(rho * i))) for r in runs)
    return StabilizabilityWitness(policy_name, np.asarray(X_tp), M0, rho, horizon, False, runs)


def regularize_control(B, u_series, u_e):
    """``P_{ker B perp} u + P_{ker B} u_e``: same ``B u``, control pulled to ``u_e``."""
    gain = control_gain_m0(B)
    u = np.atleast_2d(np.asarray(u_series, dtype=float))
    u_e = np.asarray(u_e, dtype=float)
    if gain.degenerate:
        return np.tile(u_e, (u.shape[0], 1))
    W = gain.omega_perp_basis
    Wo = gain.omega_basis
    return (u @ W) @ W.T + Wo @ (Wo.T @ u_e)


@dataclass
class CostGapBound:
    M1: float
    M2: float
    M: float
    m0: float
    rho: float
    gaps: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"M1": self.M1, "M2": self.M2, "M": self.M, "m0": self.m0, "rho": self.rho}


def cost_gap_bound(p, witness, x_e, u_e):
    """Lemma-type bound ``sum_i [l(x(i), u(i)) - l_e] <= M`` along the witness."""
    x_e = np.asarray(x_e, dtype=float)
    u_e = np.asarray(u_e, dtype=float)
    gain = control_gain_m0(p.B)
    M0, rho = witness.M0, witness.rho
    normA = float(np.linalg.norm(p.A, 2))
    M1 = 0.0 if gain.degenerate else (M0 * math.exp(-rho) + normA * M0) / gain.m0
    M2 = ((np.linalg.norm(p.Q, 2) * (2 * np.linalg.norm(x_e) + M0) + 2 * np.linalg.norm(p.z)) * M0
          + (np.linalg.norm(p.R, 2) * (2 * np.linalg.norm(u_e) + M1) + 2 * np.linalg.norm(p.v))
          * M1)
    M = M2 / (1.0 - math.exp(-rho))
    ell_e = stage_cost(p, x_e, u_e)
    gaps = []
    for run in witness.runs:
        t = run.trajectory
        ut = regularize_control(p.B, t.u, u_e)
        gaps.append(stage_cost(p, t.x[:-1], ut) - ell_e)
    return CostGapBound(float(M1), float(M2), float(M), float(gain.m0), float(rho), gaps)


def stage_deviation(traj, x_e, u_e):
    """Squared stacked deviation ``|x(i) - x_e|^2 + |u(i) - u_e|^2`` for ``i < N``."""
    dx = traj.x[:traj.N] - np.asarray(x_e, dtype=float)
    du = traj.u - np.asarray(u_e, dtype=float)
    return np.einsum("ij,ij->i", dx, dx) + np.einsum("ij,ij->i", du, du)


def exceedance_count(traj, x_e, u_e, eps):
    return int(np.sum(stage_deviation(traj, x_e, u_e) > eps))


def turnpike_bound(M, sc, terminal_storage_spread, eps):
    """``M_E / eps`` with ``M_E = (M + spread) / s``."""
    return (M + terminal_storage_spread) / sc.s / eps


def thread_count():
    env = os.environ.get("TURNPIKE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class TurnpikeReport:
    cells: list                 # dicts: x0_id, N, eps, count, bound, ok, feasible
    M_E: float
    M: float
    spread: float
    s: float
    worst_ratio: float
    count_spread: dict          # (x0_id, eps) -> max - min count over N
    trajectories: dict = field(default_factory=dict, repr=False)   # (x0_id, N) -> Trajectory

    @property
    def bound_ok(self):
        return all(c["ok"] for c in self.cells)

    @property
    def max_count_spread(self):
        return max(self.count_spread.values(), default=0)

    def to_dict(self):
        return {"M_E": self.M_E, "M": self.M, "terminal_storage_spread": self.spread,
                "s": self.s, "worst_ratio": self.worst_ratio, "bound_ok": self.bound_ok,
                "max_count_spread": self.max_count_spread, "cells": self.cells}


def turnpike_scan(p, X_tp, N_list, eps_list, sc, gap_bound, threads=None, settings=None):
    """Solve every ``(x0, N)`` cell, count exceedances and check ``count <= M_E/eps``.

    Cells are solved concurrently; the report is assembled in
    ``(x0 index, N, eps)`` order.
    """
    X_tp = np.atleast_2d(np.asarray(X_tp, dtype=float))
    jobs = [(k, int(N)) for k in range(len(X_tp)) for N in N_list]

    def run(job):
        k, N = job
        try:
            return job, solve_ocp(p, X_tp[k], N, settings)
        except (InfeasibleError, NonConvergenceError):
            return job, None

    with ThreadPoolExecutor(max_workers=threads or thread_count()) as pool:
        results = dict(pool.map(run, jobs))

    spread = 0.0
    for (k, _), t in results.items():
        if t is not None:
            spread = max(spread, abs(float(sc.V(t.x[-1]) - sc.V(t.x[0]))))
    M_E = (gap_bound.M + spread) / sc.s
    cells, worst = [], 0.0
    per_eps = {}
    for k, N in jobs:
        t = results[(k, N)]
        for eps in eps_list:
            bound = M_E / eps
            if t is None:
                cells.append({"x0_id": k, "N": N, "eps": eps, "count": None,
                              "bound": bound, "ok": False, "feasible": False})
                continue
            cnt = exceedance_count(t, sc.x_e, sc.u_e, eps)
            ok = cnt * eps <= M_E + BOUND_TOL
            worst = max(worst, cnt * eps / M_E if M_E > 0 else (0.0 if cnt == 0 else np.inf))
            cells.append({"x0_id": k, "N": N, "eps": eps, "count": cnt, "bound": bound,
                          "ok": bool(ok), "feasible": True})
            per_eps.setdefault((k, eps), []).append(cnt)
    count_spread = {key: max(v) - min(v) for key, v in per_eps.items()}
    return TurnpikeReport(cells, float(M_E), gap_bound.M, float(spread), sc.s, float(worst),
                          count_spread, results)
