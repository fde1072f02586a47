"""Quadratic storage functions certifying strict (pre-)dissipativity.

The storage is ``V(x) = x'Px + w'x`` with ``P`` from the unconstrained LMI

    M(P, s) = [[A'PA - P - Q + sI, A'PB], [B'PA, B'PB - R + sI]]  <=  0

and ``w = -lambda - 2 P x_e`` from the steady-state KKT multipliers.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt

from .analysis import is_detectable
from .errors import NoFeasibleRateError, StorageInfeasibleError
from .model import stage_cost

LMI_TOL = 1e-9
INEQ_TOL = 1e-8
SUBGRAD_TOL = 1e-9
SAMPLE_FEAS_TOL = 1e-12
# A rate s is certified with a P computed for (1 + STRICT_SLACK) * s, which
# leaves M(P, s) <= -STRICT_SLACK * s * I; without slack the Riccati solution
# sits exactly on the LMI boundary.
STRICT_SLACK = 1e-2
PD_WEIGHT = 1.0
INFEASIBLE_MARGIN = 1e-6


def lmi_matrix(p, P, s):
    A, B = p.A, p.B
    APB = A.T @ P @ B
    M = np.block([[A.T @ P @ A - P - p.Q + s * np.eye(p.n), APB],
                  [APB.T, B.T @ P @ B - p.R + s * np.eye(p.m)]])
    return 0.5 * (M + M.T)


def lmi_margin(p, P, s):
    """``lambda_max(M(P, s))``; feasible iff ``<= 0``."""
    return float(np.linalg.eigvalsh(lmi_matrix(p, P, s))[-1])


def _riccati_candidate(p, s):
    """Minimal LMI solution ``P = -X`` with ``X`` the stabilizing DARE solution."""
    Rs = p.R - s * np.eye(p.m)
    if np.linalg.eigvalsh(Rs)[0] <= 0.0:
        return None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            X = sla.solve_discrete_are(p.A, p.B, p.Q - s * np.eye(p.n), Rs)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(X)):
        return None
    return -0.5 * (X + X.T)


def _sym_from_vec(theta, n):
    P = np.zeros((n, n))
    iu = np.triu_indices(n)
    P[iu] = theta
    return P + np.triu(P, 1).T


def _vec_from_sym(P):
    return P[np.triu_indices(P.shape[0])]


def _lmi_descent(p, s, P0, require_pd, temps=(1e-1, 1e-2, 1e-3, 1e-4)):
    """Minimize the largest eigenvalue of ``diag(M(P, s), -kappa P)``.

    The max eigenvalue is smoothed by log-sum-exp at a decreasing temperature
    and minimized over symmetric ``P`` with L-BFGS; returns as soon as the
    unsmoothed value is negative.
    """
    n = p.n
    F = np.hstack([p.A, p.B])
    E = np.vstack([np.eye(n), np.zeros((p.m, n))])
    iu = np.triu_indices(n)
    wsym = np.where(iu[0] == iu[1], 1.0, 2.0)

    def blocks(P):
        M = lmi_matrix(p, P, s)
        wm, vm = np.linalg.eigh(M)
        if require_pd:
            wp, vp = np.linalg.eigh(-PD_WEIGHT * P)
        else:
            wp, vp = np.empty(0), np.empty((n, 0))
        return wm, vm, wp, vp

    def hard(P):
        wm, _, wp, _ = blocks(P)
        return max(wm[-1], wp[-1] if wp.size else -np.inf)

    scale = 1.0 + np.linalg.norm(p.H, 2)
    theta = _vec_from_sym(P0)
    best = (hard(P0), theta)
    for t_rel in temps:
        tau = t_rel * scale

        def fun(th):
            P = _sym_from_vec(th, n)
            wm, vm, wp, vp = blocks(P)
            lam = np.concatenate([wm, wp])
            top = lam.max()
            e = np.exp((lam - top) / tau)
            f = top + tau * np.log(e.sum())
            wt = e / e.sum()
            Fv = F @ vm
            Ev = E.T @ vm
            G = (Fv * wt[:wm.size]) @ Fv.T - (Ev * wt[:wm.size]) @ Ev.T
            if wp.size:
                G -= PD_WEIGHT * (vp * wt[wm.size:]) @ vp.T
            return f, G[iu] * wsym

        res = sopt.minimize(fun, theta, jac=True, method="L-BFGS-B",
                            options={"maxiter": 500, "gtol": 1e-14, "ftol": 1e-15})
        theta = res.x
        val = hard(_sym_from_vec(theta, n))
        if val < best[0]:
            best = (val, theta)
        if val < 0.0:
            break
        # The smoothed objective is convex and overestimates lambda_max by at
        # most tau * log(k): a positive minimum minus that gap proves the LMI
        # infeasible, so colder temperatures cannot help.
        if res.fun - tau * np.log(n + p.m + (n if require_pd else 0)) > INFEASIBLE_MARGIN * scale:
            break
    return _sym_from_vec(best[1], n), best[0]


def _strictly_feasible(p, P, s, require_pd):
    if lmi_margin(p, P, s) >= 0.0:
        return False
    return not require_pd or np.linalg.eigvalsh(P)[0] > 0.0


def find_storage_matrix(p, s, require_pd=None):
    """Symmetric ``P`` with ``M(P, s)`` negative definite.

    Route 1 is the Riccati solution for the shifted cost at a slightly larger
    rate; route 2 (also used when detectability asks for ``P > 0`` and route 1
    is indefinite) is a direct eigenvalue descent.  Raises
    StorageInfeasibleError when neither finds a strictly feasible ``P``.
    """
    if s <= 0:
        raise ValueError("dissipation rate must be positive")
    if require_pd is None:
        require_pd = is_detectable(p.A, p.C)
    P = _riccati_candidate(p, (1.0 + STRICT_SLACK) * s)
    if P is not None and _strictly_feasible(p, P, s, require_pd):
        return P
    P0 = P if P is not None else np.zeros((p.n, p.n))
    P2, _ = _lmi_descent(p, s, P0, require_pd)
    if _strictly_feasible(p, P2, s, require_pd):
        return P2
    margin = lmi_margin(p, P2, s)
    raise StorageInfeasibleError(s, margin)


def max_dissipation_rate(p, iters=40, s_min=1e-12, require_pd=None):
    """Largest certified rate by bisection on ``[s_min, lambda_min(R)]``."""
    if require_pd is None:
        require_pd = is_detectable(p.A, p.C)
    try:
        P_lo = find_storage_matrix(p, s_min, require_pd)
    except StorageInfeasibleError as exc:
        raise NoFeasibleRateError(f"no storage matrix even at s={s_min:g}") from exc
    lo, hi = s_min, float(np.linalg.eigvalsh(p.R)[0])
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        try:
            P_lo = find_storage_matrix(p, mid, require_pd)
            lo = mid
        except StorageInfeasibleError:
            hi = mid
    return lo, P_lo


@dataclass
class StorageCertificate:
    P: np.ndarray
    w: np.ndarray
    s: float
    lmi_margin: float
    P_positive_definite: bool
    lower_bound_on_X: float
    x_e: np.ndarray
    u_e: np.ndarray
    mu: float = 0.0
    nu: np.ndarray = field(default=None)
    ell_e: float = 0.0

    def V(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.P, x) + x @ self.w

    @property
    def bounded_below(self):
        return bool(np.isfinite(self.lower_bound_on_X))

    def to_dict(self):
        return {
            "P": self.P.tolist(), "w": self.w.tolist(), "s": float(self.s),
            "lmi_margin": float(self.lmi_margin),
            "P_positive_definite": bool(self.P_positive_definite),
            "lower_bound_on_X": (float(self.lower_bound_on_X)
                                 if np.isfinite(self.lower_bound_on_X) else "-inf"),
            "x_e": self.x_e.tolist(), "u_e": self.u_e.tolist(),
            "mu": float(self.mu), "nu": None if self.nu is None else self.nu.tolist(),
        }


def state_radius(S):
    """Euclidean radius of the bounding box of ``X`` (``inf`` if unbounded)."""
    lo, hi = S.bounds()
    lo, hi = lo[:S.n], hi[:S.n]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        return np.inf
    return float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))


def build_storage(p, cert, P, s):
    """Assemble ``V`` from a KKT certificate and a feasible ``(P, s)``."""
    P = 0.5 * (np.asarray(P, dtype=float) + np.asarray(P, dtype=float).T)
    w = -cert.lam - 2.0 * P @ cert.x_e
    eig = np.linalg.eigvalsh(P)
    pd = bool(eig[0] > 0.0)
    if pd:
        lower = float(-0.25 * w @ np.linalg.solve(P, w))
    else:
        r = state_radius(p.S)
        lower = min(0.0, eig[0]) * r ** 2 - np.linalg.norm(w) * r if np.isfinite(r) else -np.inf
    return StorageCertificate(P, w, float(s), lmi_margin(p, P, s), pd, float(lower),
                              cert.x_e.copy(), cert.u_e.copy(), float(cert.mu),
                              None if cert.nu is None else np.asarray(cert.nu, float).copy(),
                              stage_cost(p, cert.x_e, cert.u_e))


@dataclass
class DissipativityReport:
    ok: bool
    n_samples: int
    violations: int
    worst_margin: float
    worst_point: np.ndarray
    subgradient_violations: int
    worst_subgradient: float
    lmi_margin: float

    def to_dict(self):
        return {"ok": self.ok, "n_samples": self.n_samples, "violations": self.violations,
                "worst_margin": self.worst_margin,
                "worst_point": self.worst_point.tolist(),
                "subgradient_violations": self.subgradient_violations,
                "worst_subgradient": self.worst_subgradient,
                "lmi_margin": self.lmi_margin}


def sample_stage_set(p, center, n_samples, seed=42, radius=10.0, boundary_ratio=0.25,
                     max_rounds=20):
    """Points of ``S``: box samples projected onto ``S``, a quarter of them
    drawn from an enlarged box so their projections land on the boundary.

    Projections are only a means of landing in ``S``: rows whose Dykstra
    iterate has not reached ``S`` (slow, tangential intersections) are
    rejected and redrawn instead of being trusted.
    """
    rng = np.random.default_rng(seed)
    lo, hi = p.S.bounds()
    lo = np.where(np.isfinite(lo), lo, center - radius)
    hi = np.where(np.isfinite(hi), hi, center + radius)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    kept, have = [], 0
    for _ in range(max_rounds):
        need = n_samples - have
        if need <= 0:
            break
        n_bdry = int(round(boundary_ratio * need))
        inner = rng.uniform(lo, hi, size=(need - n_bdry, lo.size))
        outer = mid + 2.0 * rng.uniform(-half, half, size=(n_bdry, lo.size))
        Y = p.S.project_many(np.vstack([inner, outer]), strict=False)
        Y = Y[np.atleast_1d(p.S.g(Y)) <= SAMPLE_FEAS_TOL]
        kept.append(Y)
        have += Y.shape[0]
    Y = np.vstack(kept)[:n_samples]
    Y[0] = np.concatenate([center[:p.n], center[p.n:]])
    return Y


def verify_strict_dissipativity(sc, p, n_samples=10_000, seed=42, radius=10.0):
    """Check the dissipation inequality and the subgradient step on samples of S."""
    ye = np.concatenate([sc.x_e, sc.u_e])
    Y = sample_stage_set(p, ye, n_samples, seed, radius)
    X, U = Y[:, :p.n], Y[:, p.n:]
    Xn = X @ p.A.T + U @ p.B.T
    D = Y - ye
    lhs = sc.V(Xn) - sc.V(X)
    rhs = stage_cost(p, X, U) - sc.ell_e - sc.s * np.einsum("ij,ij->i", D, D)
    margin = lhs - rhs
    bad = margin > INEQ_TOL
    if sc.nu is not None and sc.mu != 0.0:
        sub = sc.mu * (D @ sc.nu)
    else:
        sub = np.zeros(len(Y))
    bad_sub = sub > SUBGRAD_TOL
    k = int(np.argmax(margin))
    return DissipativityReport(
        ok=bool(not bad.any() and not bad_sub.any()), n_samples=len(Y),
        violations=int(bad.sum()), worst_margin=float(margin[k]), worst_point=Y[k],
        subgradient_violations=int(bad_sub.sum()), worst_subgradient=float(sub.max()),
        lmi_margin=lmi_margin(p, sc.P, sc.s))


AUTO_RATE_FRACTION = 0.5


def certify(p, cert, s=None, fraction=AUTO_RATE_FRACTION):
    """Storage certificate at rate ``s``, or at ``fraction * s*`` when omitted.

    Backing off from the maximal rate keeps ``P`` well conditioned: at ``s*``
    the LMI is only marginally feasible and ``P`` tends to be near-singular.
    """
    if s is None:
        s_max, _ = max_dissipation_rate(p)
        s = fraction * s_max
    P = find_storage_matrix(p, s)
    return build_storage(p, cert, P, s)
