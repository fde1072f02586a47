"""Spectral and structural tests on (A, B, C)."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

RANK_RTOL = 1e-9
UNIT_TOL = 1e-8


def _null_vector(M, rtol=RANK_RTOL):
    """A unit null vector of ``M`` if rank(M) < ncols, else ``None``."""
    _, s, vh = np.linalg.svd(M)
    ncols = M.shape[1]
    smax = s[0] if s.size else 0.0
    full = np.zeros(ncols)
    full[:s.size] = s
    if smax == 0.0:
        return vh[-1].conj()
    if full[-1] <= rtol * smax:
        return vh[-1].conj()
    return None


def _distinct(values, tol=1e-8):
    out = []
    for val in values:
        if not any(abs(val - w) <= tol * max(1.0, abs(w)) for w in out):
            out.append(val)
    return out


def unobservable_eigenvalues(A, C, rtol=RANK_RTOL):
    """Eigenvalues of ``A`` with an eigenvector in ``ker C``.

    Returns a list of ``(gamma, witness)`` pairs, one per distinct eigenvalue;
    the witness is real whenever ``gamma`` is.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, A.shape[0])
    n = A.shape[0]
    out = []
    for gamma in _distinct(np.linalg.eigvals(A)):
        if abs(gamma.imag) <= 1e-12 * max(1.0, abs(gamma)):
            gamma = complex(gamma.real, 0.0)
        M = np.vstack([A - gamma * np.eye(n), C]).astype(complex)
        if gamma.imag == 0.0:
            M = M.real
        w = _null_vector(M, rtol)
        if w is None:
            continue
        if gamma.imag == 0.0:
            w = np.real(w)
        w = w / np.linalg.norm(w)
        out.append((gamma, w))
    return out


def has_unit_modulus_unobservable(A, C, tol=UNIT_TOL):
    return any(abs(abs(g) - 1.0) <= tol for g, _ in unobservable_eigenvalues(A, C))


def is_detectable(A, C, tol=UNIT_TOL, rtol=RANK_RTOL):
    """PBH test: every eigenvalue with modulus >= 1 is observable."""
    return all(abs(g) < 1.0 - tol for g, _ in unobservable_eigenvalues(A, C, rtol))


def kernel_basis_steady(A, B, rtol=RANK_RTOL):
    """Orthonormal basis (columns) of ``ker [A - I, B]``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    M = np.hstack([A - np.eye(A.shape[0]), B])
    if not np.any(M):
        return np.eye(M.shape[1])
    return sla.null_space(M, rcond=rtol)


def reduced_hessian(p):
    V = kernel_basis_steady(p.A, p.B)
    return V, V.T @ p.H @ V


def steady_cost_positive_definite(p, tol=1e-10):
    """Whether ``diag(Q, R)`` is positive definite on ``ker [A - I, B]``."""
    _, Hr = reduced_hessian(p)
    if Hr.size == 0:
        return True
    return bool(np.linalg.eigvalsh(Hr)[0] > tol * (1.0 + np.linalg.norm(p.H, 2)))


@dataclass(frozen=True)
class ControlGain:
    m0: float
    omega_basis: np.ndarray       # ker B, columns
    omega_perp_basis: np.ndarray  # (ker B)^perp, columns
    degenerate: bool              # B == 0

    def project_omega(self, u):
        W = self.omega_basis
        return W @ (W.T @ u)

    def project_omega_perp(self, u):
        W = self.omega_perp_basis
        return W @ (W.T @ u)


def control_gain_m0(B, rtol=RANK_RTOL):
    """Smallest nonzero singular value of ``B`` and the ``ker B`` split."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    m = B.shape[1]
    _, s, vh = np.linalg.svd(B)
    smax = s[0] if s.size else 0.0
    r = int(np.sum(s > rtol * smax)) if smax > 0 else 0
    if r == 0:
        return ControlGain(0.0, np.eye(m), np.zeros((m, 0)), True)
    return ControlGain(float(s[r - 1]), vh[r:].T.copy(), vh[:r].T.copy(), False)


@dataclass(frozen=True)
class SpectralReport:
    eigenvalues: list
    unobservable: list        # [(gamma, modulus)]
    detectable: bool
    unit_modulus_unobservable: bool
    kernel_basis: np.ndarray
    steady_cost_pd: bool
    gain: ControlGain

    def to_dict(self):
        def cplx(z):
            return {"re": float(np.real(z)), "im": float(np.imag(z))}
        return {
            "eigenvalues": [dict(cplx(g), modulus=float(abs(g))) for g in self.eigenvalues],
            "unobservable": [dict(cplx(g), modulus=float(abs(g))) for g, _ in self.unobservable],
            "detectable": self.detectable,
            "unit_modulus_unobservable": self.unit_modulus_unobservable,
            "kernel_basis": self.kernel_basis.T.tolist(),
            "steady_cost_positive_definite": self.steady_cost_pd,
            "m0": self.gain.m0,
            "degenerate_B": self.gain.degenerate,
            "omega_basis": self.gain.omega_basis.T.tolist(),
        }


def analyze(p):
    unobs = unobservable_eigenvalues(p.A, p.C)
    return SpectralReport(
        eigenvalues=list(np.linalg.eigvals(p.A)),
        unobservable=unobs,
        detectable=all(abs(g) < 1.0 - UNIT_TOL for g, _ in unobs),
        unit_modulus_unobservable=any(abs(abs(g) - 1.0) <= UNIT_TOL for g, _ in unobs),
        kernel_basis=kernel_basis_steady(p.A, p.B),
        steady_cost_pd=steady_cost_positive_definite(p),
        gain=control_gain_m0(p.B),
    )
