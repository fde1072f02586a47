import numpy as np
import pytest

from lqturnpike import Problem
from lqturnpike.analysis import (analyze, control_gain_m0, has_unit_modulus_unobservable,
                                 is_detectable, kernel_basis_steady,
                                 steady_cost_positive_definite, unobservable_eigenvalues)


def random_instance(rng, planted_unit=False):
    n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m)) * (rng.uniform(size=(1, m)) < 0.8)
    C = rng.normal(size=(n, n)) * (rng.uniform(size=(n, 1)) < 0.6)
    if planted_unit:
        # eigenvalue 1 with an eigenvector in ker C
        w = rng.normal(size=n)
        w /= np.linalg.norm(w)
        Pw = np.eye(n) - np.outer(w, w)
        A = Pw @ A @ Pw + np.outer(w, w)
        C = C @ Pw
    K = np.triu(rng.normal(size=(m, m))) + 2.0 * np.eye(m)
    return Problem(A=A, B=B, Q=C.T @ C, R=K.T @ K, C=C, K=K)


def test_example_systems(ex1, ex2):
    rep1 = analyze(ex1)
    assert rep1.detectable
    assert not rep1.unit_modulus_unobservable
    assert rep1.steady_cost_pd
    rep2 = analyze(ex2)
    # the rotating pair (x1, x2) is unobservable but decays at rate e^-0.1
    mods = sorted(abs(g) for g, _ in rep2.unobservable)
    np.testing.assert_allclose(mods, [np.exp(-0.1)] * 2)
    assert rep2.detectable
    assert rep2.steady_cost_pd


def test_negative_control():
    p = Problem(A=[[1.0]], B=[[1.0]], Q=[[0.0]], R=[[1.0]], C=[[0.0]])
    assert has_unit_modulus_unobservable(p.A, p.C)
    assert not is_detectable(p.A, p.C)
    assert not steady_cost_positive_definite(p)


def test_lemma1_equivalence_generic_and_planted():
    rng = np.random.default_rng(2024)
    n_planted = 0
    for k in range(200):
        planted = k % 4 == 0
        p = random_instance(rng, planted)
        n_planted += planted
        assert steady_cost_positive_definite(p) == (not has_unit_modulus_unobservable(p.A, p.C))
    assert n_planted == 50


def test_lemma1_fails_for_unit_modulus_other_than_one():
    # gamma = -1 is unobservable with |gamma| = 1, yet the steady set is {0} x R
    # and R > 0 makes the steady cost positive definite: the equivalence only
    # holds for the eigenvalue 1 itself.
    p = Problem(A=[[-1.0]], B=[[0.0]], Q=[[0.0]], R=[[1.0]], C=[[0.0]])
    assert has_unit_modulus_unobservable(p.A, p.C)
    assert steady_cost_positive_definite(p)


def test_pbh_consistency():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        A = rng.normal(size=(n, n)) * rng.uniform(0.3, 1.5)
        C = rng.normal(size=(int(rng.integers(1, n + 1)), n)) * (rng.uniform() < 0.7)
        if is_detectable(A, C):
            assert not has_unit_modulus_unobservable(A, C)
        for gamma, w in unobservable_eigenvalues(A, C):
            assert np.linalg.norm(A @ w - gamma * w) <= 1e-8
            assert np.linalg.norm(C @ w) <= 1e-8


def test_control_gain():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        B = rng.normal(size=(n, m))
        gain = control_gain_m0(B)
        W = gain.omega_perp_basis
        for _ in range(50):
            w = W @ rng.normal(size=W.shape[1])
            assert np.linalg.norm(B @ w) >= (gain.m0 - 1e-10) * np.linalg.norm(w)
        if gain.omega_basis.size:
            assert np.linalg.norm(B @ gain.omega_basis) <= 1e-10
    assert control_gain_m0(np.zeros((2, 2))).degenerate


def test_kernel_basis():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = np.array([[0.0], [1.0]])
    V = kernel_basis_steady(A, B)
    assert V.shape == (3, 1)
    np.testing.assert_allclose(np.hstack([A - np.eye(2), B]) @ V, 0.0, atol=1e-14)


@pytest.mark.parametrize("gamma", [1.0, -1.0])
def test_unit_eigenvalues_detected(gamma):
    A = np.diag([gamma, 0.5])
    C = np.array([[0.0, 1.0]])
    assert has_unit_modulus_unobservable(A, C)
    assert not is_detectable(A, C)
