import numpy as np
import pytest

from instances import random_problem
from lqturnpike import Problem
from lqturnpike.analysis import kernel_basis_steady
from lqturnpike.constraints import ConstraintSet, Halfspace, NormBox
from lqturnpike.errors import HypothesisViolatedError, InfeasibleSteadyStateError
from lqturnpike.model import stage_cost
from lqturnpike.steady import (global_steady_state, kkt_certificate, solve_steady_state,
                               verify_kkt)


def test_example1_steady_state(ex1):
    x_e, u_e = solve_steady_state(ex1)
    np.testing.assert_allclose(np.concatenate([x_e, u_e]), 0.0, atol=1e-8)
    cert = kkt_certificate(ex1, x_e, u_e)
    assert verify_kkt(cert, ex1).ok
    assert not cert.boundary and cert.mu == 0.0


def test_example2_boundary_certificate(ex2):
    x_e, u_e = solve_steady_state(ex2)
    np.testing.assert_allclose(np.concatenate([x_e, u_e]), 0.0, atol=1e-8)
    xg, ug = global_steady_state(ex2)
    np.testing.assert_allclose(xg, [0.0, 0.0, -1.0], atol=1e-12)
    np.testing.assert_allclose(ug, [0.0], atol=1e-12)
    cert = kkt_certificate(ex2, x_e, u_e)
    assert cert.boundary
    assert cert.mu == pytest.approx(2.0, abs=1e-6)
    np.testing.assert_allclose(cert.lam, [0.0, 0.0, 2.0], atol=1e-6)
    assert verify_kkt(cert, ex2).ok


def sample_steady_pairs(p, rng, count, scale=3.0):
    V = kernel_basis_steady(p.A, p.B)
    Y = rng.normal(scale=scale, size=(count, V.shape[1])) @ V.T
    return Y[p.S.g(Y) <= 0.0]


def test_random_instances_uniqueness_and_optimality():
    rng = np.random.default_rng(5)
    for _ in range(8):
        p = random_problem(rng)
        x_e, u_e = solve_steady_state(p)
        y_e = np.concatenate([x_e, u_e])
        cert = kkt_certificate(p, x_e, u_e)
        assert verify_kkt(cert, p).ok
        # uniqueness: projected gradient from random starts lands on the same pair
        for _ in range(10):
            xs, us = solve_steady_state(p, start=rng.normal(scale=3.0, size=p.n + p.m))
            assert np.max(np.abs(np.concatenate([xs, us]) - y_e)) <= 1e-7
        # optimal value is a lower bound over sampled feasible steady pairs
        Y = sample_steady_pairs(p, rng, 10_000)
        vals = stage_cost(p, Y[:, :p.n], Y[:, p.n:])
        assert np.all(cert.optimal_value <= vals + 1e-8)


def test_midpoint_strict_improvement():
    rng = np.random.default_rng(9)
    checked = 0
    for _ in range(10):
        p = random_problem(rng)
        Y = sample_steady_pairs(p, rng, 400, scale=1.0)
        for a, b in zip(Y[0::2], Y[1::2]):
            if np.linalg.norm(a - b) < 1e-6:
                continue
            mid = 0.5 * (a + b)
            n = p.n
            lhs = stage_cost(p, mid[:n], mid[n:])
            avg = 0.5 * (stage_cost(p, a[:n], a[n:]) + stage_cost(p, b[:n], b[n:]))
            gap = 0.25 * (np.sum((p.C @ (a[:n] - b[:n])) ** 2)
                          + np.sum((p.K @ (a[n:] - b[n:])) ** 2))
            assert lhs <= avg - gap + 1e-10 * (1 + abs(avg))
            checked += 1
    assert checked > 100


def test_hypothesis_violation():
    p = Problem(A=[[1.0]], B=[[1.0]], Q=[[0.0]], R=[[1.0]], C=[[0.0]])
    with pytest.raises(HypothesisViolatedError):
        solve_steady_state(p)


def test_infeasible_steady_set():
    # steady pairs satisfy x = 2u; the set demands x >= 1 and |u| <= 0.1
    S = ConstraintSet(1, 1, (NormBox((1,), 0.1), Halfspace(np.array([-1.0, 0.0]), -1.0)))
    p = Problem(A=[[0.5]], B=[[0.25]], Q=[[1.0]], R=[[1.0]], S=S)
    with pytest.raises(InfeasibleSteadyStateError):
        solve_steady_state(p)


def test_verify_kkt_detects_corruption(ex2):
    cert = kkt_certificate(ex2, np.zeros(3), np.zeros(1))
    cert.mu = 1.0
    assert not verify_kkt(cert, ex2).ok
