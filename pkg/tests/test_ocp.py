import numpy as np
import pytest

from instances import feasible_start, random_problem
from lqturnpike import kernels
from lqturnpike.errors import InfeasibleError
from lqturnpike.model import Trajectory, is_admissible, stage_cost
from lqturnpike.ocp import ADMMSettings, brute_oracle, condense, feasibility_probe, solve_ocp


def test_condensed_cost_matches_rollout(rng):
    for _ in range(10):
        p = random_problem(rng)
        N = int(rng.integers(1, 7))
        x0 = rng.normal(size=p.n)
        u = rng.normal(size=(N, p.m))
        cq = condense(p, x0, N)
        assert cq.cost(u.ravel()) == pytest.approx(
            Trajectory.from_controls(p, x0, u).cost, rel=1e-12, abs=1e-10)


def test_example1_zero_control(ex1):
    for x0 in ([0.6, -0.5], [0.0, 1.0], [0.7071, 0.7071]):
        t = solve_ocp(ex1, x0, 30)
        assert np.max(np.abs(t.u)) <= 1e-6
        assert t.info["admissible"]


def test_example1_infeasible(ex1):
    for N in (1, 5, 20):
        with pytest.raises(InfeasibleError):
            solve_ocp(ex1, [1.0, 1.0], N)
    assert not feasibility_probe(ex1, [1.0, 1.0], 5).feasible


def test_example2_short_horizon(ex2):
    t = solve_ocp(ex2, [0.0, 0.0, 0.0], 2)
    assert t.cost == pytest.approx(-1.0, abs=1e-4)
    np.testing.assert_allclose(t.u.ravel(), [0.0, -1.0], atol=1e-4)


def test_example2_matches_oracle(ex2):
    t = solve_ocp(ex2, [1.0, 2.0, 3.0], 40)
    o = brute_oracle(ex2, [1.0, 2.0, 3.0], 40)
    assert abs(t.cost - o.cost) <= 1e-5 * (1 + abs(o.cost))


def test_oracle_equivalence_random():
    rng = np.random.default_rng(31)
    done = 0
    while done < 15:
        p = random_problem(rng, kind=["box", "cone", "halfspace"][done % 3])
        N = int(rng.integers(1, 9))
        x0 = feasible_start(rng, p)
        try:
            t = solve_ocp(p, x0, N)
        except InfeasibleError:
            with pytest.raises(InfeasibleError):
                brute_oracle(p, x0, N)
            continue
        o = brute_oracle(p, x0, N)
        assert abs(t.cost - o.cost) <= 1e-5 * (1 + abs(o.cost))
        assert is_admissible(p, t)
        done += 1


def test_uniqueness_probe():
    rng = np.random.default_rng(4)
    done = 0
    while done < 6:
        p = random_problem(rng)
        N = int(rng.integers(2, 8))
        x0 = feasible_start(rng, p)
        try:
            t1 = solve_ocp(p, x0, N)
        except InfeasibleError:
            continue
        z0 = rng.normal(scale=2.0, size=(N + 1, p.n + p.m))
        t2 = solve_ocp(p, x0, N, z0=z0)
        assert np.max(np.abs(t1.u - t2.u)) <= 1e-5
        done += 1


def test_dynamic_programming_consistency():
    rng = np.random.default_rng(8)
    checked = 0
    while checked < 20:
        p = random_problem(rng)
        N = int(rng.integers(2, 6))
        x0 = feasible_start(rng, p)
        try:
            V = solve_ocp(p, x0, N).cost
        except InfeasibleError:
            continue
        for _ in range(5):
            u = rng.uniform(-1.0, 1.0, p.m)
            if p.S.evaluate_g(x0, u) > 0:
                continue
            x1 = p.A @ x0 + p.B @ u
            try:
                tail = solve_ocp(p, x1, N - 1).cost
            except InfeasibleError:
                continue
            assert V <= stage_cost(p, x0, u) + tail + 1e-7 * (1 + abs(V))
            checked += 1


def test_backends_agree(ex2):
    results = {}
    for name in ("numpy", "numba"):
        with kernels.use_backend(name):
            t = solve_ocp(ex2, [1.0, 2.0, 3.0], 30)
            assert t.info["backend"] == name
            results[name] = t
    assert np.max(np.abs(results["numpy"].u - results["numba"].u)) <= 1e-8
    assert results["numpy"].cost == pytest.approx(results["numba"].cost, rel=1e-10)


def test_lq_solver_backends_agree(ex2):
    rng = np.random.default_rng(0)
    g = rng.normal(size=(41, 4))
    x0 = rng.normal(size=3)
    ys = [kernels.get_backend(name).make_lq_solver(ex2.A, ex2.B, ex2.H, 1.3, 40).solve(g, x0)
          for name in ("numpy", "numba")]
    assert np.max(np.abs(ys[0] - ys[1])) <= 1e-10
    np.testing.assert_allclose(ys[0][1:, :3], ys[0][:-1, :3] @ ex2.A.T + ys[0][:-1, 3:] @ ex2.B.T,
                               atol=1e-12)


def test_settings_iteration_cap(ex2):
    from lqturnpike.errors import NonConvergenceError
    with pytest.raises(NonConvergenceError):
        solve_ocp(ex2, [1.0, 2.0, 3.0], 40, ADMMSettings(max_iter=3))


def test_horizon_validation(ex1):
    with pytest.raises(ValueError):
        solve_ocp(ex1, [0.0, 0.0], 0)
