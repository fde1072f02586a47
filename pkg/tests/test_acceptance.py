"""Acceptance criteria 1-7: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py`` (the lines appear in the
terminal summary) or ``python tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import linprog

sys.path.insert(0, str(Path(__file__).parent))

from instances import feasible_start, random_problem  # noqa: E402
from lqturnpike import Problem  # noqa: E402
from lqturnpike.analysis import (has_unit_modulus_unobservable,  # noqa: E402
                                 steady_cost_positive_definite)
from lqturnpike.cli import run_scan  # noqa: E402
from lqturnpike.config import builtin_config, parse_xtp  # noqa: E402
from lqturnpike.dissipativity import (AUTO_RATE_FRACTION, certify, lmi_margin, max_dissipation_rate,  # noqa: E402
                                      verify_strict_dissipativity)
from lqturnpike.errors import InfeasibleError, NoFeasibleRateError  # noqa: E402
from lqturnpike.model import is_admissible  # noqa: E402
from lqturnpike.ocp import brute_oracle, solve_ocp  # noqa: E402
from lqturnpike.scenarios import (DECAY, SCENARIOS, cone_feedback, example_cone,  # noqa: E402
                                  example_cone_xtp, example_rotation_box, sample_ball)
from lqturnpike.steady import (global_steady_state, kkt_certificate,  # noqa: E402
                               solve_steady_state, verify_kkt)
from lqturnpike.turnpike import exceedance_count, simulate_policy  # noqa: E402

RESULTS = {}


def record(k, ok, detail, elapsed, limit=None):
    if limit is not None and elapsed >= limit:
        ok = False
        detail += f"; runtime {elapsed:.1f}s exceeds {limit:.0f}s"
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}"
    RESULTS[k] = line
    print(line)
    return ok


def criterion_1():
    p = example_rotation_box()
    x_e, u_e = solve_steady_state(p)
    steady_err = float(np.max(np.abs(np.concatenate([x_e, u_e]))))
    worst_u = worst_norm = 0.0
    for x0 in sample_ball(2, 1.0, 20, seed=42):
        t = solve_ocp(p, x0, 50)
        worst_u = max(worst_u, float(np.max(np.abs(t.u))))
        expected = np.exp(-0.1 * np.arange(51)) * np.linalg.norm(x0)
        worst_norm = max(worst_norm,
                         float(np.max(np.abs(np.linalg.norm(t.x, axis=1) - expected))))
    ok = steady_err <= 1e-8 and worst_u <= 1e-6 and worst_norm <= 1e-6
    return ok, (f"steady error {steady_err:.1e}, max |u*| {worst_u:.1e}, "
                f"max norm deviation {worst_norm:.1e} over 20 x0")


def min_next_state_inf_norm(p, x0):
    """min_u |A x0 + B u|_inf subject to (x0, u) in S, as a linear program."""
    m = p.m
    base = p.A @ x0
    # variables (u, t): minimize t, -t <= base + B u <= t, |u| <= 0.1
    c = np.r_[np.zeros(m), 1.0]
    A_ub = np.block([[p.B, -np.ones((p.n, 1))], [-p.B, -np.ones((p.n, 1))]])
    b_ub = np.r_[-base, base]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(-0.1, 0.1)] * m + [(0, None)],
                  method="highs")
    return float(res.fun)


def criterion_2():
    p = example_rotation_box()
    x0 = np.array([1.0, 1.0])
    best = min_next_state_inf_norm(p, x0)
    infeasible = []
    for N in (1, 2, 3, 5, 10, 20, 50):
        try:
            solve_ocp(p, x0, N)
            infeasible.append(False)
        except InfeasibleError:
            infeasible.append(True)
    ok = best >= 1.179 - 1e-3 and all(infeasible)
    return ok, (f"min |x(1)|_inf = {best:.6f}, Infeasible for N in 1..50: "
                f"{sum(infeasible)}/{len(infeasible)}")


def criterion_3():
    p = example_cone()
    x_e, u_e = solve_steady_state(p)
    cert = kkt_certificate(p, x_e, u_e)
    kkt = verify_kkt(cert, p)
    xg, ug = global_steady_state(p)
    steady_ok = (np.max(np.abs(np.r_[x_e, u_e])) <= 1e-8 and abs(cert.g_value) <= 1e-8
                 and np.max(np.abs(np.r_[xg - [0, 0, -1], ug])) <= 1e-10)
    mult_ok = (abs(cert.mu - 2.0) <= 1e-6
               and np.max(np.abs(cert.lam - [0.0, 0.0, 2.0])) <= 1e-6 and kkt.ok)
    worst_identity, worst_transient, admissible = 0.0, 0, True
    for x0 in example_cone_xtp(10, seed=42):
        run = simulate_policy(p, cone_feedback, x0, 200)
        admissible &= run.admissible and bool(is_admissible(p, run.trajectory))
        x = run.trajectory.x
        r = np.hypot(x[:, 0], x[:, 1])
        unsat = np.flatnonzero(run.trajectory.u[:, 0] < 1.0)
        transient = int(unsat[0]) if unsat.size else 200
        worst_transient = max(worst_transient, transient)
        k = np.arange(transient, 200)
        worst_identity = max(worst_identity, float(np.max(np.abs(x[k + 1, 2] - DECAY * r[k]))),
                             float(np.max(np.abs(r[1:] - DECAY * r[:-1]))))
    ok = steady_ok and mult_ok and admissible and worst_identity <= 1e-10
    return ok, (f"x_e = {np.round(x_e, 12).tolist()}, g = {cert.g_value:.1e}, "
                f"mu = {cert.mu:.9f}, lambda = {np.round(cert.lam, 9).tolist()}, "
                f"radial identity error {worst_identity:.1e} after <= {worst_transient} "
                f"saturated steps, admissible {admissible}")


def certify_and_verify(p):
    cert = kkt_certificate(p, *solve_steady_state(p))
    s_max, _ = max_dissipation_rate(p)
    sc = certify(p, cert, s=AUTO_RATE_FRACTION * s_max)
    rep = verify_strict_dissipativity(sc, p, n_samples=10_000, seed=42)
    return s_max, rep


def criterion_4():
    ex1_margin = lmi_margin(example_rotation_box(), 0.1 * np.eye(2), 0.005)
    s2, rep2 = certify_and_verify(example_cone())
    rng = np.random.default_rng(11)
    failures, violations, rates = 0, 0, []
    for _ in range(20):
        p = random_problem(rng)
        s, rep = certify_and_verify(p)
        rates.append(s)
        violations += rep.violations + rep.subgradient_violations
        failures += not (s > 0 and rep.ok and rep.n_samples == 10_000)
    ok = ex1_margin <= 0 and s2 > 0 and rep2.ok and rep2.violations == 0 and failures == 0
    return ok, (f"example1 lambda_max(M(0.1I, 0.005)) = {ex1_margin:.3e}, example2 s* = "
                f"{s2:.4g} with {rep2.violations} violations, random: {20 - failures}/20 "
                f"certified (s* in [{min(rates):.3g}, {max(rates):.3g}]), "
                f"{violations} violations on 10^4 samples each")


def criterion_5():
    p = Problem(A=[[1.0]], B=[[1.0]], Q=[[0.0]], R=[[1.0]], C=[[0.0]])
    try:
        max_dissipation_rate(p)
        no_rate = False
    except NoFeasibleRateError:
        no_rate = True
    pd = steady_cost_positive_definite(p)
    rng = np.random.default_rng(2024)
    agree, planted = 0, 0
    for k in range(200):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        A = rng.normal(size=(n, n))
        B = rng.normal(size=(n, m)) * (rng.uniform(size=(1, m)) < 0.8)
        C = rng.normal(size=(n, n)) * (rng.uniform(size=(n, 1)) < 0.6)
        if k % 4 == 0:  # plant an unobservable eigenvalue 1
            w = rng.normal(size=n)
            w /= np.linalg.norm(w)
            Pw = np.eye(n) - np.outer(w, w)
            A = Pw @ A @ Pw + np.outer(w, w)
            C = C @ Pw
            planted += 1
        K = np.triu(rng.normal(size=(m, m))) + 2.0 * np.eye(m)
        q = Problem(A=A, B=B, Q=C.T @ C, R=K.T @ K, C=C, K=K)
        agree += steady_cost_positive_definite(q) == (not has_unit_modulus_unobservable(A, C))
    ok = no_rate and not pd and agree == 200
    return ok, (f"NoFeasibleRate raised: {no_rate}, steady_cost_positive_definite = {pd}, "
                f"Lemma-1 equivalence {agree}/200 ({planted} with a planted eigenvalue 1)")


def criterion_6():
    rng = np.random.default_rng(7)
    worst, done, skipped = 0.0, 0, 0
    while done < 50:
        p = random_problem(rng)
        N = int(rng.integers(1, 9))
        x0 = feasible_start(rng, p)
        try:
            t = solve_ocp(p, x0, N)
        except InfeasibleError:
            skipped += 1
            continue
        o = brute_oracle(p, x0, N)
        worst = max(worst, abs(t.cost - o.cost) / (1 + abs(o.cost)))
        done += 1
    t2 = solve_ocp(example_cone(), [0.0, 0.0, 0.0], 2)
    ex2_ok = abs(t2.cost + 1.0) <= 1e-4 and np.max(np.abs(t2.u.ravel() - [0.0, -1.0])) <= 1e-4
    ok = worst <= 1e-5 and ex2_ok
    return ok, (f"worst relative cost gap {worst:.1e} over 50 instances "
                f"({skipped} infeasible draws skipped), example2 N=2: cost {t2.cost:.8f}, "
                f"u* = {np.round(t2.u.ravel(), 8).tolist()}")


def full_scan(name):
    cfg = builtin_config(name)
    scen = SCENARIOS[name]
    X_tp = parse_xtp(cfg.xtp, cfg.problem.n, 42)
    return run_scan(cfg, X_tp, list(scen.N_list), list(scen.eps_list))[-1]


def criterion_7():
    rep1 = full_scan("example1")
    rep2 = full_scan("example2")
    t = solve_ocp(example_rotation_box(), [1.0, 0.0], 200)
    count = exceedance_count(t, np.zeros(2), np.zeros(2), 0.1)
    ok = (rep1.bound_ok and rep2.bound_ok and rep1.max_count_spread == 0
          and rep2.max_count_spread <= 2 and count == 12)
    return ok, (f"example1: {len(rep1.cells)} cells within bound {rep1.bound_ok}, "
                f"M_E = {rep1.M_E:.4g}, count spread {rep1.max_count_spread}; example2: "
                f"{len(rep2.cells)} cells within bound {rep2.bound_ok}, M_E = {rep2.M_E:.4g}, "
                f"count spread {rep2.max_count_spread}; x0=(1,0), eps=0.1 count {count}")


CRITERIA = {1: (criterion_1, 30), 2: (criterion_2, None), 3: (criterion_3, None),
            4: (criterion_4, 60), 5: (criterion_5, None), 6: (criterion_6, None),
            7: (criterion_7, 300)}


def evaluate(k):
    fn, limit = CRITERIA[k]
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # report, then fail the test
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return record(k, ok, detail, time.perf_counter() - t0, limit)


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    assert evaluate(k), RESULTS[k]


if __name__ == "__main__":
    results = [evaluate(k) for k in sorted(CRITERIA)]
    sys.exit(0 if all(results) else 1)
