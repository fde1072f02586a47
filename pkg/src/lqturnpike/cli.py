"""Command-line interface.

Exit codes: 0 ok, 1 numerical failure, 2 infeasible, 3 certificate failure,
4 bad config.
"""
import argparse
import csv
import io
import json
import sys

import numpy as np

from . import kernels
from .analysis import analyze
from .config import builtin_config, dump_config, load_config, parse_xtp
from .dissipativity import certify, verify_strict_dissipativity
from .errors import (ConfigError, HypothesisViolatedError, InfeasibleError,
                     InfeasibleSteadyStateError, LQTurnpikeError, NoFeasibleRateError,
                     NotDecayingError, StorageInfeasibleError)
from .ocp import solve_ocp
from .plotting import decay_svg
from .scenarios import SCENARIOS
from .steady import kkt_certificate, solve_steady_state, verify_kkt
from .turnpike import build_witness, cost_gap_bound, turnpike_scan

EXIT_OK, EXIT_NUMERIC, EXIT_INFEASIBLE, EXIT_CERTIFICATE, EXIT_CONFIG = 0, 1, 2, 3, 4

_CERTIFICATE_ERRORS = (HypothesisViolatedError, StorageInfeasibleError, NoFeasibleRateError,
                       NotDecayingError)
_INFEASIBLE_ERRORS = (InfeasibleError, InfeasibleSteadyStateError)


class CertificateFailure(Exception):
    """A computed certificate did not verify."""


def _floats(text, what):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--{what}: expected comma-separated numbers, got {text!r}") from None


def _ints(text, what):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--{what}: expected comma-separated integers, got {text!r}") from None


def _emit(text, path, out):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def _json(obj):
    return json.dumps(obj, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _steady(p):
    x_e, u_e = solve_steady_state(p)
    cert = kkt_certificate(p, x_e, u_e)
    report = verify_kkt(cert, p)
    return cert, report


def trajectory_csv(p, traj):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["i"] + [f"x_{k + 1}" for k in range(p.n)] + [f"u_{k + 1}" for k in range(p.m)]
               + ["stage_cost"])
    for i in range(traj.N + 1):
        u = traj.u[i] if i < traj.N else np.full(p.m, np.nan)
        cost = traj.stage_costs[i] if i < traj.N else np.nan
        w.writerow([i] + [repr(float(v)) for v in traj.x[i]]
                   + ["" if np.isnan(v) else repr(float(v)) for v in u]
                   + ["" if np.isnan(cost) else repr(float(cost))])
    return buf.getvalue()


def scan_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x0_id", "N", "eps", "count", "bound", "ok"])
    for c in report.cells:
        w.writerow([c["x0_id"], c["N"], repr(float(c["eps"])),
                    "" if c["count"] is None else c["count"], f"{c['bound']:.10g}",
                    int(c["ok"])])
    return buf.getvalue()


def run_scan(cfg, X_tp, N_list, eps_list):
    p = cfg.problem
    cert, kkt = _steady(p)
    if not kkt.ok:
        raise CertificateFailure(f"KKT certificate residuals {kkt.residuals}")
    sc = certify(p, cert)
    witness = build_witness(p, cfg.policy["name"], X_tp, cert.x_e, cert.u_e,
                            horizon=max(N_list), skip=int(cfg.policy.get("skip", 0)))
    gap = cost_gap_bound(p, witness, cert.x_e, cert.u_e)
    report = turnpike_scan(p, X_tp, N_list, eps_list, sc, gap, settings=cfg.admm_settings())
    return cert, sc, witness, gap, report


def decay_curves(report, x_e, N=None, max_curves=10):
    keys = sorted(report.trajectories)
    if N is None:
        N = max(k[1] for k in keys)
    curves = {}
    for k, n in keys:
        t = report.trajectories[(k, n)]
        if n == N and t is not None and len(curves) < max_curves:
            curves[f"x0 #{k}"] = np.linalg.norm(t.x - x_e, axis=1)
    return curves


def cmd_analyze(args, out):
    cfg = load_config(args.config)
    _emit(_json(analyze(cfg.problem).to_dict()), args.out, out)
    return EXIT_OK


def cmd_steady(args, out):
    cfg = load_config(args.config)
    cert, kkt = _steady(cfg.problem)
    _emit(_json({"certificate": cert.to_dict(), "verification": kkt.to_dict()}), args.out, out)
    return EXIT_OK if kkt.ok else EXIT_CERTIFICATE


def cmd_certify(args, out):
    cfg = load_config(args.config)
    p = cfg.problem
    cert, kkt = _steady(p)
    if not kkt.ok:
        raise CertificateFailure(f"KKT certificate residuals {kkt.residuals}")
    sc = certify(p, cert, None if args.auto else args.s)
    rep = verify_strict_dissipativity(sc, p, args.samples, seed=args.seed)
    _emit(_json({"storage": sc.to_dict(), "verification": rep.to_dict(),
                 "steady_state": cert.to_dict()}), args.out, out)
    return EXIT_OK if rep.ok else EXIT_CERTIFICATE


def cmd_solve(args, out):
    cfg = load_config(args.config)
    p = cfg.problem
    x0 = np.array(_floats(args.x0, "x0"))
    if x0.size != p.n:
        raise ConfigError(f"--x0: expected {p.n} entries, got {x0.size}")
    if args.N < 1:
        raise ConfigError("--N: horizon must be >= 1")
    traj = solve_ocp(p, x0, args.N, cfg.admm_settings())
    _emit(trajectory_csv(p, traj), args.out, out)
    if args.out:
        out.write(f"cost {traj.cost!r}  iterations {traj.info['iterations']}\n")
    return EXIT_OK


def cmd_scan(args, out):
    cfg = load_config(args.config)
    p = cfg.problem
    spec = args.xtp if args.xtp != "config" else cfg.xtp
    if spec is None:
        raise ConfigError("--xtp: 'config' given but the config has no xtp entry")
    X_tp = parse_xtp(spec, p.n, args.seed)
    N_list, eps_list = _ints(args.N, "N"), _floats(args.eps, "eps")
    cert, sc, witness, gap, report = run_scan(cfg, X_tp, N_list, eps_list)
    _emit(scan_csv(report), args.out, out)
    if args.plot:
        with open(args.plot, "w") as fh:
            fh.write(decay_svg(decay_curves(report, cert.x_e)))
    if any(not c["feasible"] for c in report.cells):
        return EXIT_INFEASIBLE
    return EXIT_OK if report.bound_ok else EXIT_CERTIFICATE


def cmd_demo(args, out):
    cfg = builtin_config(args.example)
    p = cfg.problem
    cert, kkt = _steady(p)
    out.write(f"[{args.example}] backend: {kernels.BACKEND}\n")
    out.write(f"steady state x_e = {np.round(cert.x_e, 10).tolist()}, "
              f"u_e = {np.round(cert.u_e, 10).tolist()}, "
              f"boundary = {cert.boundary}, mu = {cert.mu:.6g}, KKT ok = {kkt.ok}\n")
    X_tp = parse_xtp(cfg.xtp, p.n, args.seed)
    scen = SCENARIOS[args.example]
    _, sc, witness, gap, report = run_scan(cfg, X_tp, list(scen.N_list), list(scen.eps_list))
    rep = verify_strict_dissipativity(sc, p, args.samples, seed=args.seed)
    out.write(f"storage: s = {sc.s:.6g}, lmi margin = {sc.lmi_margin:.3e}, "
              f"P > 0: {sc.P_positive_definite}, sampled check ok = {rep.ok} "
              f"({rep.violations} violations / {rep.n_samples})\n")
    out.write(f"witness: policy = {witness.policy}, M0 = {witness.M0:.6g}, "
              f"rho = {witness.rho:.6g}; cost gap M = {gap.M:.6g}\n")
    out.write(f"scan: {len(X_tp)} initial states x N in {list(scen.N_list)} x eps in "
              f"{list(scen.eps_list)}: M_E = {report.M_E:.6g}, all cells within bound = "
              f"{report.bound_ok}, max count spread over N = {report.max_count_spread}\n")
    for eps in scen.eps_list:
        counts = [c["count"] for c in report.cells if c["eps"] == eps and c["feasible"]]
        out.write(f"  eps = {eps:g}: counts in [{min(counts)}, {max(counts)}], "
                  f"bound M_E/eps = {report.M_E / eps:.6g}\n")
    ok = kkt.ok and rep.ok and report.bound_ok
    return EXIT_OK if ok else EXIT_CERTIFICATE


def cmd_export(args, out):
    _emit(dump_config(builtin_config(args.example)), args.out, out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lqturnpike",
        description="Constrained LQ optimal control, dissipativity and turnpike checks.")
    parser.add_argument("--seed", type=int, default=42, help="RNG seed for all sampling")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, config=True):
        sp = sub.add_parser(name, help=help_text)
        if config:
            sp.add_argument("config", help="YAML config file or built-in name (example1, example2)")
        sp.add_argument("--out", help="write the result to this file instead of stdout")
        sp.set_defaults(func=func)
        return sp

    add("analyze", cmd_analyze, "spectral report (JSON)")
    add("steady", cmd_steady, "optimal steady state and KKT certificate (JSON)")
    sp = add("certify", cmd_certify, "storage function certificate (JSON)")
    grp = sp.add_mutually_exclusive_group()
    grp.add_argument("--s", type=float, help="dissipation rate to certify")
    grp.add_argument("--auto", action="store_true", help="pick the rate by bisection (default)")
    sp.add_argument("--samples", type=int, default=10_000)
    sp = add("solve", cmd_solve, "optimal trajectory (CSV)")
    sp.add_argument("--x0", required=True, help="initial state, comma separated")
    sp.add_argument("--N", type=int, required=True, help="horizon")
    sp = add("scan", cmd_scan, "turnpike exceedance scan (CSV)")
    sp.add_argument("--xtp", default="config",
                    help="initial set: 'config', ball:<r>:<count>, box:<h>:<count>, "
                         "cone_slice:<height>:<count> or points:x1,x2;y1,y2")
    sp.add_argument("--N", required=True, help="comma-separated horizons")
    sp.add_argument("--eps", required=True, help="comma-separated thresholds")
    sp.add_argument("--plot", help="write an SVG decay plot here")
    sp = sub.add_parser("demo", help="reproduce a built-in example end to end")
    sp.add_argument("example", choices=["example1", "example2"])
    sp.add_argument("--samples", type=int, default=10_000)
    sp.set_defaults(func=cmd_demo)
    sp = sub.add_parser("export", help="print a built-in example as a YAML config")
    sp.add_argument("example", choices=["example1", "example2"])
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_export)
    return parser


def run(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except ConfigError as exc:
        err.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except _INFEASIBLE_ERRORS as exc:
        err.write(f"infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except (CertificateFailure, *_CERTIFICATE_ERRORS) as exc:
        err.write(f"certificate failure: {exc}\n")
        return EXIT_CERTIFICATE
    except LQTurnpikeError as exc:
        err.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except OSError as exc:
        err.write(f"I/O error: {exc}\n")
        return EXIT_CONFIG


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
