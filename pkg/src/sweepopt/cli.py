"""Command line: simulate | optimize | certify | sweep-alpha.

Every command builds a JSON report.  Its "volatile" section (timestamp and
timings) is the only part allowed to change between identical runs;
canonical_bytes() drops it.  With --out the report is written there and a
CSV table with the trajectory goes next to it.
"""
import argparse
import csv
import datetime
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import specfile
from .certificates import MultiplierBundle, _reconstruct_q, check_certificate, compute_Hbar, solve_multipliers
from .errors import NoFeasiblePoint, SpecParseError, SweepError
from .optimizer import OptimizerConfig, optimize, refine
from .problem import DiscretizationConfig, feasibility, mayer_cost
from .sweeping import ControlLaw, DiscreteTrajectory, first_contact_time, inclusion_residual, integrate, recover_eta
from .switching_example import CLOSED_FORM, STRATEGIES, example_problem, strategy_law

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2
FORMAT = "sweepopt-report/1"


class UsageError(Exception):
    pass


# -- report plumbing -----------------------------------------------------

def canonical_bytes(report):
    body = {k: v for k, v in report.items() if k != "volatile"}
    return json.dumps(body, sort_keys=True, indent=1, allow_nan=True).encode("utf-8")


def trajectory_record(traj):
    return {
        "T": float(traj.T),
        "k": int(traj.k),
        "t": traj.times.tolist(),
        "x": traj.states.tolist(),
        "u": traj.controls.tolist(),
        "eta": None if traj.etas is None else traj.etas.tolist(),
    }


def trajectory_from_record(rec):
    etas = rec.get("eta")
    return DiscreteTrajectory(
        float(rec["T"]),
        int(rec["k"]),
        np.array(rec["x"], dtype=float),
        np.array(rec["u"], dtype=float).reshape(int(rec["k"]), -1),
        None if etas is None else np.array(etas, dtype=float),
    )


def load_trajectory(path):
    """Trajectory from a JSON report or from a CSV table written by this tool."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], rows[1:]
        cols = lambda prefix: [i for i, h in enumerate(head) if h.startswith(prefix + "_")]
        t = np.array([float(r[0]) for r in body])
        xs = np.array([[float(r[i]) for i in cols("x")] for r in body])
        us = np.array([[float(r[i]) for i in cols("u")] for r in body[:-1]])
        ic = cols("eta")
        etas = np.array([[float(r[i]) for i in ic] for r in body[:-1]]) if ic else None
        k = len(body) - 1
        return DiscreteTrajectory(float(t[-1]), k, xs, us.reshape(k, -1), etas)
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return trajectory_from_record(data["trajectory"] if "trajectory" in data else data)


def _csv_rows(traj, bundle=None):
    n, d = traj.states.shape[1], traj.controls.shape[1]
    s = 0 if traj.etas is None else traj.etas.shape[1]
    head = ["t"] + [f"x_{c + 1}" for c in range(n)] + [f"u_{c + 1}" for c in range(d)] + [f"eta_{j + 1}" for j in range(s)]
    if bundle is not None:
        head += [f"p_{c + 1}" for c in range(n)] + [f"q_{c + 1}" for c in range(n)]
        head += [f"gamma_{j + 1}" for j in range(bundle.gamma.shape[1])]
    yield head
    times = traj.times
    for i in range(traj.k + 1):
        step = i < traj.k  # controls, etas and gammas are per step; the last node leaves them blank
        row = [repr(float(times[i]))] + [repr(float(v)) for v in traj.states[i]]
        row += [repr(float(v)) for v in traj.controls[i]] if step else [""] * d
        if s:
            row += [repr(float(v)) for v in traj.etas[i]] if step else [""] * s
        if bundle is not None:
            row += [repr(float(v)) for v in bundle.p[i]] + [repr(float(v)) for v in bundle.q[i]]
            row += [repr(float(v)) for v in bundle.gamma[i]] if step else [""] * bundle.gamma.shape[1]
        yield row


def write_outputs(report, out, traj=None, bundle=None, table=None):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    body = json.loads(canonical_bytes(report))
    body["volatile"] = report.get("volatile", {})
    out.write_text(json.dumps(body, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    rows = table if table is not None else (_csv_rows(traj, bundle) if traj is not None else None)
    if rows is not None:
        with open(out.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)


def _new_report(command, P, flags):
    return {
        "format": FORMAT,
        "command": command,
        "inputs": {"spec": specfile.dumps(P), "flags": flags},
        "volatile": {"timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(), "timings": {}},
    }


def _feasibility_record(rep):
    return {
        "ok": rep.ok,
        "state_feasible": rep.state_feasible,
        "endpoint_x_ok": rep.endpoint_x_ok,
        "endpoint_T_ok": rep.endpoint_T_ok,
        "locality_ok": rep.locality_ok,
        "velocity_cap_ok": rep.velocity_cap_ok,
        "controls_ok": rep.controls_ok,
        "max_violation": rep.max_violation,
        "worst_step": rep.worst_step,
        "violations": dict(sorted(rep.violations.items())),
    }


def _certificate_record(rep):
    return {
        "ok": rep.ok,
        "tol": rep.tol,
        "stationarity_resid": rep.stationarity_resid,
        "dynamics_resid": rep.dynamics_resid,
        "transversality_resid": rep.transversality_resid,
        "complementarity_ok": rep.complementarity_ok,
        "sign_ok": rep.sign_ok,
        "maximization_resid": rep.maximization_resid,
        "nontriviality_norm": rep.nontriviality_norm,
        "support_ok": rep.support_ok,
        "Hbar_minus_mu": rep.Hbar_minus_mu,
        "index_ambiguity": rep.index_ambiguity,
        "violations": list(rep.violations),
    }


def bundle_record(b):
    return {
        "mu0": b.mu0,
        "normal_form": b.normal_form,
        "p": b.p.tolist(),
        "gamma": b.gamma.tolist(),
        "psi": b.psi.tolist(),
        "etaT": b.etaT.tolist(),
        "lambdaT": b.lambdaT.tolist(),
        "Hbar": b.Hbar,
    }


def bundle_from_record(rec, P, traj):
    """Bundle from JSON; q and Hbar are recomputed from p and gamma."""
    k, n, s, d = traj.k, P.n, P.C.s, P.d
    p = np.array(rec["p"], dtype=float).reshape(k + 1, n)
    gamma = np.array(rec.get("gamma", np.zeros((k, s))), dtype=float).reshape(k, s)
    psi = np.array(rec.get("psi", np.zeros((k, d))), dtype=float).reshape(k, d)
    etaT = np.array(rec.get("etaT", np.zeros(s)), dtype=float).reshape(s)
    lam = np.array(rec.get("lambdaT", np.zeros(P.omega_x_E.shape[0])), dtype=float).reshape(-1)
    return MultiplierBundle(
        mu0=float(rec.get("mu0", 0.0)),
        p=p,
        gamma=gamma,
        psi=psi,
        etaT=etaT,
        lambdaT=lam,
        q=_reconstruct_q(p, gamma, P.C.normals, traj.h),
        Hbar=compute_Hbar(traj, p),
        normal_form=bool(rec.get("normal_form", True)),
    )


def result_record(res):
    return {
        "J": res.J,
        "T": res.T,
        "k": res.k,
        "penalty": res.penalty,
        "weight": res.weight,
        "breakpoints": res.law.breakpoints.tolist(),
        "levels": res.law.levels.tolist(),
        "main_switch": res.main_switch(),
        "decision": np.asarray(res.decision).tolist(),
        "evaluations": res.evaluations,
        "delta_J": res.delta_J,
    }


# -- argument helpers ----------------------------------------------------

def _parse_levels(text, d):
    segs = [seg for seg in text.split(";") if seg.strip()]
    try:
        levels = np.array([[float(v) for v in seg.split(",")] for seg in segs])
    except ValueError:
        raise UsageError(f"cannot read levels {text!r}") from None
    if levels.ndim != 2 or levels.shape[1] != d:
        raise UsageError(f"each level needs {d} comma-separated values")
    return levels


def _load_problem(args):
    P = specfile.load(args.spec)
    if getattr(args, "alpha", None) is not None:
        xref = P.phi_xref.copy()
        xref[0] = args.alpha
        P = P.with_xref(xref)
    return P


def _law_from_args(P, args):
    if args.strategy:
        law = strategy_law(args.strategy, float(P.phi_xref[0]))
        if law is None:
            raise UsageError(f"strategy {args.strategy} is not admissible for alpha={P.phi_xref[0]}")
        return law
    if args.levels is None or args.T is None:
        raise UsageError("give --strategy, or --T with --levels (and --switches for several segments)")
    levels = _parse_levels(args.levels, P.d)
    switches = [float(v) for v in args.switches.split(",")] if args.switches else []
    if len(switches) != levels.shape[0] - 1:
        raise UsageError("need one switch time fewer than levels")
    try:
        return ControlLaw.from_switches(args.T, switches, levels)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _flags(args, skip=("func", "out", "spec", "command")):
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# -- commands ------------------------------------------------------------

def cmd_simulate(args):
    P = _load_problem(args)
    law = _law_from_args(P, args)
    if not law.inside(P.U_lo, P.U_hi):
        raise UsageError("control levels leave the box U")
    report = _new_report("simulate", P, _flags(args))
    t0 = time.perf_counter()
    traj = integrate(P, law, args.k)
    report["volatile"]["timings"]["integrate"] = time.perf_counter() - t0
    feas = feasibility(P, traj)
    report["law"] = {"breakpoints": law.breakpoints.tolist(), "levels": law.levels.tolist()}
    report["summary"] = {
        "J": mayer_cost(P, traj),
        "first_contact_time": first_contact_time(P, traj),
        "endpoint_violation": P.endpoint_violation(traj.states[-1]),
        "inclusion_residual": inclusion_residual(P, traj),
    }
    report["feasibility"] = _feasibility_record(feas)
    report["trajectory"] = trajectory_record(traj)
    return report, EXIT_OK, traj, None


def _certify(P, traj, tol=None, bundle=None):
    if bundle is None:
        bundle = solve_multipliers(P, traj)
    rep = check_certificate(P, traj, bundle, tol)
    return bundle, rep


def cmd_optimize(args):
    P = _load_problem(args)
    cfg = OptimizerConfig(
        segments=args.segments,
        k=args.steps,
        seed=args.seed,
        T_bracket=tuple(args.T_bracket) if args.T_bracket else None,
    )
    report = _new_report("optimize", P, _flags(args))
    timings = report["volatile"]["timings"]
    t0 = time.perf_counter()
    try:
        res = optimize(P, cfg)
        timings["optimize"] = time.perf_counter() - t0
        k2 = args.k if args.k is not None else 2 * args.steps
        t0 = time.perf_counter()
        fine = refine(P, res, k2, cfg)
        timings["refine"] = time.perf_counter() - t0
    except NoFeasiblePoint as exc:
        report["error"] = {"type": "NoFeasiblePoint", "message": str(exc), "best_penalty": exc.best_penalty}
        return report, EXIT_CHECK, None, None
    report["optimizer"] = result_record(res)
    report["refined"] = result_record(fine)
    report["history"] = fine.history
    traj = integrate(P, fine.law, fine.k)
    report["summary"] = {
        "J": fine.J,
        "T": fine.T,
        "main_switch": fine.main_switch(),
        "levels": fine.law.levels.tolist(),
        "delta_J": fine.delta_J,
    }
    t0 = time.perf_counter()
    try:
        _, cert = _certify(P, traj, args.tol)
        report["certificate"] = _certificate_record(cert)
    except SweepError as exc:
        report["certificate"] = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
    timings["certify"] = time.perf_counter() - t0
    report["trajectory"] = trajectory_record(traj)
    return report, EXIT_OK, traj, None


def cmd_certify(args):
    P = _load_problem(args)
    traj = load_trajectory(args.trajectory)
    if traj.states.shape[1] != P.n or traj.controls.shape[1] != P.d:
        raise UsageError(f"trajectory dims ({traj.states.shape[1]}, {traj.controls.shape[1]}) do not match the spec ({P.n}, {P.d})")
    report = _new_report("certify", P, _flags(args))
    feas = feasibility(P, traj)
    report["feasibility"] = _feasibility_record(feas)
    if not feas.state_feasible:
        report["error"] = {"type": "InfeasiblePoint", "message": f"state leaves C(t) at step {feas.worst_step}", "step": feas.worst_step}
        return report, EXIT_CHECK, traj, None
    traj = traj.with_etas(recover_eta(P, traj))
    bundle = None
    if args.bundle:
        with open(args.bundle, encoding="utf-8") as fh:
            bundle = bundle_from_record(json.load(fh), P, traj)
    t0 = time.perf_counter()
    bundle, cert = _certify(P, traj, args.tol, bundle)
    report["volatile"]["timings"]["certify"] = time.perf_counter() - t0
    report["certificate"] = _certificate_record(cert)
    report["bundle"] = bundle_record(bundle)
    report["trajectory"] = trajectory_record(traj)
    return report, (EXIT_OK if cert.ok else EXIT_CHECK), traj, bundle


def sweep_alpha(alphas, k=4000, optimizer_cfg=None):
    """Per alpha: simulated and closed-form cost of each admissible strategy, ordering, optimizer best."""
    rows = []
    for alpha in alphas:
        P = example_problem(alpha)
        entry = {"alpha": alpha, "strategies": {}}
        for name in STRATEGIES:
            law = strategy_law(name, alpha)
            closed = CLOSED_FORM[name](alpha)
            if law is None or closed is None:
                continue
            J = mayer_cost(P, integrate(P, law, k, recover=False))
            entry["strategies"][name] = {"closed_form": closed, "simulated": J, "T": law.T}
        entry["ordering"] = sorted(entry["strategies"], key=lambda nm: (entry["strategies"][nm]["simulated"], nm))
        if optimizer_cfg is not None:
            try:
                res = optimize(P, optimizer_cfg)
                entry["optimizer"] = {"J": res.J, "T": res.T, "main_switch": res.main_switch(),
                                      "levels": res.law.levels.tolist()}
            except NoFeasiblePoint as exc:
                entry["optimizer"] = {"error": str(exc)}
        rows.append(entry)
    return rows


def cmd_sweep_alpha(args):
    P = _load_problem(args)
    try:
        alphas = [float(v) for v in args.alphas.split(",")]
    except ValueError:
        raise UsageError(f"cannot read --alphas {args.alphas!r}") from None
    probe = P.with_xref(example_problem(0.0).phi_xref)
    if probe != example_problem(0.0).replace(name=P.name):
        raise UsageError("sweep-alpha needs the bundled example family")
    cfg = None if args.no_optimize else OptimizerConfig(segments=args.segments, k=args.steps, seed=args.seed)
    report = _new_report("sweep-alpha", P, _flags(args))
    t0 = time.perf_counter()
    report["sweep"] = sweep_alpha(alphas, args.k, cfg)
    report["volatile"]["timings"]["sweep"] = time.perf_counter() - t0
    table = [["alpha", "strategy", "closed_form", "simulated", "abs_error", "rank"]]
    for entry in report["sweep"]:
        for rank, name in enumerate(entry["ordering"], 1):
            st = entry["strategies"][name]
            table.append([repr(entry["alpha"]), name, repr(st["closed_form"]), repr(st["simulated"]),
                          repr(abs(st["simulated"] - st["closed_form"])), str(rank)])
        if "optimizer" in entry and "J" in entry["optimizer"]:
            table.append([repr(entry["alpha"]), "optimizer", "", repr(entry["optimizer"]["J"]), "", ""])
    return report, EXIT_OK, None, table


# -- entry point ---------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="sweepopt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, k_default):
        p.add_argument("spec", help="problem spec file (see sweepopt.specfile)")
        p.add_argument("--alpha", type=float, help="override the first entry of cost.xref")
        p.add_argument("--out", help="write the JSON report here and a CSV table next to it")
        p.add_argument("--tol", type=float, help="certificate tolerance (default 10 h (1 + |p|_inf))")
        p.add_argument("--k", type=int, default=k_default, help="integrator steps")

    p = sub.add_parser("simulate", help="integrate a piecewise-constant law")
    common(p, 1000)
    p.add_argument("--strategy", choices=STRATEGIES, help="named law of the example family")
    p.add_argument("--T", type=float, help="horizon")
    p.add_argument("--levels", help="segment levels, ';' between segments and ',' between channels")
    p.add_argument("--switches", help="comma-separated switching times")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="search switching times, levels and horizon, then refine once")
    common(p, None)
    p.add_argument("--segments", type=int, default=3)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T-bracket", dest="T_bracket", type=float, nargs=2, metavar=("LO", "HI"))
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("certify", help="build multipliers for a trajectory and check the optimality system")
    common(p, None)
    p.add_argument("trajectory", help="JSON report or CSV table holding the trajectory")
    p.add_argument("--bundle", help="JSON multiplier bundle to check instead of solving for one")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep-alpha", help="strategy costs and ordering across alpha for the example family")
    common(p, 4000)
    p.add_argument("--alphas", default="-2.2,-2.5,-3")
    p.add_argument("--segments", type=int, default=3)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-optimize", action="store_true", help="skip the optimizer column")
    p.set_defaults(func=cmd_sweep_alpha)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    if getattr(args, "k", None) is not None and args.k < 1:
        print("error: --k must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        report, code, traj, extra = args.func(args)
    except (SpecParseError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SweepError as exc:
        step = getattr(exc, "step", None)
        where = f" at step {step}" if step is not None else ""
        print(f"error: {type(exc).__name__}{where}: {exc}", file=sys.stderr)
        return EXIT_CHECK
    if args.out:
        if isinstance(extra, list):
            write_outputs(report, args.out, table=extra)
        else:
            write_outputs(report, args.out, traj=traj, bundle=extra)
    summary = {k: report[k] for k in ("summary", "certificate", "feasibility", "error") if k in report}
    if "sweep" in report:
        summary["sweep"] = [{"alpha": e["alpha"], "ordering": e["ordering"]} for e in report["sweep"]]
    print(json.dumps(summary, sort_keys=True, indent=1))
    return code


if __name__ == "__main__":
    sys.exit(main())
