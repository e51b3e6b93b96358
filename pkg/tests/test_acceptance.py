"""Acceptance criteria 1 to 10, one PASS/FAIL line each in the terminal summary."""
import json
import math
import time

import numpy as np

from sweepopt import cli, geometry as geo, specfile
from sweepopt.certificates import check_certificate, solve_multipliers
from sweepopt.problem import mayer_cost
from sweepopt.sweeping import ControlLaw, first_contact_time, integrate
from sweepopt.switching_example import CLOSED_FORM, STRATEGIES, example_problem, strategy_law

from oracles import projection_by_enumeration, random_polyhedron


def verdict(log, number, ok, detail):
    log(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_criterion_01_hitting_time(example, acceptance_log):
    start = time.perf_counter()
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), 3000)
    elapsed = time.perf_counter() - start
    hit = first_contact_time(example, traj)
    err = abs(hit - 1.0 / 3.0)
    ok = err <= 2 * traj.h and elapsed < 1.0
    verdict(acceptance_log, 1, ok, f"first contact {hit:.6f}, |error| {err:.2e} vs 2h {2 * traj.h:.2e}, {elapsed:.3f} s")


def test_criterion_02_contact_arc(example, acceptance_log):
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), 3000)
    on_facet = np.flatnonzero(traj.etas[:, 0] > 0)
    on_facet = on_facet[1:]  # the contact step itself mixes free flight and sliding
    v_err = float(np.abs(traj.velocities[on_facet] - [-1.5, 0.5]).max())
    eta_err = float(np.abs(traj.etas[on_facet, 0] - 3.0 / math.sqrt(2.0)).max())
    ok = v_err <= 5 * traj.h and eta_err <= 5 * traj.h
    verdict(acceptance_log, 2, ok, f"{on_facet.size} facet steps, velocity error {v_err:.2e}, eta error {eta_err:.2e}, 5h {5 * traj.h:.2e}")


def test_criterion_03_strategy_costs(acceptance_log):
    alpha = -3.0
    P = example_problem(alpha)
    start = time.perf_counter()
    costs = {name: mayer_cost(P, integrate(P, strategy_law(name, alpha), 4000, recover=False)) for name in STRATEGIES}
    elapsed = time.perf_counter() - start
    published = {"no_switch": 3.0, "boundary_ride": 2.625, "slide_off": 2.5, "switch_down": 167.0 / 72.0}
    errs = {name: abs(costs[name] - published[name]) for name in STRATEGIES}
    closed_agree = all(math.isclose(CLOSED_FORM[name](alpha), published[name]) for name in STRATEGIES)
    ok = max(errs.values()) <= 1e-2 and elapsed < 5.0 and closed_agree
    detail = ", ".join(f"{name} {costs[name]:.5f}" for name in STRATEGIES)
    verdict(acceptance_log, 3, ok, f"{detail}; max error {max(errs.values()):.2e}, {elapsed:.2f} s")


def test_criterion_04_optimizer(optimized_example, acceptance_log):
    res, elapsed = optimized_example
    switch = res.main_switch()
    ok = (
        abs(res.J - 167.0 / 72.0) <= 1e-2
        and abs(switch - 16.0 / 9.0) <= 2e-2
        and abs(res.T - 71.0 / 36.0) <= 2e-2
        and elapsed < 30.0
    )
    verdict(acceptance_log, 4, ok, f"J {res.J:.5f}, switch {switch:.4f}, T {res.T:.4f}, {elapsed:.1f} s")


def test_criterion_05_ordering(acceptance_log):
    rows = cli.sweep_alpha([-2.2, -2.5, -3.0], k=4000)
    ok = True
    notes = []
    for entry in rows:
        sim = {name: st["simulated"] for name, st in entry["strategies"].items()}
        closed = {name: st["closed_form"] for name, st in entry["strategies"].items()}
        ok &= all(abs(sim[name] - closed[name]) <= 1e-2 for name in sim)
        # comparisons stated for alpha < -2: downward switching beats every other
        # strategy, sliding off beats no switching, and riding the boundary beats
        # no switching strictly below -5/2
        ok &= all(sim["switch_down"] < sim[name] for name in sim if name != "switch_down")
        ok &= sim["slide_off"] < sim["no_switch"]
        if entry["alpha"] < -2.5:
            ok &= sim["boundary_ride"] < sim["no_switch"]
        if entry["alpha"] == -2.5:
            gap = abs(sim["boundary_ride"] - sim["no_switch"])
            ok &= gap <= 1e-2 and abs(sim["no_switch"] - 17.0 / 8.0) <= 1e-2
            notes.append(f"coincidence gap {gap:.2e}")
        notes.append(f"{entry['alpha']}: {' < '.join(entry['ordering'])}")
    verdict(acceptance_log, 5, ok, "; ".join(notes))


def test_criterion_06_certificate(example, acceptance_log):
    traj = integrate(example, ControlLaw.constant([2.0], 1.0), 3000)
    bundle = solve_multipliers(example, traj)
    rep = check_certificate(example, traj, bundle, tol=10 * traj.h)
    ok = (
        bundle.mu0 == 1.0
        and rep.stationarity_resid <= 10 * traj.h
        and rep.transversality_resid <= 10 * traj.h
        and rep.Hbar_minus_mu <= 10 * traj.h
        and rep.complementarity_ok
        and rep.sign_ok
        and rep.nontriviality_norm >= 1.0
    )
    verdict(
        acceptance_log, 6, ok,
        f"mu0 {bundle.mu0}, stationarity {rep.stationarity_resid:.1e}, transversality {rep.transversality_resid:.1e}, "
        f"H-mu {rep.Hbar_minus_mu:.1e}, complementarity {rep.complementarity_ok}, sign {rep.sign_ok}, "
        f"nontriviality {rep.nontriviality_norm:.3f}",
    )


def test_criterion_07_projection_oracle(rng, acceptance_log):
    worst = 0.0
    cases = 0
    for _ in range(200):
        n, s = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        C = random_polyhedron(rng, n, s)
        t = float(rng.uniform(0, 1))
        for _ in range(5):
            z = rng.normal(scale=3.0, size=n)
            ref = projection_by_enumeration(C.normals, C.offsets(t), z)
            worst = max(worst, float(np.abs(geo.project(C, t, z) - ref).max()))
            cases += 1
    verdict(acceptance_log, 7, worst <= 1e-9, f"200 polyhedra, {cases} points, max discrepancy {worst:.2e}")


def sample_set(rng, C, t, count):
    """Points of C(t): half by rejection from a box, half by projecting random points."""
    n = C.dim
    offsets = C.offsets(t)
    inside = []
    while len(inside) < count // 2:
        cand = rng.uniform(-4, 4, size=(4 * count, n))
        inside.extend(cand[(cand @ C.normals.T <= offsets).all(axis=1)])
    proj = [geo.project(C, t, rng.normal(scale=4.0, size=n)) for _ in range(count - count // 2)]
    return np.vstack([np.array(inside[: count // 2]), np.array(proj)])


def test_criterion_08_cone_polarity(rng, acceptance_log):
    pairs = 0
    worst = -np.inf
    while pairs < 1000:
        n, s = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        C = random_polyhedron(rng, n, s)
        t = float(rng.uniform(0, 1))
        ys = sample_set(rng, C, t, 1000)
        for _ in range(20):
            x = geo.project(C, t, rng.normal(scale=4.0, size=n))
            act = list(geo.active_set(C, t, x).indices)
            weights = rng.exponential(size=len(act))
            w = weights @ C.normals[act] if act else np.zeros(n)
            _, res = geo.normal_decompose(C, t, x, w)
            if res > 1e-12:
                continue
            worst = max(worst, float(((ys - x) @ w).max()))
            pairs += 1
    verdict(acceptance_log, 8, worst <= 1e-8, f"{pairs} (x, w) pairs x 1000 points, max <w, y - x> {worst:.2e}")


def test_criterion_09_mesh_convergence(acceptance_log):
    alpha = -3.0
    P = example_problem(alpha)
    ok = True
    notes = []
    for name in STRATEGIES:
        law = strategy_law(name, alpha)
        exact = CLOSED_FORM[name](alpha)
        errs = [abs(mayer_cost(P, integrate(P, law, k, recover=False)) - exact) for k in (500, 1000, 2000)]
        ratios = [b / a if a > 0 else math.nan for a, b in zip(errs, errs[1:])]
        good = all(0.3 <= r <= 0.7 for r in ratios)  # nan fails: no shrinkage to measure
        ok &= good
        notes.append(f"{name} errors {', '.join(f'{e:.1e}' for e in errs)} ratios {', '.join(f'{r:.2f}' for r in ratios)}")
    verdict(acceptance_log, 9, ok, "; ".join(notes))


def test_criterion_10_determinism(tmp_path, acceptance_log):
    spec = specfile.bundled_example_path()
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run / "report.json"
        code = cli.main(["optimize", spec, "--steps", "1000", "--seed", "7", "--out", str(out)])
        assert code == 0
        outs.append(out)
    reports = [json.loads(o.read_text()) for o in outs]
    same_json = cli.canonical_bytes(reports[0]) == cli.canonical_bytes(reports[1])
    same_csv = outs[0].with_suffix(".csv").read_bytes() == outs[1].with_suffix(".csv").read_bytes()
    stamps_differ = reports[0]["volatile"]["timestamp"] != reports[1]["volatile"]["timestamp"]
    verdict(
        acceptance_log, 10, same_json and same_csv,
        f"report bytes identical {same_json}, csv identical {same_csv}, timestamps differ {stamps_differ}",
    )
