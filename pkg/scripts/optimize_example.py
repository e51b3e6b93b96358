"""Optimize the example at one alpha, refine, and certify the result."""
import argparse
import time

from sweepopt.certificates import check_certificate, solve_multipliers
from sweepopt.optimizer import OptimizerConfig, optimize, refine
from sweepopt.sweeping import integrate
from sweepopt.switching_example import CLOSED_FORM, STRATEGIES, example_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alpha", type=float, default=-3.0)
    ap.add_argument("--segments", type=int, default=3)
    ap.add_argument("--steps", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    P = example_problem(args.alpha)
    start = time.perf_counter()
    res = optimize(P, OptimizerConfig(segments=args.segments, k=args.steps, seed=args.seed))
    print(f"optimize: J={res.J:.6f} T={res.T:.4f} switch={res.main_switch()} ({time.perf_counter() - start:.1f} s,"
          f" {res.evaluations} evaluations)")
    print("levels:", res.law.levels.ravel().round(4).tolist(), "breakpoints:", res.law.breakpoints.round(4).tolist())
    fine = refine(P, res, 2 * args.steps)
    print(f"refine to k={fine.k}: J={fine.J:.6f} delta_J={fine.delta_J:.2e}")

    known = {name: CLOSED_FORM[name](args.alpha) for name in STRATEGIES}
    best = min((v, k) for k, v in known.items() if v is not None)
    print(f"best closed form: {best[1]} J={best[0]:.6f}")

    traj = integrate(P, fine.law, fine.k)
    rep = check_certificate(P, traj, solve_multipliers(P, traj))
    print(f"certificate ok={rep.ok} violations={rep.violations} maximization gap={rep.maximization_resid:.2e}")


if __name__ == "__main__":
    main()
